#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adkd/datasets.hpp"
#include "adkd/distill.hpp"
#include "adkd/pretrain.hpp"

namespace adkd {

struct RepresentationSpec {
    std::string name;
    AuxTask task;
};

struct ExperimentConfig {
    // dataset
    bool use_idx = false;
    SyntheticConfig synthetic;
    std::string idx_images, idx_labels;
    std::string dataset_name = "synthetic";
    // split
    SplitMode mode = SplitMode::Unimodal;
    int class_id = 0;
    int anomaly_class_id = -1;
    double test_fraction = 0.3;
    bool balanced = false;
    // fraction of anomalies reserved as a training-only pool for the
    // supervised baseline; these never reach evaluation
    double anomaly_pool_fraction = 0.3;

    std::vector<RepresentationSpec> representations;
    std::vector<std::string> detectors;  // kd, mse, mahalanobis_diag, mahalanobis_full
    DistillConfig distill;
    bool probe = false;
    bool brittleness = false;
    int proj_dim = 32;
    std::uint64_t master_seed = 0;
    std::string out_dir = "out";
    int jobs = 1;
};

// Parses and validates the JSON experiment config; throws ArgumentError with
// the offending key on any schema violation.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

struct ResultRow {
    std::string dataset;
    std::string representation;
    std::string detector;
    double auroc = 0.0;
    std::optional<double> avg_l2_norm;
    std::optional<double> probe_accuracy;
    std::uint64_t seed = 0;
    double wall_time_seconds = 0.0;
};

// Deterministic per-representation seed derived from the master seed.
std::uint64_t representation_seed(std::uint64_t master_seed, const std::string& name);

// Dataset plus split products shared by every representation pipeline. The
// anomaly pool is training-only (supervised baseline); evaluation anomalies
// are disjoint from it.
struct PreparedData {
    LabeledDataset ds;
    SplitPlan plan;
    NormalView train_view;
    Tensor anomaly_pool;
    Tensor test_normal;
    Tensor test_anomaly;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

// Pre-train (or load) each teacher, distill a student, score the test split
// with every requested detector, and optionally probe and measure
// brittleness. Checkpoints land in cfg.out_dir and are reused when present.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg);

// Writes results.csv, scatter.csv, and correlations.txt under out_dir.
void emit_report(const std::vector<ResultRow>& rows, const std::string& out_dir);

std::vector<ResultRow> parse_results_csv(const std::string& path);
std::string format_results_csv(const std::vector<ResultRow>& rows);

}  // namespace adkd
