#pragma once

#include <cstdint>
#include <vector>

#include "adkd/datasets.hpp"
#include "adkd/pretrain.hpp"

namespace adkd {

struct ScoreSet {
    std::vector<double> normal;
    std::vector<double> anomaly;
};

// Probability that an anomaly outranks a normal sample; ties count one half.
// Computed via sorted midranks in O((n+m) log(n+m)).
double auroc(const ScoreSet& scores);

struct ProbeConfig {
    float lr = 1e-2f;
    int epochs = 50;
    int batch_size = 64;
    std::uint64_t seed = 0;
};

struct ProbeResult {
    double accuracy = 0.0;
    int class_count = 0;
    std::uint64_t trunk_param_hash = 0;
};

// Trains only a linear head on fixed feature vectors.
ProbeResult train_linear_probe_on_features(const Tensor& train_features,
                                           const std::vector<int>& train_labels,
                                           const Tensor& test_features,
                                           const std::vector<int>& test_labels,
                                           const ProbeConfig& cfg);

// Linear head over the teacher's frozen trunk features.
ProbeResult linear_probe(const Teacher& teacher, const LabeledDataset& train,
                         const LabeledDataset& test, const ProbeConfig& cfg);

// Standard product-moment correlation; zero variance in either input is a
// DegenerateVarianceError.
double pearson_corr(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace adkd
