#include "adkd/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "adkd/brittleness.hpp"
#include "adkd/metrics.hpp"
#include "adkd/shallow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace adkd {

namespace {

const std::vector<std::string> kKnownDetectors = {"kd", "mse", "mahalanobis_diag",
                                                  "mahalanobis_full"};

AuxTask parse_task(const json& j, std::uint64_t master_seed, const std::string& name) {
    AuxTask task;
    task.variant = aux_variant_from_string(j.at("task").get<std::string>());
    task.train.seed = representation_seed(master_seed, name);
    if (j.contains("epochs")) task.train.epochs = j["epochs"].get<int>();
    if (j.contains("lr")) task.train.lr = j["lr"].get<float>();
    if (j.contains("batch_size")) task.train.batch_size = j["batch_size"].get<int>();
    if (j.contains("sigma")) task.sigma = j["sigma"].get<float>();
    if (j.contains("temperature")) task.temperature = j["temperature"].get<float>();
    return task;
}

}  // namespace

std::uint64_t representation_seed(std::uint64_t master_seed, const std::string& name) {
    return fnv1a64(name.data(), name.size(), master_seed ^ 0x517cc1b727220a95ULL);
}

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    if (!j.contains("seed")) throw ArgumentError("config: missing required key 'seed'");
    cfg.master_seed = j["seed"].get<std::uint64_t>();

    if (!j.contains("dataset")) throw ArgumentError("config: missing 'dataset' section");
    const json& ds = j["dataset"];
    if (ds.contains("synthetic")) {
        const json& s = ds["synthetic"];
        cfg.synthetic.classes = s.value("classes", 3);
        cfg.synthetic.samples_per_class = s.value("samples_per_class", 100);
        cfg.synthetic.image_size = s.value("image_size", 16);
        cfg.synthetic.noise = s.value("noise", 0.02f);
        cfg.synthetic.seed =
            s.contains("seed") ? s["seed"].get<std::uint64_t>()
                               : fnv1a64("dataset", 7, cfg.master_seed);
        if (s.contains("families"))
            cfg.synthetic.families = s["families"].get<std::vector<std::string>>();
    } else if (ds.contains("idx")) {
        cfg.use_idx = true;
        cfg.idx_images = ds["idx"].at("images").get<std::string>();
        cfg.idx_labels = ds["idx"].at("labels").get<std::string>();
        cfg.dataset_name = fs::path(cfg.idx_images).stem().string();
    } else {
        throw ArgumentError("config: dataset must contain 'synthetic' or 'idx'");
    }

    if (!j.contains("split")) throw ArgumentError("config: missing 'split' section");
    const json& sp = j["split"];
    cfg.mode = split_mode_from_string(sp.at("mode").get<std::string>());
    cfg.class_id = sp.at("class_id").get<int>();
    cfg.test_fraction = sp.value("test_fraction", 0.3);
    cfg.balanced = sp.value("balanced", false);
    cfg.anomaly_class_id = sp.value("anomaly_class_id", -1);
    cfg.anomaly_pool_fraction = sp.value("anomaly_pool_fraction", 0.3);

    if (!j.contains("representations") || !j["representations"].is_array() ||
        j["representations"].empty()) {
        throw ArgumentError("config: 'representations' must be a non-empty list");
    }
    std::set<std::string> names;
    for (const json& r : j["representations"]) {
        RepresentationSpec spec;
        spec.name = r.contains("name") ? r["name"].get<std::string>()
                                       : r.at("task").get<std::string>();
        if (!names.insert(spec.name).second) {
            throw ArgumentError("config: duplicate representation name '" + spec.name + "'");
        }
        spec.task = parse_task(r, cfg.master_seed, spec.name);
        cfg.representations.push_back(std::move(spec));
    }

    if (!j.contains("detectors") || !j["detectors"].is_array() || j["detectors"].empty()) {
        throw ArgumentError("config: 'detectors' must be a non-empty list");
    }
    for (const json& d : j["detectors"]) {
        const std::string name = d.get<std::string>();
        if (std::find(kKnownDetectors.begin(), kKnownDetectors.end(), name) ==
            kKnownDetectors.end()) {
            throw ArgumentError("config: unknown detector '" + name + "'");
        }
        cfg.detectors.push_back(name);
    }

    if (j.contains("distill")) {
        const json& d = j["distill"];
        cfg.distill.lr = d.value("lr", 1e-5f);
        cfg.distill.epochs = d.value("epochs", 20);
        cfg.distill.batch_size = d.value("batch_size", 32);
    }
    cfg.probe = j.value("probe", false);
    cfg.brittleness = j.value("brittleness", false);
    cfg.proj_dim = j.value("proj_dim", 32);
    cfg.out_dir = j.value("out_dir", std::string("out"));
    cfg.jobs = j.value("jobs", 1);
    if (cfg.jobs < 1) throw ArgumentError("config: jobs must be >= 1");
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ArgumentError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// Stratified 70/30 split of the full dataset for the linear probe, so the
// train/test label sets always agree.
void probe_split(const LabeledDataset& ds, std::uint64_t seed, std::vector<int>& train,
                 std::vector<int>& test) {
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (int i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    Rng rng(seed);
    for (auto& cls : by_class) {
        for (std::size_t i = cls.size(); i > 1; --i)
            std::swap(cls[i - 1], cls[rng.next_below(i)]);
        const std::size_t n_test = std::max<std::size_t>(1, cls.size() * 3 / 10);
        for (std::size_t i = 0; i < cls.size(); ++i) {
            (i < n_test ? test : train).push_back(cls[i]);
        }
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
}

struct RepOutcome {
    std::vector<ResultRow> rows;
};

std::vector<double> teacher_feature_scores(const Teacher& teacher,
                                           const Tensor& train_images,
                                           const Tensor& test_images,
                                           const std::string& detector) {
    Tensor train_feats = teacher.represent(train_images);
    Tensor test_feats = teacher.represent(test_images);
    const int d = test_feats.dim(1);
    const CovarianceMode mode = detector == "mahalanobis_diag" ? CovarianceMode::Diag
                                                               : CovarianceMode::Full;
    GaussianStats stats = fit_gaussian_stats(
        train_feats, detector == "mse" ? CovarianceMode::Diag : mode);
    std::vector<double> scores;
    const int n = test_feats.dim(0);
    for (int i = 0; i < n; ++i) {
        auto z = test_feats.data().subspan(static_cast<std::size_t>(i) * d,
                                           static_cast<std::size_t>(d));
        if (detector == "mse") {
            scores.push_back(mse_center_score(stats, z));
        } else {
            scores.push_back(mahalanobis_score(stats, z, mode));
        }
    }
    return scores;
}

RepOutcome run_representation(const ExperimentConfig& cfg, const PreparedData& in,
                              const RepresentationSpec& rep) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t rep_seed = representation_seed(cfg.master_seed, rep.name);
    const Shape input_shape{in.ds.images.dim(1), in.ds.images.dim(2), in.ds.images.dim(3)};

    // Teacher: load when a checkpoint exists, otherwise pre-train and save.
    const fs::path teacher_path = fs::path(cfg.out_dir) / ("teacher_" + rep.name + ".ckpt");
    Teacher teacher;
    if (fs::exists(teacher_path)) {
        LoadedCheckpoint c = load_checkpoint(
            teacher_path.string(),
            architecture_fingerprint(default_encoder_specs(cfg.proj_dim), input_shape));
        c.model.freeze();
        teacher.model = std::move(c.model);
        teacher.variant = rep.task.variant;
        teacher.task_name = c.provenance.task;
        teacher.seed = c.provenance.seed;
        teacher.epochs = c.provenance.epochs;
    } else {
        PretrainResult pr =
            pretrain_task(rep.task, in.train_view, in.anomaly_pool, input_shape, cfg.proj_dim);
        teacher = std::move(pr.teacher);
        Provenance prov{teacher.task_name, teacher.seed, teacher.epochs};
        save_checkpoint(teacher.model, prov, teacher_path.string());
    }

    // Student: same treatment.
    const fs::path student_path = fs::path(cfg.out_dir) / ("student_" + rep.name + ".ckpt");
    StudentTeacherPair pair;
    if (fs::exists(student_path)) {
        LoadedCheckpoint c =
            load_checkpoint(student_path.string(), teacher.model.fingerprint());
        pair = StudentTeacherPair::pair_up(std::move(c.model), teacher);
    } else {
        pair = StudentTeacherPair::make(teacher, fnv1a64("student", 7, rep_seed));
        DistillConfig dcfg = cfg.distill;
        dcfg.seed = rep_seed;
        train_student(pair, in.train_view, dcfg);
        Provenance prov{"student_" + rep.name, rep_seed, cfg.distill.epochs};
        save_checkpoint(pair.student, prov, student_path.string());
    }

    std::optional<double> probe_acc;
    if (cfg.probe) {
        std::vector<int> ptrain, ptest;
        probe_split(in.ds, fnv1a64("probe_split", 11, cfg.master_seed), ptrain, ptest);
        ProbeConfig pcfg;
        pcfg.seed = fnv1a64("probe", 5, rep_seed);
        probe_acc = linear_probe(teacher, subset_dataset(in.ds, ptrain, "probe_train"),
                                 subset_dataset(in.ds, ptest, "probe_test"), pcfg)
                        .accuracy;
    }

    std::optional<double> avg_l2;
    if (cfg.brittleness) {
        avg_l2 = brittleness_score(pair, in.train_view.images).score;
    }

    RepOutcome out;
    for (const std::string& detector : cfg.detectors) {
        ScoreSet scores;
        if (detector == "kd") {
            scores.normal = kd_scores(pair, in.test_normal);
            scores.anomaly = kd_scores(pair, in.test_anomaly);
        } else {
            scores.normal = teacher_feature_scores(teacher, in.train_view.images,
                                                   in.test_normal, detector);
            scores.anomaly = teacher_feature_scores(teacher, in.train_view.images,
                                                    in.test_anomaly, detector);
        }
        ResultRow row;
        row.dataset = cfg.dataset_name;
        row.representation = rep.name;
        row.detector = detector;
        row.auroc = auroc(scores);
        row.avg_l2_norm = avg_l2;
        row.probe_accuracy = probe_acc;
        row.seed = rep_seed;
        out.rows.push_back(std::move(row));
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    for (auto& r : out.rows) r.wall_time_seconds = secs;
    return out;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) {
    LabeledDataset ds = cfg.use_idx ? load_idx(cfg.idx_images, cfg.idx_labels)
                                    : generate_synthetic(cfg.synthetic);
    SplitPlan plan = build_split(ds, cfg.mode, cfg.class_id, cfg.test_fraction,
                                 fnv1a64("split", 5, cfg.master_seed), cfg.balanced,
                                 cfg.anomaly_class_id);

    // Carve a training-only anomaly pool off the front of the (already
    // shuffled, then sorted) anomaly list; evaluation anomalies are the rest.
    std::vector<int> anomalies = plan.test_anomaly;
    Rng pool_rng(fnv1a64("pool", 4, cfg.master_seed));
    for (std::size_t i = anomalies.size(); i > 1; --i)
        std::swap(anomalies[i - 1], anomalies[pool_rng.next_below(i)]);
    std::size_t n_pool = static_cast<std::size_t>(
        cfg.anomaly_pool_fraction * static_cast<double>(anomalies.size()));
    n_pool = std::min(n_pool, anomalies.size() - 1);
    std::vector<int> pool_idx(anomalies.begin(),
                              anomalies.begin() + static_cast<std::ptrdiff_t>(n_pool));
    std::vector<int> eval_idx(anomalies.begin() + static_cast<std::ptrdiff_t>(n_pool),
                              anomalies.end());
    std::sort(pool_idx.begin(), pool_idx.end());
    std::sort(eval_idx.begin(), eval_idx.end());
    plan.test_anomaly = eval_idx;

    PreparedData out;
    out.train_view = plan.train_normal_view(ds);
    out.anomaly_pool = pool_idx.empty() ? Tensor{} : gather_images(ds, pool_idx);
    out.test_normal = plan.test_normal_images(ds);
    out.test_anomaly = plan.test_anomaly_images(ds);
    out.ds = std::move(ds);
    out.plan = std::move(plan);
    return out;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    PreparedData inputs = prepare_data(cfg);

    std::vector<RepOutcome> outcomes(cfg.representations.size());
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&](std::size_t idx) {
        try {
            outcomes[idx] = run_representation(cfg, inputs, cfg.representations[idx]);
        } catch (...) {
            std::lock_guard<std::mutex> lk(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };

    if (cfg.jobs <= 1 || cfg.representations.size() <= 1) {
        for (std::size_t i = 0; i < cfg.representations.size(); ++i) work(i);
    } else {
        std::vector<std::thread> threads;
        std::size_t next = 0;
        std::mutex next_mutex;
        const int n_threads =
            std::min<int>(cfg.jobs, static_cast<int>(cfg.representations.size()));
        for (int t = 0; t < n_threads; ++t) {
            threads.emplace_back([&] {
                for (;;) {
                    std::size_t idx;
                    {
                        std::lock_guard<std::mutex> lk(next_mutex);
                        if (next >= cfg.representations.size()) return;
                        idx = next++;
                    }
                    work(idx);
                }
            });
        }
        for (auto& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<ResultRow> rows;
    for (auto& o : outcomes)
        for (auto& r : o.rows) rows.push_back(std::move(r));
    return rows;
}

std::string format_results_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    os << "dataset,representation,detector,auroc,avg_l2_norm,probe_accuracy,seed,"
          "wall_time_seconds\n";
    for (const auto& r : rows) {
        os << r.dataset << ',' << r.representation << ',' << r.detector << ','
           << fmt_double(r.auroc) << ','
           << (r.avg_l2_norm ? fmt_double(*r.avg_l2_norm) : "") << ','
           << (r.probe_accuracy ? fmt_double(*r.probe_accuracy) : "") << ',' << r.seed
           << ',' << fmt_double(r.wall_time_seconds) << '\n';
    }
    return os.str();
}

void emit_report(const std::vector<ResultRow>& rows, const std::string& out_dir) {
    if (rows.empty()) throw ArgumentError("emit_report: no result rows");
    fs::create_directories(out_dir);
    {
        std::ofstream os(fs::path(out_dir) / "results.csv");
        if (!os) throw FormatError("cannot write results.csv under " + out_dir);
        os << format_results_csv(rows);
    }

    // One scatter line per representation pairing the detectors of interest.
    struct Point {
        std::optional<double> maha, kd, l2, probe;
    };
    std::vector<std::string> order;
    std::map<std::string, Point> points;
    for (const auto& r : rows) {
        if (!points.count(r.representation)) order.push_back(r.representation);
        Point& p = points[r.representation];
        if (r.detector == "kd") p.kd = r.auroc;
        if (r.detector == "mahalanobis_full") p.maha = r.auroc;
        if (r.avg_l2_norm) p.l2 = r.avg_l2_norm;
        if (r.probe_accuracy) p.probe = r.probe_accuracy;
    }
    {
        std::ofstream os(fs::path(out_dir) / "scatter.csv");
        if (!os) throw FormatError("cannot write scatter.csv under " + out_dir);
        os << "representation,mahalanobis_full_auroc,kd_auroc,avg_l2_norm,probe_accuracy\n";
        for (const auto& name : order) {
            const Point& p = points[name];
            os << name << ',' << (p.maha ? fmt_double(*p.maha) : "") << ','
               << (p.kd ? fmt_double(*p.kd) : "") << ','
               << (p.l2 ? fmt_double(*p.l2) : "") << ','
               << (p.probe ? fmt_double(*p.probe) : "") << '\n';
        }
    }
    {
        std::ofstream os(fs::path(out_dir) / "correlations.txt");
        if (!os) throw FormatError("cannot write correlations.txt under " + out_dir);
        auto corr_line = [&](const std::string& label, auto getter) {
            std::vector<double> xs, ys;
            for (const auto& name : order) {
                const Point& p = points[name];
                auto v = getter(p);
                if (p.kd && v) {
                    xs.push_back(*v);
                    ys.push_back(*p.kd);
                }
            }
            os << label << " = ";
            if (xs.size() < 2) {
                os << "n/a (fewer than 2 points)\n";
                return;
            }
            try {
                os << fmt_double(pearson_corr(xs, ys)) << '\n';
            } catch (const DegenerateVarianceError&) {
                os << "n/a (degenerate variance)\n";
            }
        };
        corr_line("rho(kd_auroc, mahalanobis_full_auroc)",
                  [](const Point& p) { return p.maha; });
        corr_line("rho(kd_auroc, avg_l2_norm)", [](const Point& p) { return p.l2; });
        corr_line("rho(kd_auroc, probe_accuracy)", [](const Point& p) { return p.probe; });
    }
}

std::vector<ResultRow> parse_results_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty results file: " + path);
    std::vector<ResultRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        while (fields.size() < 8) fields.emplace_back();
        ResultRow r;
        r.dataset = fields[0];
        r.representation = fields[1];
        r.detector = fields[2];
        r.auroc = std::stod(fields[3]);
        if (!fields[4].empty()) r.avg_l2_norm = std::stod(fields[4]);
        if (!fields[5].empty()) r.probe_accuracy = std::stod(fields[5]);
        r.seed = std::stoull(fields[6]);
        if (!fields[7].empty()) r.wall_time_seconds = std::stod(fields[7]);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace adkd
