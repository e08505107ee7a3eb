#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "adkd/brittleness.hpp"
#include "adkd/metrics.hpp"
#include "adkd/runner.hpp"

namespace fs = std::filesystem;
using namespace adkd;

namespace {

struct CommonOpts {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* sub, CommonOpts& opts, bool config_required = true) {
    auto* c = sub->add_option("--config", opts.config, "experiment config (JSON)");
    if (config_required) c->required();
    sub->add_option("--seed", opts.seed, "override the master seed");
    sub->add_option("--out", opts.out, "override the output directory");
}

ExperimentConfig load_cfg(const CommonOpts& opts) {
    ExperimentConfig cfg = parse_config_file(opts.config);
    if (opts.seed) cfg.master_seed = *opts.seed;
    if (opts.out) cfg.out_dir = *opts.out;
    return cfg;
}

fs::path teacher_path(const ExperimentConfig& cfg, const std::string& name) {
    return fs::path(cfg.out_dir) / ("teacher_" + name + ".ckpt");
}
fs::path student_path(const ExperimentConfig& cfg, const std::string& name) {
    return fs::path(cfg.out_dir) / ("student_" + name + ".ckpt");
}

Shape sample_shape(const PreparedData& data) {
    return {data.ds.images.dim(1), data.ds.images.dim(2), data.ds.images.dim(3)};
}

Teacher load_teacher(const ExperimentConfig& cfg, const RepresentationSpec& rep,
                     const Shape& input_shape) {
    const fs::path path = teacher_path(cfg, rep.name);
    if (!fs::exists(path)) {
        throw ArgumentError("teacher checkpoint not found: " + path.string());
    }
    LoadedCheckpoint c = load_checkpoint(
        path.string(),
        architecture_fingerprint(default_encoder_specs(cfg.proj_dim), input_shape));
    c.model.freeze();
    Teacher t;
    t.model = std::move(c.model);
    t.variant = rep.task.variant;
    t.task_name = c.provenance.task;
    t.seed = c.provenance.seed;
    t.epochs = c.provenance.epochs;
    return t;
}

StudentTeacherPair load_pair(const ExperimentConfig& cfg, const RepresentationSpec& rep,
                             const Shape& input_shape) {
    Teacher teacher = load_teacher(cfg, rep, input_shape);
    const fs::path path = student_path(cfg, rep.name);
    if (!fs::exists(path)) {
        throw ArgumentError("student checkpoint not found: " + path.string());
    }
    LoadedCheckpoint c = load_checkpoint(path.string(), teacher.model.fingerprint());
    return StudentTeacherPair::pair_up(std::move(c.model), std::move(teacher));
}

int cmd_pretrain(const CommonOpts& opts) {
    ExperimentConfig cfg = load_cfg(opts);
    fs::create_directories(cfg.out_dir);
    PreparedData data = prepare_data(cfg);
    const Shape input_shape = sample_shape(data);
    for (const auto& rep : cfg.representations) {
        const fs::path path = teacher_path(cfg, rep.name);
        if (fs::exists(path)) {
            std::cout << rep.name << ": checkpoint exists, skipping\n";
            continue;
        }
        PretrainResult pr = pretrain_task(rep.task, data.train_view, data.anomaly_pool,
                                          input_shape, cfg.proj_dim);
        Provenance prov{pr.teacher.task_name, pr.teacher.seed, pr.teacher.epochs};
        save_checkpoint(pr.teacher.model, prov, path.string());
        std::cout << rep.name << ": teacher saved to " << path.string() << '\n';
    }
    return 0;
}

int cmd_distill(const CommonOpts& opts) {
    ExperimentConfig cfg = load_cfg(opts);
    fs::create_directories(cfg.out_dir);
    PreparedData data = prepare_data(cfg);
    const Shape input_shape = sample_shape(data);
    for (const auto& rep : cfg.representations) {
        const fs::path path = student_path(cfg, rep.name);
        if (fs::exists(path)) {
            std::cout << rep.name << ": checkpoint exists, skipping\n";
            continue;
        }
        Teacher teacher = load_teacher(cfg, rep, input_shape);
        const std::uint64_t rep_seed = representation_seed(cfg.master_seed, rep.name);
        StudentTeacherPair pair =
            StudentTeacherPair::make(teacher, fnv1a64("student", 7, rep_seed));
        DistillConfig dcfg = cfg.distill;
        dcfg.seed = rep_seed;
        std::vector<double> losses = train_student(pair, data.train_view, dcfg);
        Provenance prov{"student_" + rep.name, rep_seed, cfg.distill.epochs};
        save_checkpoint(pair.student, prov, path.string());
        std::cout << rep.name << ": student saved, final loss " << losses.back() << '\n';
    }
    return 0;
}

int cmd_score(const CommonOpts& opts) {
    ExperimentConfig cfg = load_cfg(opts);
    fs::create_directories(cfg.out_dir);
    PreparedData data = prepare_data(cfg);
    const Shape input_shape = sample_shape(data);
    for (const auto& rep : cfg.representations) {
        StudentTeacherPair pair = load_pair(cfg, rep, input_shape);
        std::vector<double> normal = kd_scores(pair, data.test_normal);
        std::vector<double> anomaly = kd_scores(pair, data.test_anomaly);
        const fs::path path = fs::path(cfg.out_dir) / ("scores_" + rep.name + ".csv");
        std::ofstream os(path);
        if (!os) throw FormatError("cannot write " + path.string());
        os << "kind,index,score\n";
        char buf[40];
        for (std::size_t i = 0; i < normal.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.10g", normal[i]);
            os << "normal," << i << ',' << buf << '\n';
        }
        for (std::size_t i = 0; i < anomaly.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.10g", anomaly[i]);
            os << "anomaly," << i << ',' << buf << '\n';
        }
        std::cout << rep.name << ": scores written to " << path.string() << '\n';
    }
    return 0;
}

int cmd_eval(const CommonOpts& opts) {
    ExperimentConfig cfg = load_cfg(opts);
    PreparedData data = prepare_data(cfg);
    const Shape input_shape = sample_shape(data);
    // Evaluation refuses to train: every checkpoint must already exist.
    for (const auto& rep : cfg.representations) {
        load_pair(cfg, rep, input_shape);
    }
    std::vector<ResultRow> rows = run_experiment(cfg);
    emit_report(rows, cfg.out_dir);
    std::cout << format_results_csv(rows);
    return 0;
}

int cmd_brittleness(const CommonOpts& opts) {
    ExperimentConfig cfg = load_cfg(opts);
    fs::create_directories(cfg.out_dir);
    PreparedData data = prepare_data(cfg);
    const Shape input_shape = sample_shape(data);
    const fs::path path = fs::path(cfg.out_dir) / "brittleness.txt";
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    for (const auto& rep : cfg.representations) {
        StudentTeacherPair pair = load_pair(cfg, rep, input_shape);
        BrittlenessReport r = brittleness_score(pair, data.train_view.images);
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s numerator=%.10g denominator=%.10g score=%.10g",
                      rep.name.c_str(), r.numerator, r.denominator, r.score);
        os << buf << '\n';
        std::cout << buf << '\n';
    }
    return 0;
}

int cmd_run(const CommonOpts& opts, std::optional<int> jobs) {
    ExperimentConfig cfg = load_cfg(opts);
    if (jobs) cfg.jobs = *jobs;
    std::vector<ResultRow> rows = run_experiment(cfg);
    emit_report(rows, cfg.out_dir);
    std::cout << "wrote " << rows.size() << " result rows to " << cfg.out_dir << '\n';
    return 0;
}

int cmd_report(const CommonOpts& opts, const std::string& results) {
    std::string in_path = results;
    if (in_path.empty()) {
        ExperimentConfig cfg = load_cfg(opts);
        in_path = (fs::path(cfg.out_dir) / "results.csv").string();
    }
    std::vector<ResultRow> rows = parse_results_csv(in_path);
    std::string out_dir = opts.out ? *opts.out : fs::path(in_path).parent_path().string();
    if (out_dir.empty()) out_dir = ".";
    emit_report(rows, out_dir);
    std::cout << "report written to " << out_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"teacher-student anomaly detection toolkit"};
    app.require_subcommand(1);

    CommonOpts pretrain_o, distill_o, score_o, eval_o, brittle_o, run_o, report_o;
    std::optional<int> jobs;
    std::string results_path;

    add_common(app.add_subcommand("pretrain", "pre-train teachers"), pretrain_o);
    add_common(app.add_subcommand("distill", "distill students from saved teachers"),
               distill_o);
    add_common(app.add_subcommand("score", "write per-sample distillation scores"),
               score_o);
    add_common(app.add_subcommand("eval", "evaluate saved checkpoints, no training"),
               eval_o);
    add_common(app.add_subcommand("brittleness", "brittleness diagnostic per pair"),
               brittle_o);
    auto* run_sub = app.add_subcommand("run", "full pipeline: pretrain, distill, report");
    add_common(run_sub, run_o);
    run_sub->add_option("--jobs", jobs, "parallel representation pipelines");
    auto* report_sub = app.add_subcommand("report", "regenerate report files from results.csv");
    add_common(report_sub, report_o, false);
    report_sub->add_option("--results", results_path, "path to an existing results.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (app.got_subcommand("pretrain")) return cmd_pretrain(pretrain_o);
        if (app.got_subcommand("distill")) return cmd_distill(distill_o);
        if (app.got_subcommand("score")) return cmd_score(score_o);
        if (app.got_subcommand("eval")) return cmd_eval(eval_o);
        if (app.got_subcommand("brittleness")) return cmd_brittleness(brittle_o);
        if (app.got_subcommand("run")) return cmd_run(run_o, jobs);
        if (app.got_subcommand("report")) {
            if (results_path.empty() && report_o.config.empty()) {
                throw ArgumentError("report needs --results or --config");
            }
            return cmd_report(report_o, results_path);
        }
    } catch (const HygieneError& e) {
        std::cerr << "hygiene error: " << e.what() << '\n';
        return 5;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return 3;
    } catch (const CompatibilityError& e) {
        std::cerr << "compatibility error: " << e.what() << '\n';
        return 6;
    } catch (const StateError& e) {
        std::cerr << "state error: " << e.what() << '\n';
        return 6;
    } catch (const DimensionError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
