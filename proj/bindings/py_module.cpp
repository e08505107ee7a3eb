#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>

#include "adkd/brittleness.hpp"
#include "adkd/datasets.hpp"
#include "adkd/distill.hpp"
#include "adkd/metrics.hpp"
#include "adkd/pretrain.hpp"
#include "adkd/runner.hpp"
#include "adkd/shallow.hpp"

namespace py = pybind11;
using namespace adkd;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const FloatArray& a) {
    Shape shape(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<int>(a.shape(i));
    std::vector<float> data(a.data(), a.data() + a.size());
    return Tensor::from_data(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
    if (!t.defined()) return py::array_t<float>(std::vector<py::ssize_t>{0});
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> a(shape);
    std::memcpy(a.mutable_data(), t.data().data(), t.numel() * sizeof(float));
    return a;
}

std::vector<float> span_from_array(const FloatArray& a) {
    return std::vector<float>(a.data(), a.data() + a.size());
}

TrainConfig train_config(int epochs, float lr, int batch_size, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.lr = lr;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "anomaly detection by knowledge-distillation gap: core operations";

    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<CompatibilityError>(m, "CompatibilityError", PyExc_ValueError);
    py::register_exception<HygieneError>(m, "HygieneError", PyExc_RuntimeError);
    py::register_exception<DegenerateVarianceError>(m, "DegenerateVarianceError",
                                                    PyExc_ArithmeticError);

    py::class_<LabeledDataset>(m, "LabeledDataset")
        .def_property_readonly(
            "images", [](const LabeledDataset& d) { return array_from_tensor(d.images); })
        .def_readonly("labels", &LabeledDataset::labels)
        .def_readonly("num_classes", &LabeledDataset::num_classes)
        .def_readonly("name", &LabeledDataset::name)
        .def("__len__", &LabeledDataset::size);

    py::class_<NormalView>(m, "NormalView")
        .def_property_readonly(
            "images", [](const NormalView& v) { return array_from_tensor(v.images); })
        .def_readonly("labels", &NormalView::labels)
        .def_readonly("num_classes", &NormalView::num_classes);

    py::class_<SplitPlan>(m, "SplitPlan")
        .def_readonly("train_normal", &SplitPlan::train_normal)
        .def_readonly("test_normal", &SplitPlan::test_normal)
        .def_readonly("test_anomaly", &SplitPlan::test_anomaly)
        .def("is_anomaly_label", &SplitPlan::is_anomaly_label)
        .def("train_normal_view", &SplitPlan::train_normal_view)
        .def("test_normal_images",
             [](const SplitPlan& p, const LabeledDataset& ds) {
                 return array_from_tensor(p.test_normal_images(ds));
             })
        .def("test_anomaly_images", [](const SplitPlan& p, const LabeledDataset& ds) {
            return array_from_tensor(p.test_anomaly_images(ds));
        });

    py::class_<Teacher>(m, "Teacher")
        .def_readonly("task_name", &Teacher::task_name)
        .def_readonly("seed", &Teacher::seed)
        .def_readonly("epochs", &Teacher::epochs)
        .def("represent",
             [](const Teacher& t, const FloatArray& batch) {
                 return array_from_tensor(t.represent(tensor_from_array(batch)));
             })
        .def("trunk_features", [](const Teacher& t, const FloatArray& batch) {
            return array_from_tensor(t.trunk_features(tensor_from_array(batch)));
        });

    py::class_<PretrainResult>(m, "PretrainResult")
        .def_readonly("teacher", &PretrainResult::teacher)
        .def_readonly("epoch_losses", &PretrainResult::epoch_losses);

    py::class_<StudentTeacherPair>(m, "StudentTeacherPair")
        .def_property_readonly(
            "teacher", [](const StudentTeacherPair& p) { return p.teacher; });

    py::class_<GaussianStats>(m, "GaussianStats")
        .def_readonly("mean", &GaussianStats::mean)
        .def_readonly("cov", &GaussianStats::cov)
        .def_readonly("trace", &GaussianStats::trace)
        .def_readonly("eps", &GaussianStats::eps)
        .def_property_readonly("dim", &GaussianStats::dim);

    py::class_<BrittlenessReport>(m, "BrittlenessReport")
        .def_readonly("numerator", &BrittlenessReport::numerator)
        .def_readonly("denominator", &BrittlenessReport::denominator)
        .def_readonly("score", &BrittlenessReport::score)
        .def_readonly("sample_count", &BrittlenessReport::sample_count);

    py::class_<ProbeResult>(m, "ProbeResult")
        .def_readonly("accuracy", &ProbeResult::accuracy)
        .def_readonly("class_count", &ProbeResult::class_count);

    py::class_<ResultRow>(m, "ResultRow")
        .def_readonly("dataset", &ResultRow::dataset)
        .def_readonly("representation", &ResultRow::representation)
        .def_readonly("detector", &ResultRow::detector)
        .def_readonly("auroc", &ResultRow::auroc)
        .def_readonly("avg_l2_norm", &ResultRow::avg_l2_norm)
        .def_readonly("probe_accuracy", &ResultRow::probe_accuracy)
        .def_readonly("seed", &ResultRow::seed)
        .def_readonly("wall_time_seconds", &ResultRow::wall_time_seconds);

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def_readonly("master_seed", &ExperimentConfig::master_seed)
        .def_readonly("detectors", &ExperimentConfig::detectors)
        .def_readonly("out_dir", &ExperimentConfig::out_dir)
        .def_readonly("jobs", &ExperimentConfig::jobs);

    m.def(
        "generate_synthetic",
        [](int classes, int samples_per_class, int image_size, std::uint64_t seed,
           float noise, const std::vector<std::string>& families) {
            SyntheticConfig cfg;
            cfg.classes = classes;
            cfg.samples_per_class = samples_per_class;
            cfg.image_size = image_size;
            cfg.seed = seed;
            cfg.noise = noise;
            cfg.families = families;
            return generate_synthetic(cfg);
        },
        py::arg("classes") = 3, py::arg("samples_per_class") = 100,
        py::arg("image_size") = 16, py::arg("seed") = 0, py::arg("noise") = 0.02f,
        py::arg("families") = std::vector<std::string>{});

    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));
    m.def("save_idx", &save_idx, py::arg("dataset"), py::arg("images_path"),
          py::arg("labels_path"));

    m.def(
        "build_split",
        [](const LabeledDataset& ds, const std::string& mode, int class_id,
           double test_fraction, std::uint64_t seed, bool balanced, int anomaly_class_id) {
            return build_split(ds, split_mode_from_string(mode), class_id, test_fraction,
                               seed, balanced, anomaly_class_id);
        },
        py::arg("dataset"), py::arg("mode"), py::arg("class_id"),
        py::arg("test_fraction") = 0.3, py::arg("seed") = 0, py::arg("balanced") = false,
        py::arg("anomaly_class_id") = -1);

    m.def(
        "random_teacher",
        [](const std::vector<int>& input_shape, int proj_dim, std::uint64_t seed) {
            return random_teacher(input_shape, proj_dim, seed);
        },
        py::arg("input_shape"), py::arg("proj_dim") = 32, py::arg("seed") = 0);

    m.def(
        "pretrain",
        [](const std::string& task, const NormalView& data,
           std::optional<FloatArray> anomaly_pool, const std::vector<int>& input_shape,
           int epochs, float lr, int batch_size, std::uint64_t seed, float sigma,
           float temperature, int proj_dim) {
            AuxTask aux;
            aux.variant = aux_variant_from_string(task);
            aux.sigma = sigma;
            aux.temperature = temperature;
            aux.train = train_config(epochs, lr, batch_size, seed);
            Tensor pool;
            if (anomaly_pool) pool = tensor_from_array(*anomaly_pool);
            return pretrain_task(aux, data, pool, input_shape, proj_dim);
        },
        py::arg("task"), py::arg("data"), py::arg("anomaly_pool") = std::nullopt,
        py::arg("input_shape") = std::vector<int>{1, 16, 16}, py::arg("epochs") = 10,
        py::arg("lr") = 1e-3f, py::arg("batch_size") = 64, py::arg("seed") = 0,
        py::arg("sigma") = 0.1f, py::arg("temperature") = 0.5f, py::arg("proj_dim") = 32);

    m.def(
        "make_student",
        [](const Teacher& teacher, std::uint64_t student_seed) {
            return StudentTeacherPair::make(teacher, student_seed);
        },
        py::arg("teacher"), py::arg("student_seed"));

    m.def(
        "train_student",
        [](StudentTeacherPair& pair, const NormalView& data, float lr, int epochs,
           int batch_size, std::uint64_t seed) {
            DistillConfig cfg;
            cfg.lr = lr;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.seed = seed;
            return train_student(pair, data, cfg);
        },
        py::arg("pair"), py::arg("data"), py::arg("lr") = 1e-5f, py::arg("epochs") = 20,
        py::arg("batch_size") = 32, py::arg("seed") = 0);

    m.def(
        "kd_scores",
        [](const StudentTeacherPair& pair, const FloatArray& batch) {
            return kd_scores(pair, tensor_from_array(batch));
        },
        py::arg("pair"), py::arg("batch"));

    m.def("aggregate_patch_scores", &aggregate_patch_scores, py::arg("scores"));

    m.def(
        "fit_gaussian_stats",
        [](const FloatArray& features, const std::string& mode) {
            const CovarianceMode cm =
                mode == "diag" ? CovarianceMode::Diag : CovarianceMode::Full;
            if (mode != "diag" && mode != "full") {
                throw ArgumentError("fit_gaussian_stats: mode must be 'full' or 'diag'");
            }
            return fit_gaussian_stats(tensor_from_array(features), cm);
        },
        py::arg("features"), py::arg("mode") = "full");

    m.def(
        "mse_center_score",
        [](const GaussianStats& stats, const FloatArray& z) {
            return mse_center_score(stats, span_from_array(z));
        },
        py::arg("stats"), py::arg("z"));

    m.def(
        "mahalanobis_score",
        [](const GaussianStats& stats, const FloatArray& z) {
            return mahalanobis_score(stats, span_from_array(z), stats.mode);
        },
        py::arg("stats"), py::arg("z"));

    m.def(
        "input_gradient",
        [](const StudentTeacherPair& pair, const FloatArray& x, bool stop_teacher) {
            return array_from_tensor(
                input_gradient(pair, tensor_from_array(x), stop_teacher));
        },
        py::arg("pair"), py::arg("x"), py::arg("stop_teacher") = true);

    m.def(
        "brittleness_score",
        [](const StudentTeacherPair& pair, const FloatArray& normal_train,
           bool stop_teacher) {
            return brittleness_score(pair, tensor_from_array(normal_train), stop_teacher);
        },
        py::arg("pair"), py::arg("normal_train"), py::arg("stop_teacher") = true);

    m.def(
        "auroc",
        [](const std::vector<double>& normal, const std::vector<double>& anomaly) {
            return auroc(ScoreSet{normal, anomaly});
        },
        py::arg("normal"), py::arg("anomaly"));

    m.def("pearson_corr", &pearson_corr, py::arg("xs"), py::arg("ys"));

    m.def(
        "linear_probe",
        [](const Teacher& teacher, const LabeledDataset& train, const LabeledDataset& test,
           float lr, int epochs, int batch_size, std::uint64_t seed) {
            ProbeConfig cfg;
            cfg.lr = lr;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.seed = seed;
            return linear_probe(teacher, train, test, cfg);
        },
        py::arg("teacher"), py::arg("train"), py::arg("test"), py::arg("lr") = 1e-2f,
        py::arg("epochs") = 50, py::arg("batch_size") = 64, py::arg("seed") = 0);

    m.def("parse_config_text", &parse_config_text, py::arg("text"));
    m.def("parse_config_file", &parse_config_file, py::arg("path"));
    m.def("run_experiment", &run_experiment, py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
    m.def("emit_report", &emit_report, py::arg("rows"), py::arg("out_dir"));
    m.def("parse_results_csv", &parse_results_csv, py::arg("path"));
    m.def("format_results_csv", &format_results_csv, py::arg("rows"));
    m.def("representation_seed", &representation_seed, py::arg("master_seed"),
          py::arg("name"));
}
