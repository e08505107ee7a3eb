#include "adkd/distill.hpp"

#include <algorithm>
#include <cmath>

#include "adkd/ops.hpp"
#include "adkd/optim.hpp"

namespace adkd {

StudentTeacherPair StudentTeacherPair::make(const Teacher& teacher,
                                            std::uint64_t student_seed) {
    StudentTeacherPair p;
    p.teacher = teacher;
    // Independent random initialization, not a perturbed teacher copy.
    p.student = Model::build(teacher.model.specs(), teacher.model.input_shape(),
                             student_seed);
    return p;
}

StudentTeacherPair StudentTeacherPair::pair_up(Model student, Teacher teacher) {
    if (student.fingerprint() != teacher.model.fingerprint()) {
        throw CompatibilityError("student and teacher architectures differ");
    }
    StudentTeacherPair p;
    p.student = std::move(student);
    p.teacher = std::move(teacher);
    return p;
}

namespace {

Tensor gather_rows(const Tensor& images, const std::vector<int>& idx) {
    Shape shape = images.shape();
    const std::size_t stride = images.numel() / static_cast<std::size_t>(shape[0]);
    shape[0] = static_cast<int>(idx.size());
    std::vector<float> data;
    data.reserve(idx.size() * stride);
    for (int i : idx) {
        auto src = images.data().subspan(static_cast<std::size_t>(i) * stride, stride);
        data.insert(data.end(), src.begin(), src.end());
    }
    return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace

std::vector<double> train_student(StudentTeacherPair& pair, const NormalView& normal_train,
                                  const DistillConfig& cfg) {
    if (!pair.teacher.model.frozen()) {
        throw StateError("teacher must be frozen before distillation");
    }
    if (pair.student.fingerprint() != pair.teacher.model.fingerprint()) {
        throw CompatibilityError("student and teacher architectures differ");
    }
    if (cfg.batch_size < 1) throw ArgumentError("batch size must be positive");

    const Tensor& images = normal_train.images;
    const int n = images.dim(0);
    Rng order_rng(fnv1a64("distill", 7, cfg.seed));
    AdamConfig acfg;
    acfg.lr = cfg.lr;
    AdamState adam(acfg);

    std::vector<int> indices(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;

    auto epoch_pass = [&](bool train) {
        if (train) {
            for (std::size_t i = indices.size(); i > 1; --i) {
                std::swap(indices[i - 1], indices[order_rng.next_below(i)]);
            }
        }
        double total = 0.0;
        for (std::size_t start = 0; start < indices.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(indices.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<int> batch(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                   indices.begin() + static_cast<std::ptrdiff_t>(end));
            Tensor x = gather_rows(images, batch);
            Tensor target = pair.teacher.represent(x);
            Tensor loss = mse_loss(pair.student.forward(x, train), target);
            total += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
            if (train) {
                pair.student.zero_grad();
                backward(loss);
                adam.step(pair.student.params(), pair.student.param_names());
            }
        }
        return total / static_cast<double>(n);
    };

    std::vector<double> history;
    history.push_back(epoch_pass(false));
    for (int e = 0; e < cfg.epochs; ++e) history.push_back(epoch_pass(true));
    return history;
}

std::vector<double> kd_scores(const StudentTeacherPair& pair, const Tensor& batch) {
    Tensor t = pair.teacher.represent(batch);
    Tensor s = pair.student.forward(batch, false);
    const int n = batch.dim(0);
    const std::size_t d = t.numel() / static_cast<std::size_t>(n);
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * d + j;
            const double diff = static_cast<double>(t.data()[k]) - s.data()[k];
            acc += diff * diff;
        }
        if (!std::isfinite(acc)) {
            throw NumericError("non-finite network output while scoring sample " +
                               std::to_string(i));
        }
        scores[static_cast<std::size_t>(i)] = acc;
    }
    return scores;
}

double kd_score(const StudentTeacherPair& pair, const Tensor& x) {
    Shape batched = x.shape();
    batched.insert(batched.begin(), 1);
    Tensor b = Tensor::from_data(batched,
                                 std::vector<float>(x.data().begin(), x.data().end()));
    return kd_scores(pair, b)[0];
}

double aggregate_patch_scores(const std::vector<double>& scores) {
    if (scores.empty()) throw ArgumentError("cannot aggregate an empty patch score list");
    return *std::max_element(scores.begin(), scores.end());
}

}  // namespace adkd
