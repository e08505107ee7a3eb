#include "adkd/brittleness.hpp"

#include <cmath>

#include "adkd/ops.hpp"

namespace adkd {

Tensor input_gradient(const StudentTeacherPair& pair, const Tensor& x, bool stop_teacher) {
    Shape batched = x.shape();
    batched.insert(batched.begin(), 1);
    Tensor leaf = Tensor::from_data(
        batched, std::vector<float>(x.data().begin(), x.data().end()), true);
    leaf.zero_grad();

    Tensor student_out = pair.student.forward(leaf, true);
    Tensor teacher_out = stop_teacher ? pair.teacher.represent(leaf)
                                      : pair.teacher.model.forward(leaf, true);
    Tensor diff = sub(teacher_out, student_out);
    Tensor loss = sum_all(mul(diff, diff));
    backward(loss);

    std::vector<float> g(leaf.grad().begin(), leaf.grad().end());
    for (float v : g) {
        if (!std::isfinite(v)) throw NumericError("non-finite input gradient");
    }
    return Tensor::from_data(x.shape(), std::move(g));
}

BrittlenessReport brittleness_score(const StudentTeacherPair& pair,
                                    const Tensor& normal_train, bool stop_teacher) {
    if (normal_train.ndim() < 2 || normal_train.dim(0) < 2) {
        throw ArgumentError("brittleness_score needs at least 2 training samples");
    }
    const int n = normal_train.dim(0);
    const std::size_t stride = normal_train.numel() / static_cast<std::size_t>(n);

    // Per-sample gradients (batch of one through the tape) keep the norms
    // exact rather than batch-averaged.
    double norm_sum = 0.0;
    std::vector<std::vector<double>> diffs(static_cast<std::size_t>(n));
    Shape sample_shape(normal_train.shape().begin() + 1, normal_train.shape().end());
    for (int i = 0; i < n; ++i) {
        auto src = normal_train.data().subspan(static_cast<std::size_t>(i) * stride, stride);
        Tensor x = Tensor::from_data(sample_shape, std::vector<float>(src.begin(), src.end()));
        Tensor g = input_gradient(pair, x, stop_teacher);
        double sq = 0.0;
        for (float v : g.data()) sq += static_cast<double>(v) * v;
        norm_sum += std::sqrt(sq);

        Shape batched = sample_shape;
        batched.insert(batched.begin(), 1);
        Tensor xb = Tensor::from_data(batched,
                                      std::vector<float>(src.begin(), src.end()));
        Tensor t = pair.teacher.represent(xb);
        Tensor s = pair.student.forward(xb, false);
        std::vector<double> d(t.numel());
        for (std::size_t j = 0; j < d.size(); ++j)
            d[j] = static_cast<double>(t.data()[j]) - s.data()[j];
        diffs[static_cast<std::size_t>(i)] = std::move(d);
    }

    // Trace needs only per-coordinate variances (population convention).
    const std::size_t dim = diffs[0].size();
    double trace = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += diffs[static_cast<std::size_t>(i)][j];
        mean /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            const double dv = diffs[static_cast<std::size_t>(i)][j] - mean;
            var += dv * dv;
        }
        trace += var / n;
    }

    BrittlenessReport r;
    r.numerator = norm_sum / n;
    r.denominator = trace;
    r.sample_count = n;
    r.stop_teacher = stop_teacher;
    if (!(trace > 0.0)) {
        throw DegenerateVarianceError(
            "student-teacher output differences carry no variance; the brittleness "
            "ratio is undefined");
    }
    r.score = r.numerator / r.denominator;
    return r;
}

}  // namespace adkd
