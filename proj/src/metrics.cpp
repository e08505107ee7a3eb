#include "adkd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "adkd/ops.hpp"
#include "adkd/optim.hpp"

namespace adkd {

double auroc(const ScoreSet& scores) {
    const std::size_t n = scores.normal.size(), m = scores.anomaly.size();
    if (n == 0 || m == 0) {
        throw ArgumentError("auroc requires non-empty normal and anomaly score sets");
    }
    for (double v : scores.normal) {
        if (!std::isfinite(v)) throw NumericError("non-finite normal score");
    }
    for (double v : scores.anomaly) {
        if (!std::isfinite(v)) throw NumericError("non-finite anomaly score");
    }

    struct Entry {
        double value;
        bool anomaly;
    };
    std::vector<Entry> all;
    all.reserve(n + m);
    for (double v : scores.normal) all.push_back({v, false});
    for (double v : scores.anomaly) all.push_back({v, true});
    std::stable_sort(all.begin(), all.end(),
                     [](const Entry& a, const Entry& b) { return a.value < b.value; });

    // Midranks over tie groups; the rank-sum of anomalies yields the
    // Mann-Whitney U statistic.
    double anomaly_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && !(all[i].value < all[j].value)) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].anomaly) anomaly_rank_sum += midrank;
        }
        i = j;
    }
    const double u = anomaly_rank_sum - 0.5 * static_cast<double>(m) * (m + 1);
    return u / (static_cast<double>(n) * static_cast<double>(m));
}

ProbeResult train_linear_probe_on_features(const Tensor& train_features,
                                           const std::vector<int>& train_labels,
                                           const Tensor& test_features,
                                           const std::vector<int>& test_labels,
                                           const ProbeConfig& cfg) {
    if (train_features.ndim() != 2 || test_features.ndim() != 2 ||
        train_features.dim(1) != test_features.dim(1)) {
        throw DimensionError("probe features must be [N,D] with matching D");
    }
    std::set<int> train_set(train_labels.begin(), train_labels.end());
    std::set<int> test_set(test_labels.begin(), test_labels.end());
    if (train_set != test_set) {
        throw ArgumentError("train and test label sets disagree");
    }
    const int k = *train_set.rbegin() + 1;
    const int d = train_features.dim(1);
    const int n = train_features.dim(0);

    Rng rng(cfg.seed);
    const float bound = std::sqrt(1.0f / static_cast<float>(d));
    std::vector<float> wdata(static_cast<std::size_t>(d) * k);
    for (auto& v : wdata) v = rng.uniform(-bound, bound);
    Tensor w = Tensor::from_data({d, k}, std::move(wdata), true);
    Tensor b = Tensor::zeros({k}, true);
    std::vector<Tensor> params{w, b};

    AdamConfig acfg;
    acfg.lr = cfg.lr;
    AdamState adam(acfg);
    Rng order_rng(fnv1a64("probe", 5, cfg.seed));
    std::vector<int> indices(static_cast<std::size_t>(n));
    std::iota(indices.begin(), indices.end(), 0);

    for (int e = 0; e < cfg.epochs; ++e) {
        for (std::size_t i = indices.size(); i > 1; --i) {
            std::swap(indices[i - 1], indices[order_rng.next_below(i)]);
        }
        for (std::size_t start = 0; start < indices.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(indices.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<float> xb;
            std::vector<int> yb;
            for (std::size_t t = start; t < end; ++t) {
                const int idx = indices[t];
                auto row = train_features.data().subspan(
                    static_cast<std::size_t>(idx) * d, static_cast<std::size_t>(d));
                xb.insert(xb.end(), row.begin(), row.end());
                yb.push_back(train_labels[static_cast<std::size_t>(idx)]);
            }
            Tensor x = Tensor::from_data({static_cast<int>(end - start), d}, std::move(xb));
            Tensor loss = softmax_cross_entropy(bias_add_rows(matmul(x, w), b), yb);
            w.zero_grad();
            b.zero_grad();
            backward(loss);
            adam.step(params);
        }
    }

    // test accuracy
    Tensor logits = bias_add_rows(matmul(test_features.detach_copy(), w.detach_copy()),
                                  b.detach_copy());
    int correct = 0;
    const int tn = test_features.dim(0);
    for (int i = 0; i < tn; ++i) {
        int best = 0;
        for (int c = 1; c < k; ++c) {
            if (logits.data()[i * k + c] > logits.data()[i * k + best]) best = c;
        }
        if (best == test_labels[static_cast<std::size_t>(i)]) ++correct;
    }
    ProbeResult r;
    r.accuracy = static_cast<double>(correct) / tn;
    r.class_count = k;
    return r;
}

namespace {

Tensor trunk_features_batched(const Teacher& teacher, const Tensor& images) {
    const int n = images.dim(0);
    const std::size_t stride = images.numel() / static_cast<std::size_t>(n);
    constexpr int chunk = 128;
    std::vector<float> out;
    int d = 0;
    for (int start = 0; start < n; start += chunk) {
        const int cnt = std::min(chunk, n - start);
        Shape shape = images.shape();
        shape[0] = cnt;
        auto src = images.data().subspan(static_cast<std::size_t>(start) * stride,
                                         static_cast<std::size_t>(cnt) * stride);
        Tensor batch = Tensor::from_data(shape, std::vector<float>(src.begin(), src.end()));
        Tensor f = teacher.trunk_features(batch);
        d = f.dim(1);
        out.insert(out.end(), f.data().begin(), f.data().end());
    }
    return Tensor::from_data({n, d}, std::move(out));
}

}  // namespace

ProbeResult linear_probe(const Teacher& teacher, const LabeledDataset& train,
                         const LabeledDataset& test, const ProbeConfig& cfg) {
    if (!teacher.model.frozen()) throw StateError("probe trunk must be frozen");
    const std::uint64_t hash_before = teacher.model.param_hash();
    Tensor ftrain = trunk_features_batched(teacher, train.images);
    Tensor ftest = trunk_features_batched(teacher, test.images);
    ProbeResult r = train_linear_probe_on_features(ftrain, train.labels, ftest,
                                                   test.labels, cfg);
    if (teacher.model.param_hash() != hash_before) {
        throw StateError("probe mutated the frozen trunk");
    }
    r.trunk_param_hash = hash_before;
    return r;
}

double pearson_corr(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw ArgumentError("pearson_corr needs two equal-length arrays of size >= 2");
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw DegenerateVarianceError("pearson_corr: zero variance input");
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace adkd
