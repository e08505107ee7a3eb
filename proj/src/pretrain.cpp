#include "adkd/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "adkd/ops.hpp"
#include "adkd/optim.hpp"

namespace adkd {

std::string to_string(AuxVariant v) {
    switch (v) {
        case AuxVariant::Random: return "random";
        case AuxVariant::Classifier: return "classifier";
        case AuxVariant::RotNet: return "rotnet";
        case AuxVariant::Autoencoder: return "autoencoder";
        case AuxVariant::DenoisingAutoencoder: return "dae";
        case AuxVariant::SimCLR: return "simclr";
        case AuxVariant::SupervisedBaseline: return "baseline";
    }
    return "?";
}

AuxVariant aux_variant_from_string(const std::string& s) {
    if (s == "random") return AuxVariant::Random;
    if (s == "classifier") return AuxVariant::Classifier;
    if (s == "rotnet") return AuxVariant::RotNet;
    if (s == "autoencoder") return AuxVariant::Autoencoder;
    if (s == "dae") return AuxVariant::DenoisingAutoencoder;
    if (s == "simclr") return AuxVariant::SimCLR;
    if (s == "baseline") return AuxVariant::SupervisedBaseline;
    throw ArgumentError("unknown auxiliary task '" + s + "'");
}


double classification_accuracy(const Model& model, const Tensor& images,
                               const std::vector<int>& labels) {
    const int n = images.dim(0);
    if (static_cast<std::size_t>(n) != labels.size()) {
        throw ArgumentError("classification_accuracy: label count mismatch");
    }
    const std::size_t stride = images.numel() / static_cast<std::size_t>(n);
    constexpr int chunk = 128;
    int correct = 0;
    for (int start = 0; start < n; start += chunk) {
        const int cnt = std::min(chunk, n - start);
        Shape shape = images.shape();
        shape[0] = cnt;
        auto src = images.data().subspan(static_cast<std::size_t>(start) * stride,
                                         static_cast<std::size_t>(cnt) * stride);
        Tensor logits = model.forward(
            Tensor::from_data(shape, std::vector<float>(src.begin(), src.end())), false);
        const int k = logits.dim(1);
        for (int i = 0; i < cnt; ++i) {
            int best = 0;
            for (int c = 1; c < k; ++c) {
                if (logits.data()[static_cast<std::size_t>(i) * k + c] >
                    logits.data()[static_cast<std::size_t>(i) * k + best])
                    best = c;
            }
            if (best == labels[static_cast<std::size_t>(start + i)]) ++correct;
        }
    }
    return static_cast<double>(correct) / n;
}

std::vector<LayerSpec> default_trunk_specs() {
    return {LayerSpec::Conv(8, 3, 1, 1),  LayerSpec::ReLU(),
            LayerSpec::Conv(16, 3, 2, 1), LayerSpec::ReLU(),
            LayerSpec::Conv(32, 3, 2, 1), LayerSpec::ReLU(),
            LayerSpec::GlobalAvgPool()};
}

std::vector<LayerSpec> default_encoder_specs(int proj_dim) {
    auto specs = default_trunk_specs();
    specs.push_back(LayerSpec::Projection(proj_dim));
    return specs;
}

std::vector<LayerSpec> default_decoder_specs(const Shape& input_shape, int proj_dim) {
    if (input_shape.size() != 3) {
        throw ArgumentError("decoder requires a [C,H,W] input shape");
    }
    const int C = input_shape[0], H = input_shape[1], W = input_shape[2];
    if (H % 4 != 0 || W % 4 != 0) {
        throw ArgumentError("autoencoder decoder requires spatial extents divisible by 4");
    }
    const int h = H / 4, w = W / 4;
    (void)proj_dim;
    return {LayerSpec::Dense(32 * h * w), LayerSpec::ReLU(),
            LayerSpec::Reshape(32, h, w), LayerSpec::Upsample(2),
            LayerSpec::Conv(16, 3, 1, 1), LayerSpec::ReLU(),
            LayerSpec::Upsample(2),       LayerSpec::Conv(8, 3, 1, 1),
            LayerSpec::ReLU(),            LayerSpec::Conv(C, 3, 1, 1)};
}

namespace {

std::size_t param_tensor_count(const std::vector<LayerSpec>& specs) {
    std::size_t n = 0;
    for (const auto& s : specs) {
        if (s.kind == LayerKind::Conv || s.kind == LayerKind::Dense ||
            s.kind == LayerKind::Projection) {
            n += 2;
        }
    }
    return n;
}

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

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    Shape shape = a.shape();
    shape[0] += b.dim(0);
    std::vector<float> data(a.data().begin(), a.data().end());
    data.insert(data.end(), b.data().begin(), b.data().end());
    return Tensor::from_data(std::move(shape), std::move(data));
}

// Mean training loss per epoch; entry 0 is the evaluation loss before any
// update so callers can compare against the starting point.
std::vector<double> run_training(
    Model& model, int n_samples, const TrainConfig& cfg,
    const std::function<Tensor(const std::vector<int>&, bool, Rng&)>& batch_loss) {
    if (cfg.batch_size < 1) throw ArgumentError("batch size must be positive");
    Rng order_rng(fnv1a64("order", 5, cfg.seed));
    Rng data_rng(fnv1a64("data", 4, cfg.seed));
    AdamConfig acfg;
    acfg.lr = cfg.lr;
    AdamState adam(acfg);
    std::vector<double> history;

    std::vector<int> indices(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) indices[static_cast<std::size_t>(i)] = i;

    auto epoch_pass = [&](bool train) {
        if (train) {
            for (std::size_t i = indices.size(); i > 1; --i) {
                std::swap(indices[i - 1], indices[order_rng.next_below(i)]);
            }
        }
        double total = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < indices.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(indices.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<int> batch(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                   indices.begin() + static_cast<std::ptrdiff_t>(end));
            Tensor loss = batch_loss(batch, train, data_rng);
            total += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
            seen += batch.size();
            if (train) {
                model.zero_grad();
                backward(loss);
                adam.step(model.params(), model.param_names());
            }
        }
        return total / static_cast<double>(seen);
    };

    history.push_back(epoch_pass(false));
    for (int e = 0; e < cfg.epochs; ++e) history.push_back(epoch_pass(true));
    return history;
}

// Builds the frozen teacher: trained trunk weights, fresh random frozen
// projection head.
Teacher assemble_teacher(const Model& trained, std::size_t trunk_param_count,
                         const Shape& input_shape, int proj_dim, AuxVariant variant,
                         const TrainConfig& cfg) {
    const std::uint64_t proj_seed = fnv1a64("projection", 10, cfg.seed);
    Model full = Model::build(default_encoder_specs(proj_dim), input_shape, proj_seed);
    for (std::size_t i = 0; i < trunk_param_count; ++i) {
        auto src = trained.params()[i].data();
        std::copy(src.begin(), src.end(), full.params()[i].data_mut().begin());
    }
    full.freeze();
    Teacher t;
    t.model = std::move(full);
    t.variant = variant;
    t.task_name = to_string(variant);
    t.seed = cfg.seed;
    t.epochs = cfg.epochs;
    return t;
}

}  // namespace

Teacher random_teacher(const Shape& input_shape, int proj_dim, std::uint64_t seed) {
    Model m = Model::build(default_encoder_specs(proj_dim), input_shape, seed);
    m.freeze();
    Teacher t;
    t.model = std::move(m);
    t.variant = AuxVariant::Random;
    t.task_name = "random";
    t.seed = seed;
    t.epochs = 0;
    return t;
}

PretrainResult pretrain_classifier(const NormalView& data, const Shape& input_shape,
                                   const TrainConfig& cfg, int proj_dim) {
    if (data.num_classes < 2) {
        throw ArgumentError("classifier pre-training needs at least 2 classes");
    }
    auto specs = default_trunk_specs();
    const std::size_t trunk_params = param_tensor_count(specs);
    specs.push_back(LayerSpec::Dense(data.num_classes));
    Model model = Model::build(specs, input_shape, cfg.seed);

    auto history = run_training(
        model, data.images.dim(0), cfg,
        [&](const std::vector<int>& batch, bool train, Rng&) {
            Tensor x = gather_rows(data.images, batch);
            std::vector<int> labels;
            labels.reserve(batch.size());
            for (int i : batch) labels.push_back(data.labels[static_cast<std::size_t>(i)]);
            return softmax_cross_entropy(model.forward(x, train), labels);
        });
    PretrainResult result;
    result.teacher = assemble_teacher(model, trunk_params, input_shape, proj_dim,
                             AuxVariant::Classifier, cfg);
    result.epoch_losses = std::move(history);
    result.task_model = std::move(model);
    return result;
}

std::pair<Tensor, std::vector<int>> make_rotnet_batch(const Tensor& images,
                                                      std::uint64_t seed, bool expansion) {
    if (images.ndim() != 4) {
        throw DimensionError("make_rotnet_batch expects [N,C,H,W] images");
    }
    if (images.dim(2) != images.dim(3)) {
        throw ArgumentError("rotnet requires square images, got " +
                            shape_str(images.shape()));
    }
    const int N = images.dim(0);
    std::vector<int> labels;
    std::vector<float> data;
    Rng rng(seed);
    auto append_rotation = [&](int i, int k) {
        std::vector<int> one{i};
        Tensor img = gather_rows(images, one);
        Tensor rot = rot90(img, k);
        data.insert(data.end(), rot.data().begin(), rot.data().end());
        labels.push_back(k);
    };
    for (int i = 0; i < N; ++i) {
        if (expansion) {
            for (int k = 0; k < 4; ++k) append_rotation(i, k);
        } else {
            append_rotation(i, static_cast<int>(rng.next_below(4)));
        }
    }
    Shape shape = images.shape();
    shape[0] = static_cast<int>(labels.size());
    return {Tensor::from_data(std::move(shape), std::move(data)), std::move(labels)};
}

PretrainResult pretrain_rotnet(const NormalView& data, const Shape& input_shape,
                               const TrainConfig& cfg, int proj_dim) {
    auto [rotated, labels] =
        make_rotnet_batch(data.images, fnv1a64("rotnet", 6, cfg.seed), true);
    auto specs = default_trunk_specs();
    const std::size_t trunk_params = param_tensor_count(specs);
    specs.push_back(LayerSpec::Dense(4));
    Model model = Model::build(specs, input_shape, cfg.seed);

    auto history = run_training(
        model, rotated.dim(0), cfg,
        [&, &labels = labels, &rotated = rotated](const std::vector<int>& batch, bool train, Rng&) {
            Tensor x = gather_rows(rotated, batch);
            std::vector<int> y;
            y.reserve(batch.size());
            for (int i : batch) y.push_back(labels[static_cast<std::size_t>(i)]);
            return softmax_cross_entropy(model.forward(x, train), y);
        });
    PretrainResult result;
    result.teacher = assemble_teacher(model, trunk_params, input_shape, proj_dim, AuxVariant::RotNet,
                             cfg);
    result.epoch_losses = std::move(history);
    result.task_model = std::move(model);
    return result;
}

PretrainResult pretrain_autoencoder(const NormalView& data, const Shape& input_shape,
                                    const TrainConfig& cfg, int proj_dim) {
    auto specs = default_encoder_specs(proj_dim);
    const std::size_t trunk_params = param_tensor_count(default_trunk_specs());
    auto dec = default_decoder_specs(input_shape, proj_dim);
    specs.insert(specs.end(), dec.begin(), dec.end());
    Model model = Model::build(specs, input_shape, cfg.seed);

    auto history = run_training(model, data.images.dim(0), cfg,
                                [&](const std::vector<int>& batch, bool train, Rng&) {
                                    Tensor x = gather_rows(data.images, batch);
                                    return mse_loss(model.forward(x, train), x);
                                });
    PretrainResult result;
    result.teacher = assemble_teacher(model, trunk_params, input_shape, proj_dim,
                             AuxVariant::Autoencoder, cfg);
    result.epoch_losses = std::move(history);
    result.task_model = std::move(model);
    return result;
}

Tensor corrupt_gaussian(const Tensor& images, float sigma, Rng& rng) {
    if (sigma <= 0.0f) throw ArgumentError("corruption sigma must be positive");
    std::vector<float> data(images.data().begin(), images.data().end());
    for (auto& v : data) v = std::clamp(v + sigma * rng.gaussian(), 0.0f, 1.0f);
    return Tensor::from_data(images.shape(), std::move(data));
}

PretrainResult pretrain_dae(const NormalView& data, const Shape& input_shape,
                            const TrainConfig& cfg, float sigma, int proj_dim) {
    if (sigma <= 0.0f) throw ArgumentError("dae sigma must be positive");
    auto specs = default_encoder_specs(proj_dim);
    const std::size_t trunk_params = param_tensor_count(default_trunk_specs());
    auto dec = default_decoder_specs(input_shape, proj_dim);
    specs.insert(specs.end(), dec.begin(), dec.end());
    Model model = Model::build(specs, input_shape, cfg.seed);

    auto history = run_training(
        model, data.images.dim(0), cfg,
        [&](const std::vector<int>& batch, bool train, Rng& rng) {
            Tensor clean = gather_rows(data.images, batch);
            Tensor noisy = corrupt_gaussian(clean, sigma, rng);
            return mse_loss(model.forward(noisy, train), clean);
        });
    PretrainResult result;
    result.teacher = assemble_teacher(model, trunk_params, input_shape, proj_dim,
                             AuxVariant::DenoisingAutoencoder, cfg);
    result.epoch_losses = std::move(history);
    result.task_model = std::move(model);
    return result;
}

Tensor augment_simclr(const Tensor& images, Rng& rng) {
    const int N = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
    constexpr int pad = 2;
    std::vector<float> out(images.numel());
    auto src = images.data();
    for (int n = 0; n < N; ++n) {
        const int dy = static_cast<int>(rng.next_below(2 * pad + 1)) - pad;
        const int dx = static_cast<int>(rng.next_below(2 * pad + 1)) - pad;
        const bool flip = rng.next_below(2) == 1;
        for (int c = 0; c < C; ++c) {
            for (int i = 0; i < H; ++i) {
                for (int j = 0; j < W; ++j) {
                    const int sj0 = flip ? (W - 1 - j) : j;
                    const int si = i + dy, sj = sj0 + dx;
                    float v = 0.0f;
                    if (si >= 0 && si < H && sj >= 0 && sj < W) {
                        v = src[((static_cast<std::size_t>(n) * C + c) * H + si) * W + sj];
                    }
                    v = std::clamp(v + 0.05f * rng.gaussian(), 0.0f, 1.0f);
                    out[((static_cast<std::size_t>(n) * C + c) * H + i) * W + j] = v;
                }
            }
        }
    }
    return Tensor::from_data(images.shape(), std::move(out));
}

PretrainResult pretrain_simclr(const NormalView& data, const Shape& input_shape,
                               const TrainConfig& cfg, float temperature, int proj_dim) {
    if (temperature <= 0.0f) throw ArgumentError("simclr temperature must be positive");
    if (cfg.batch_size < 4) throw ArgumentError("simclr requires a batch size of at least 4");
    Model model = Model::build(default_encoder_specs(proj_dim), input_shape, cfg.seed);
    const std::size_t trunk_params = param_tensor_count(default_trunk_specs());

    auto history = run_training(
        model, data.images.dim(0), cfg,
        [&](const std::vector<int>& batch_in, bool train, Rng& rng) {
            // a tail batch of one sample has no negatives; duplicate it
            std::vector<int> batch = batch_in;
            if (batch.size() < 2) batch.push_back(batch[0]);
            Tensor x = gather_rows(data.images, batch);
            Tensor v1 = augment_simclr(x, rng);
            Tensor v2 = augment_simclr(x, rng);
            // interleave: rows 2i and 2i+1 are the two views of sample i
            const std::size_t stride = v1.numel() / batch.size();
            std::vector<float> inter(2 * v1.numel());
            for (std::size_t i = 0; i < batch.size(); ++i) {
                std::copy_n(v1.data().begin() + static_cast<std::ptrdiff_t>(i * stride),
                            stride, inter.begin() + static_cast<std::ptrdiff_t>(2 * i * stride));
                std::copy_n(v2.data().begin() + static_cast<std::ptrdiff_t>(i * stride),
                            stride,
                            inter.begin() + static_cast<std::ptrdiff_t>((2 * i + 1) * stride));
            }
            Shape shape = x.shape();
            shape[0] = static_cast<int>(2 * batch.size());
            Tensor views = Tensor::from_data(std::move(shape), std::move(inter));
            return nt_xent_loss(model.forward(views, train), temperature);
        });
    PretrainResult result;
    result.teacher = assemble_teacher(model, trunk_params, input_shape, proj_dim, AuxVariant::SimCLR,
                             cfg);
    result.epoch_losses = std::move(history);
    result.task_model = std::move(model);
    return result;
}

PretrainResult pretrain_supervised_baseline(const NormalView& normal,
                                            const Tensor& anomaly_pool,
                                            const Shape& input_shape,
                                            const TrainConfig& cfg, int proj_dim) {
    if (!anomaly_pool.defined() || anomaly_pool.dim(0) < 1) {
        throw ArgumentError("supervised baseline requires a non-empty anomaly pool");
    }
    Tensor all = concat_rows(normal.images, anomaly_pool);
    std::vector<int> labels(static_cast<std::size_t>(all.dim(0)), 0);
    for (int i = normal.images.dim(0); i < all.dim(0); ++i)
        labels[static_cast<std::size_t>(i)] = 1;

    auto specs = default_trunk_specs();
    const std::size_t trunk_params = param_tensor_count(specs);
    specs.push_back(LayerSpec::Dense(2));
    Model model = Model::build(specs, input_shape, cfg.seed);

    auto history = run_training(
        model, all.dim(0), cfg, [&](const std::vector<int>& batch, bool train, Rng&) {
            Tensor x = gather_rows(all, batch);
            std::vector<int> y;
            y.reserve(batch.size());
            for (int i : batch) y.push_back(labels[static_cast<std::size_t>(i)]);
            return softmax_cross_entropy(model.forward(x, train), y);
        });
    PretrainResult result;
    result.teacher = assemble_teacher(model, trunk_params, input_shape, proj_dim,
                             AuxVariant::SupervisedBaseline, cfg);
    result.epoch_losses = std::move(history);
    result.task_model = std::move(model);
    return result;
}

PretrainResult pretrain_task(const AuxTask& task, const NormalView& data,
                             const Tensor& anomaly_pool, const Shape& input_shape,
                             int proj_dim) {
    switch (task.variant) {
        case AuxVariant::Random: {
            PretrainResult r;
            r.teacher = random_teacher(input_shape, proj_dim, task.train.seed);
            return r;
        }
        case AuxVariant::Classifier:
            return pretrain_classifier(data, input_shape, task.train, proj_dim);
        case AuxVariant::RotNet:
            return pretrain_rotnet(data, input_shape, task.train, proj_dim);
        case AuxVariant::Autoencoder:
            return pretrain_autoencoder(data, input_shape, task.train, proj_dim);
        case AuxVariant::DenoisingAutoencoder:
            return pretrain_dae(data, input_shape, task.train, task.sigma, proj_dim);
        case AuxVariant::SimCLR:
            return pretrain_simclr(data, input_shape, task.train, task.temperature,
                                   proj_dim);
        case AuxVariant::SupervisedBaseline:
            return pretrain_supervised_baseline(data, anomaly_pool, input_shape, task.train,
                                                proj_dim);
    }
    throw ArgumentError("unknown auxiliary task variant");
}

}  // namespace adkd
