#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "adkd/datasets.hpp"
#include "adkd/nets.hpp"

namespace adkd {

enum class AuxVariant {
    Random,
    Classifier,
    RotNet,
    Autoencoder,
    DenoisingAutoencoder,
    SimCLR,
    SupervisedBaseline,
};

std::string to_string(AuxVariant v);
AuxVariant aux_variant_from_string(const std::string& s);

struct TrainConfig {
    int epochs = 10;
    float lr = 1e-3f;
    int batch_size = 64;
    std::uint64_t seed = 0;
};

struct AuxTask {
    AuxVariant variant = AuxVariant::Random;
    float sigma = 0.1f;        // DenoisingAutoencoder
    float temperature = 0.5f;  // SimCLR
    TrainConfig train;
};

// Frozen trunk plus a randomly initialized frozen projection head.
struct Teacher {
    Model model;
    AuxVariant variant = AuxVariant::Random;
    std::string task_name;
    std::uint64_t seed = 0;
    int epochs = 0;

    Tensor represent(const Tensor& batch) const { return model.forward(batch, false); }
    Tensor trunk_features(const Tensor& batch) const {
        return model.trunk_forward(batch, false);
    }
};

struct PretrainResult {
    Teacher teacher;
    std::vector<double> epoch_losses;  // mean training loss per epoch
    // Trained task network including its head (classifier logits, decoder,
    // ...); kept so task performance stays measurable after teacher assembly.
    Model task_model;
};

// Fraction of argmax predictions matching the labels; expects a model whose
// final layer emits [N,K] logits.
double classification_accuracy(const Model& model, const Tensor& images,
                               const std::vector<int>& labels);

// Default desk-scale encoder: three conv blocks, global average pooling,
// then a linear projection treated as the representation output.
std::vector<LayerSpec> default_encoder_specs(int proj_dim = 32);
std::vector<LayerSpec> default_trunk_specs();
// Encoder mirrored with nearest-neighbor upsampling for autoencoder tasks;
// requires the spatial extent to be divisible by 4.
std::vector<LayerSpec> default_decoder_specs(const Shape& input_shape, int proj_dim);

Teacher random_teacher(const Shape& input_shape, int proj_dim, std::uint64_t seed);

PretrainResult pretrain_classifier(const NormalView& data, const Shape& input_shape,
                                   const TrainConfig& cfg, int proj_dim = 32);

// Rotated copies of the input with rotation-count labels. Expansion mode
// emits all four rotations per image; sampling mode draws one per image.
std::pair<Tensor, std::vector<int>> make_rotnet_batch(const Tensor& images,
                                                      std::uint64_t seed,
                                                      bool expansion = true);

PretrainResult pretrain_rotnet(const NormalView& data, const Shape& input_shape,
                               const TrainConfig& cfg, int proj_dim = 32);

PretrainResult pretrain_autoencoder(const NormalView& data, const Shape& input_shape,
                                    const TrainConfig& cfg, int proj_dim = 32);

// Gaussian corruption clamped back into [0,1].
Tensor corrupt_gaussian(const Tensor& images, float sigma, Rng& rng);

PretrainResult pretrain_dae(const NormalView& data, const Shape& input_shape,
                            const TrainConfig& cfg, float sigma, int proj_dim = 32);

// Reduced augmentation set: crop-with-pad 2, horizontal flip, noise 0.05.
Tensor augment_simclr(const Tensor& images, Rng& rng);

PretrainResult pretrain_simclr(const NormalView& data, const Shape& input_shape,
                               const TrainConfig& cfg, float temperature,
                               int proj_dim = 32);

// The only task allowed to see anomaly-labeled data; it defines the
// performance ceiling. The anomaly pool must be training-only.
PretrainResult pretrain_supervised_baseline(const NormalView& normal,
                                            const Tensor& anomaly_pool,
                                            const Shape& input_shape,
                                            const TrainConfig& cfg, int proj_dim = 32);

PretrainResult pretrain_task(const AuxTask& task, const NormalView& data,
                             const Tensor& anomaly_pool, const Shape& input_shape,
                             int proj_dim = 32);

}  // namespace adkd
