#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adkd/rng.hpp"
#include "adkd/tensor.hpp"

namespace adkd {

enum class LayerKind : std::uint8_t {
    Conv,
    Dense,
    ReLU,
    GlobalAvgPool,
    Flatten,
    Projection,  // Dense flagged as the representation output
    Upsample,
    Reshape,
};

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    int out_channels = 0, k = 0, stride = 1, pad = 0;  // Conv
    int out_dim = 0;                                   // Dense / Projection
    int factor = 0;                                    // Upsample
    int c = 0, h = 0, w = 0;                           // Reshape

    static LayerSpec Conv(int out_channels, int k, int stride, int pad);
    static LayerSpec Dense(int out_dim);
    static LayerSpec ReLU();
    static LayerSpec GlobalAvgPool();
    static LayerSpec Flatten();
    static LayerSpec Projection(int out_dim);
    static LayerSpec Upsample(int factor);
    static LayerSpec Reshape(int c, int h, int w);

    bool operator==(const LayerSpec&) const = default;
};

// Seed-independent hash of an architecture (specs + input shape).
std::uint64_t architecture_fingerprint(const std::vector<LayerSpec>& specs,
                                       const Shape& input_shape);

// Ordered layers with a deterministic parameter store. Frozen models reject
// parameter mutation; they remain safe to share across threads.
class Model {
public:
    Model() = default;

    // input_shape is per-sample, e.g. {1,16,16}. Weights are initialized
    // uniformly in [-sqrt(1/fan_in), +sqrt(1/fan_in)]; biases start at zero.
    static Model build(std::vector<LayerSpec> specs, Shape input_shape,
                       std::uint64_t seed);

    Tensor forward(const Tensor& batch, bool with_grad = false) const;

    const std::vector<LayerSpec>& specs() const { return specs_; }
    const Shape& input_shape() const { return input_shape_; }
    // Per-sample output shape of the last layer.
    const Shape& output_shape() const { return output_shapes_.back(); }
    std::uint64_t fingerprint() const { return fingerprint_; }

    bool frozen() const { return frozen_; }
    void freeze();

    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }
    const std::vector<std::string>& param_names() const { return param_names_; }
    void zero_grad();

    // Hash over all parameter bytes; used by freezing/immutability tests.
    std::uint64_t param_hash() const;

    // Deep copy; the copy is trainable regardless of this model's state.
    Model clone_trainable() const;

    // Index of the Projection layer, or -1. Trunk features are the values
    // flowing into it.
    int projection_index() const;
    // Forward stopped just before the Projection layer.
    Tensor trunk_forward(const Tensor& batch, bool with_grad = false) const;

    // Restores parameter values; count and extents must match.
    void load_params(const std::vector<std::vector<float>>& values);

private:
    Tensor run(const Tensor& batch, bool with_grad, int stop_layer) const;

    std::vector<LayerSpec> specs_;
    Shape input_shape_;
    std::vector<Shape> output_shapes_;  // per-sample, one per layer
    std::vector<Tensor> params_;
    std::vector<std::string> param_names_;
    std::vector<int> layer_param_start_;  // index into params_ per layer, -1 if none
    bool frozen_ = false;
    std::uint64_t fingerprint_ = 0;
};

struct Provenance {
    std::string task;
    std::uint64_t seed = 0;
    int epochs = 0;
};

// Binary checkpoint: magic "ADKD", version u32 LE, fingerprint 8 bytes,
// tensor count u32, per tensor (name u16+bytes, ndims u8, dims u32 LE,
// float32 LE payload), then length-prefixed UTF-8 JSON provenance which also
// carries the architecture so the model can be rebuilt.
void save_checkpoint(const Model& model, const Provenance& prov,
                     const std::string& path);
struct LoadedCheckpoint {
    Model model;  // trainable; callers freeze as needed
    Provenance provenance;
};
LoadedCheckpoint load_checkpoint(const std::string& path);
// Loads and additionally demands the given architecture fingerprint.
LoadedCheckpoint load_checkpoint(const std::string& path,
                                 std::uint64_t expected_fingerprint);

}  // namespace adkd
