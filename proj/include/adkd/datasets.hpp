#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "adkd/tensor.hpp"

namespace adkd {

// Images in [0,1], labels in 0..K-1. Immutable after construction.
struct LabeledDataset {
    Tensor images;            // [N,C,H,W]
    std::vector<int> labels;  // length N
    int num_classes = 0;
    std::string name;

    static LabeledDataset create(Tensor images, std::vector<int> labels,
                                 int num_classes, std::string name);
    int size() const { return images.dim(0); }
    // Copy of sample i as [C,H,W].
    Tensor image(int i) const;
};

enum class SplitMode { Unimodal, Multimodal, OneVsOne };

SplitMode split_mode_from_string(const std::string& s);
std::string to_string(SplitMode m);

// Images selected by a SplitPlan and certified anomaly-free. Labels are
// remapped to a dense 0..K'-1 range over the classes actually present.
struct NormalView {
    Tensor images;
    std::vector<int> labels;
    int num_classes = 0;
};

struct SplitPlan {
    SplitMode mode = SplitMode::Unimodal;
    int class_id = 0;
    int anomaly_class_id = -1;  // OneVsOne only
    std::vector<int> train_normal;
    std::vector<int> test_normal;
    std::vector<int> test_anomaly;

    bool is_anomaly_label(int label) const;

    // Throws HygieneError if any train index carries an anomaly label.
    NormalView train_normal_view(const LabeledDataset& ds) const;
    Tensor test_normal_images(const LabeledDataset& ds) const;
    Tensor test_anomaly_images(const LabeledDataset& ds) const;
};

struct SyntheticConfig {
    int classes = 3;
    int samples_per_class = 100;
    int image_size = 16;
    float noise = 0.02f;  // per-pixel Gaussian noise added before quantization
    std::uint64_t seed = 0;
    // One family name per class; defaults cycle through
    // {bar_h, bar_v, disc, disc_big, checker}.
    std::vector<std::string> families;
};

// Deterministic generator. Pixels are quantized to the 1/255 grid so IDX
// round trips are exact.
LabeledDataset generate_synthetic(const SyntheticConfig& cfg);

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path);

SplitPlan build_split(const LabeledDataset& ds, SplitMode mode, int class_id,
                      double test_fraction, std::uint64_t seed,
                      bool balanced = false, int anomaly_class_id = -1);

struct PatchSet {
    Tensor patches;                            // [P,C,p,p]
    std::vector<std::pair<int, int>> anchors;  // (row, col) per patch
};

// Sliding-window extraction with the final anchor clamped so edges are
// covered; images smaller than the patch are zero-padded first.
PatchSet extract_patches(const Tensor& image, int patch, int stride);

// Row-gather of images by index.
Tensor gather_images(const LabeledDataset& ds, const std::vector<int>& indices);
// Subset with labels remapped to a dense range.
LabeledDataset subset_dataset(const LabeledDataset& ds, const std::vector<int>& indices,
                              const std::string& name);

}  // namespace adkd
