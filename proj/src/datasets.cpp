#include "adkd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "adkd/rng.hpp"

namespace adkd {

LabeledDataset LabeledDataset::create(Tensor images, std::vector<int> labels,
                                      int num_classes, std::string name) {
    if (images.ndim() != 4) {
        throw DimensionError("dataset images must be [N,C,H,W], got " +
                             shape_str(images.shape()));
    }
    if (images.dim(0) < 1) throw ArgumentError("dataset must contain at least one image");
    if (static_cast<int>(labels.size()) != images.dim(0)) {
        throw ArgumentError("label count " + std::to_string(labels.size()) +
                            " does not match image count " + std::to_string(images.dim(0)));
    }
    for (float v : images.data()) {
        if (v < 0.0f || v > 1.0f) throw ArgumentError("pixel value outside [0,1]");
    }
    for (int l : labels) {
        if (l < 0 || l >= num_classes) {
            throw ArgumentError("label " + std::to_string(l) + " outside 0.." +
                                std::to_string(num_classes - 1));
        }
    }
    LabeledDataset ds;
    ds.images = std::move(images);
    ds.labels = std::move(labels);
    ds.num_classes = num_classes;
    ds.name = std::move(name);
    return ds;
}

Tensor LabeledDataset::image(int i) const {
    const int C = images.dim(1), H = images.dim(2), W = images.dim(3);
    const std::size_t stride = static_cast<std::size_t>(C) * H * W;
    auto src = images.data().subspan(static_cast<std::size_t>(i) * stride, stride);
    return Tensor::from_data({C, H, W}, std::vector<float>(src.begin(), src.end()));
}

SplitMode split_mode_from_string(const std::string& s) {
    if (s == "unimodal") return SplitMode::Unimodal;
    if (s == "multimodal") return SplitMode::Multimodal;
    if (s == "one_vs_one") return SplitMode::OneVsOne;
    throw ArgumentError("unknown split mode '" + s + "'");
}

std::string to_string(SplitMode m) {
    switch (m) {
        case SplitMode::Unimodal: return "unimodal";
        case SplitMode::Multimodal: return "multimodal";
        case SplitMode::OneVsOne: return "one_vs_one";
    }
    return "?";
}

bool SplitPlan::is_anomaly_label(int label) const {
    switch (mode) {
        case SplitMode::Unimodal: return label != class_id;
        case SplitMode::Multimodal: return label == class_id;
        case SplitMode::OneVsOne: return label == anomaly_class_id;
    }
    return false;
}

NormalView SplitPlan::train_normal_view(const LabeledDataset& ds) const {
    std::vector<int> raw_labels;
    raw_labels.reserve(train_normal.size());
    for (int idx : train_normal) {
        const int lbl = ds.labels[static_cast<std::size_t>(idx)];
        if (is_anomaly_label(lbl)) {
            throw HygieneError("anomaly-labeled sample " + std::to_string(idx) +
                               " present in the training split");
        }
        raw_labels.push_back(lbl);
    }
    // Remap to dense labels over classes present in the view.
    std::set<int> present(raw_labels.begin(), raw_labels.end());
    std::map<int, int> remap;
    int next = 0;
    for (int c : present) remap[c] = next++;
    NormalView view;
    view.images = gather_images(ds, train_normal);
    for (int l : raw_labels) view.labels.push_back(remap[l]);
    view.num_classes = next;
    return view;
}

Tensor SplitPlan::test_normal_images(const LabeledDataset& ds) const {
    return gather_images(ds, test_normal);
}
Tensor SplitPlan::test_anomaly_images(const LabeledDataset& ds) const {
    return gather_images(ds, test_anomaly);
}

namespace {

float quantize(float v) {
    v = std::clamp(v, 0.0f, 1.0f);
    return std::round(v * 255.0f) / 255.0f;
}

struct FamilyParams {
    std::string name;
};

const std::vector<std::string> kDefaultFamilies = {"bar_h", "bar_v", "disc",
                                                   "disc_big", "checker"};

void draw_family(const std::string& family, int S, Rng& rng, std::vector<float>& img) {
    if (family == "bar_h" || family == "bar_v") {
        // Two-pixel bar with an intensity ramp along its length; the ramp
        // breaks the 180-degree symmetry so rotation labels are decodable.
        const float lo = 0.30f, hi = 1.00f;
        const float scale = (family == "bar_h") ? 1.0f : 0.62f;
        const int pos = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(S - 3)));
        for (int t = 0; t < S; ++t) {
            const float ramp = (lo + (hi - lo) * static_cast<float>(t) /
                                         static_cast<float>(S - 1)) *
                               scale;
            if (family == "bar_h") {
                img[static_cast<std::size_t>(pos) * S + t] = ramp;
                img[static_cast<std::size_t>(pos + 1) * S + t] = ramp;
            } else {
                img[static_cast<std::size_t>(t) * S + pos] = ramp;
                img[static_cast<std::size_t>(t) * S + pos + 1] = ramp;
            }
        }
    } else if (family == "bar_d") {
        // Diagonal two-pixel bar with the same ramp; pixel statistics match
        // the axis-aligned bars so only orientation separates the families.
        const float lo = 0.30f, hi = 1.00f;
        const int pos = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(S - 3)));
        const int off = pos - S / 2;
        for (int t = 0; t < S; ++t) {
            const float ramp =
                lo + (hi - lo) * static_cast<float>(t) / static_cast<float>(S - 1);
            const int j = t + off;
            if (j >= 0 && j < S) img[static_cast<std::size_t>(t) * S + j] = ramp;
            if (j + 1 >= 0 && j + 1 < S)
                img[static_cast<std::size_t>(t) * S + j + 1] = ramp;
        }
    } else if (family == "bar_hr") {
        // Horizontal bar with the ramp reversed; identical pixel occupancy to
        // bar_h, so only the ramp direction separates the families.
        const float lo = 0.30f, hi = 1.00f;
        const int pos = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(S - 3)));
        for (int t = 0; t < S; ++t) {
            const float ramp =
                hi - (hi - lo) * static_cast<float>(t) / static_cast<float>(S - 1);
            img[static_cast<std::size_t>(pos) * S + t] = ramp;
            img[static_cast<std::size_t>(pos + 1) * S + t] = ramp;
        }
    } else if (family == "cross") {
        // Superimposed horizontal and vertical bars: a composition of two
        // normal modes rather than a novel texture.
        const float lo = 0.30f, hi = 1.00f;
        const int ph = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(S - 3)));
        const int pv = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(S - 3)));
        for (int t = 0; t < S; ++t) {
            const float ramp =
                lo + (hi - lo) * static_cast<float>(t) / static_cast<float>(S - 1);
            img[static_cast<std::size_t>(ph) * S + t] = ramp;
            img[static_cast<std::size_t>(ph + 1) * S + t] = ramp;
            const float vramp = ramp * 0.62f;
            img[static_cast<std::size_t>(t) * S + pv] =
                std::max(img[static_cast<std::size_t>(t) * S + pv], vramp);
            img[static_cast<std::size_t>(t) * S + pv + 1] =
                std::max(img[static_cast<std::size_t>(t) * S + pv + 1], vramp);
        }
    } else if (family == "disc" || family == "disc_big") {
        const float rlo = (family == "disc") ? 0.14f * S : 0.26f * S;
        const float rhi = (family == "disc") ? 0.19f * S : 0.33f * S;
        const float intensity = (family == "disc") ? 0.85f : 0.45f;
        const float r = rng.uniform(rlo, rhi);
        const float jitter = 0.08f * S;
        const float cy = 0.5f * (S - 1) + rng.uniform(-jitter, jitter);
        const float cx = 0.5f * (S - 1) + rng.uniform(-jitter, jitter);
        for (int i = 0; i < S; ++i) {
            for (int j = 0; j < S; ++j) {
                const float dy = i - cy, dx = j - cx;
                if (dy * dy + dx * dx <= r * r)
                    img[static_cast<std::size_t>(i) * S + j] = intensity;
            }
        }
    } else if (family == "checker") {
        const int phase = static_cast<int>(rng.next_below(2));
        for (int i = 0; i < S; ++i) {
            for (int j = 0; j < S; ++j) {
                if (((i / 2 + j / 2) + phase) % 2 == 0)
                    img[static_cast<std::size_t>(i) * S + j] = 0.30f;
            }
        }
    } else {
        throw ArgumentError("unknown synthetic family '" + family + "'");
    }
}

}  // namespace

LabeledDataset generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.classes < 2) throw ArgumentError("synthetic dataset needs at least 2 classes");
    if (cfg.samples_per_class < 1) throw ArgumentError("samples_per_class must be positive");
    if (cfg.image_size < 8) throw ArgumentError("image_size must be at least 8");
    std::vector<std::string> families = cfg.families;
    if (families.empty()) {
        for (int c = 0; c < cfg.classes; ++c)
            families.push_back(kDefaultFamilies[static_cast<std::size_t>(c) %
                                                kDefaultFamilies.size()]);
    }
    if (static_cast<int>(families.size()) != cfg.classes) {
        throw ArgumentError("families list must name one family per class");
    }

    const int S = cfg.image_size;
    const int N = cfg.classes * cfg.samples_per_class;
    std::vector<float> all(static_cast<std::size_t>(N) * S * S, 0.0f);
    std::vector<int> labels(static_cast<std::size_t>(N));
    Rng rng(cfg.seed);
    std::size_t idx = 0;
    for (int c = 0; c < cfg.classes; ++c) {
        for (int s = 0; s < cfg.samples_per_class; ++s, ++idx) {
            std::vector<float> img(static_cast<std::size_t>(S) * S, 0.0f);
            draw_family(families[static_cast<std::size_t>(c)], S, rng, img);
            for (auto& v : img) v = quantize(v + cfg.noise * rng.gaussian());
            std::copy(img.begin(), img.end(), all.begin() + idx * img.size());
            labels[idx] = c;
        }
    }
    return LabeledDataset::create(Tensor::from_data({N, 1, S, S}, std::move(all)),
                                  std::move(labels), cfg.classes, "synthetic");
}

// --- IDX loader -----------------------------------------------------------

namespace {

std::uint32_t read_be_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("truncated IDX file: " + path);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | b[3];
}

void write_be_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v >> 24), static_cast<char>((v >> 16) & 0xff),
                 static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
    os.write(b, 4);
}

struct IdxHeader {
    int dtype;
    std::vector<std::uint32_t> dims;
};

IdxHeader read_idx_header(std::istream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is || b[0] != 0 || b[1] != 0) throw FormatError("bad IDX magic in " + path);
    IdxHeader h;
    h.dtype = b[2];
    const int ndims = b[3];
    for (int i = 0; i < ndims; ++i) h.dims.push_back(read_be_u32(is, path));
    return h;
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw FormatError("cannot open " + images_path);
    IdxHeader ih = read_idx_header(imgs, images_path);
    if (ih.dtype != 0x08) {
        throw FormatError("unsupported IDX dtype " + std::to_string(ih.dtype) + " in " +
                          images_path + " (only unsigned byte is supported)");
    }
    if (ih.dims.size() != 3 && ih.dims.size() != 4) {
        throw FormatError("IDX image file must have 3 or 4 dimensions, got " +
                          std::to_string(ih.dims.size()));
    }
    const int N = static_cast<int>(ih.dims[0]);
    const int C = ih.dims.size() == 4 ? static_cast<int>(ih.dims[1]) : 1;
    const int H = static_cast<int>(ih.dims[ih.dims.size() - 2]);
    const int W = static_cast<int>(ih.dims[ih.dims.size() - 1]);
    const std::size_t count = static_cast<std::size_t>(N) * C * H * W;
    std::vector<unsigned char> raw(count);
    imgs.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
    if (!imgs) throw FormatError("truncated IDX payload in " + images_path);
    std::vector<float> pixels(count);
    for (std::size_t i = 0; i < count; ++i) pixels[i] = raw[i] / 255.0f;

    std::ifstream lbls(labels_path, std::ios::binary);
    if (!lbls) throw FormatError("cannot open " + labels_path);
    IdxHeader lh = read_idx_header(lbls, labels_path);
    if (lh.dtype != 0x08) throw FormatError("unsupported IDX dtype in " + labels_path);
    if (lh.dims.size() != 1) throw FormatError("IDX label file must be 1-dimensional");
    const int LN = static_cast<int>(lh.dims[0]);
    if (LN != N) {
        throw ArgumentError("label count " + std::to_string(LN) +
                            " does not match image count " + std::to_string(N));
    }
    std::vector<unsigned char> lraw(static_cast<std::size_t>(LN));
    lbls.read(reinterpret_cast<char*>(lraw.data()), LN);
    if (!lbls) throw FormatError("truncated IDX payload in " + labels_path);
    std::vector<int> labels(lraw.begin(), lraw.end());
    const int K = labels.empty() ? 1 : *std::max_element(labels.begin(), labels.end()) + 1;
    return LabeledDataset::create(Tensor::from_data({N, C, H, W}, std::move(pixels)),
                                  std::move(labels), K, images_path);
}

void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path) {
    const int N = ds.images.dim(0), C = ds.images.dim(1), H = ds.images.dim(2),
              W = ds.images.dim(3);
    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) throw FormatError("cannot open " + images_path + " for writing");
    const bool multi_channel = C > 1;
    const char hdr[4] = {0, 0, 0x08, static_cast<char>(multi_channel ? 4 : 3)};
    imgs.write(hdr, 4);
    write_be_u32(imgs, static_cast<std::uint32_t>(N));
    if (multi_channel) write_be_u32(imgs, static_cast<std::uint32_t>(C));
    write_be_u32(imgs, static_cast<std::uint32_t>(H));
    write_be_u32(imgs, static_cast<std::uint32_t>(W));
    for (float v : ds.images.data()) {
        imgs.put(static_cast<char>(std::lround(v * 255.0f)));
    }

    std::ofstream lbls(labels_path, std::ios::binary);
    if (!lbls) throw FormatError("cannot open " + labels_path + " for writing");
    const char lhdr[4] = {0, 0, 0x08, 1};
    lbls.write(lhdr, 4);
    write_be_u32(lbls, static_cast<std::uint32_t>(N));
    for (int l : ds.labels) lbls.put(static_cast<char>(l));
}

SplitPlan build_split(const LabeledDataset& ds, SplitMode mode, int class_id,
                      double test_fraction, std::uint64_t seed, bool balanced,
                      int anomaly_class_id) {
    if (class_id < 0 || class_id >= ds.num_classes) {
        throw ArgumentError("split class id " + std::to_string(class_id) +
                            " outside dataset classes");
    }
    if (test_fraction <= 0.0 || test_fraction >= 1.0) {
        throw ArgumentError("test_fraction must lie in (0,1)");
    }
    SplitPlan plan;
    plan.mode = mode;
    plan.class_id = class_id;
    if (mode == SplitMode::OneVsOne) {
        if (anomaly_class_id < 0 || anomaly_class_id >= ds.num_classes ||
            anomaly_class_id == class_id) {
            throw ArgumentError("one_vs_one requires a distinct anomaly class id");
        }
        plan.anomaly_class_id = anomaly_class_id;
    }

    std::vector<int> normal_idx, anomaly_idx;
    for (int i = 0; i < ds.size(); ++i) {
        const int lbl = ds.labels[static_cast<std::size_t>(i)];
        if (plan.is_anomaly_label(lbl)) {
            anomaly_idx.push_back(i);
        } else if (mode != SplitMode::OneVsOne || lbl == class_id) {
            normal_idx.push_back(i);
        }
    }
    if (normal_idx.empty()) throw ArgumentError("designated normal class has no samples");
    if (anomaly_idx.empty()) throw ArgumentError("anomaly pool is empty");

    Rng rng(seed);
    // Fisher-Yates with the toolkit RNG for determinism across platforms.
    auto shuffle = [&rng](std::vector<int>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[rng.next_below(i)]);
        }
    };
    shuffle(normal_idx);
    shuffle(anomaly_idx);

    std::size_t n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(normal_idx.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, normal_idx.size() - 1);
    plan.test_normal.assign(normal_idx.begin(),
                            normal_idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    plan.train_normal.assign(normal_idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                             normal_idx.end());
    if (balanced && anomaly_idx.size() > plan.test_normal.size()) {
        anomaly_idx.resize(plan.test_normal.size());
    }
    plan.test_anomaly = std::move(anomaly_idx);
    std::sort(plan.train_normal.begin(), plan.train_normal.end());
    std::sort(plan.test_normal.begin(), plan.test_normal.end());
    std::sort(plan.test_anomaly.begin(), plan.test_anomaly.end());
    return plan;
}

PatchSet extract_patches(const Tensor& image, int patch, int stride) {
    if (patch <= 0 || stride <= 0) throw ArgumentError("patch and stride must be positive");
    if (stride > patch) throw ArgumentError("stride must not exceed the patch size");
    if (image.ndim() != 3) {
        throw DimensionError("extract_patches expects [C,H,W], got " +
                             shape_str(image.shape()));
    }
    const int C = image.dim(0);
    const int H = std::max(image.dim(1), patch);
    const int W = std::max(image.dim(2), patch);

    // Zero-pad undersized images up to the patch size.
    std::vector<float> padded(static_cast<std::size_t>(C) * H * W, 0.0f);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < image.dim(1); ++i)
            for (int j = 0; j < image.dim(2); ++j)
                padded[(static_cast<std::size_t>(c) * H + i) * W + j] =
                    image.data()[(static_cast<std::size_t>(c) * image.dim(1) + i) *
                                     image.dim(2) + j];

    auto anchors_1d = [&](int extent) {
        std::vector<int> a;
        for (int pos = 0; pos < extent - patch; pos += stride) a.push_back(pos);
        a.push_back(extent - patch);  // clamped final anchor covers the edge
        return a;
    };
    const auto rows = anchors_1d(H);
    const auto cols = anchors_1d(W);

    PatchSet out;
    std::vector<float> data;
    data.reserve(rows.size() * cols.size() * static_cast<std::size_t>(C) * patch * patch);
    for (int r : rows) {
        for (int cc : cols) {
            out.anchors.emplace_back(r, cc);
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < patch; ++i)
                    for (int j = 0; j < patch; ++j)
                        data.push_back(
                            padded[(static_cast<std::size_t>(c) * H + r + i) * W + cc + j]);
        }
    }
    out.patches = Tensor::from_data(
        {static_cast<int>(out.anchors.size()), C, patch, patch}, std::move(data));
    return out;
}

Tensor gather_images(const LabeledDataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) throw ArgumentError("gather_images: empty index list");
    const int C = ds.images.dim(1), H = ds.images.dim(2), W = ds.images.dim(3);
    const std::size_t stride = static_cast<std::size_t>(C) * H * W;
    std::vector<float> data;
    data.reserve(indices.size() * stride);
    for (int idx : indices) {
        if (idx < 0 || idx >= ds.size()) throw ArgumentError("image index out of range");
        auto src = ds.images.data().subspan(static_cast<std::size_t>(idx) * stride, stride);
        data.insert(data.end(), src.begin(), src.end());
    }
    return Tensor::from_data({static_cast<int>(indices.size()), C, H, W}, std::move(data));
}

LabeledDataset subset_dataset(const LabeledDataset& ds, const std::vector<int>& indices,
                              const std::string& name) {
    std::set<int> present;
    for (int idx : indices) present.insert(ds.labels[static_cast<std::size_t>(idx)]);
    std::map<int, int> remap;
    int next = 0;
    for (int c : present) remap[c] = next++;
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (int idx : indices) labels.push_back(remap[ds.labels[static_cast<std::size_t>(idx)]]);
    return LabeledDataset::create(gather_images(ds, indices), std::move(labels), next, name);
}

}  // namespace adkd
