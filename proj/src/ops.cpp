#include "adkd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace adkd {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Shape shape, std::vector<float> value,
                  std::vector<NodePtr> parents, const char* op) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->op = op;
    for (const auto& p : n->parents) {
        if (p->requires_grad) n->requires_grad = true;
    }
    return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<float> out(a.numel());
    auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto n = make_node(a.shape(), std::move(out), {a.node(), b.node()}, "add");
    if (n->requires_grad) {
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->backprop = [pa, pb](Node& self) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
            }
        };
    }
    return Tensor::wrap(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<float> out(a.numel());
    auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    auto n = make_node(a.shape(), std::move(out), {a.node(), b.node()}, "sub");
    if (n->requires_grad) {
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->backprop = [pa, pb](Node& self) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
            }
        };
    }
    return Tensor::wrap(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<float> out(a.numel());
    auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto n = make_node(a.shape(), std::move(out), {a.node(), b.node()}, "mul");
    if (n->requires_grad) {
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->backprop = [pa, pb](Node& self) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    pa->grad[i] += self.grad[i] * pb->value[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    pb->grad[i] += self.grad[i] * pa->value[i];
            }
        };
    }
    return Tensor::wrap(n);
}

Tensor scale(const Tensor& a, float c) {
    std::vector<float> out(a.numel());
    auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    auto n = make_node(a.shape(), std::move(out), {a.node()}, "scale");
    if (n->requires_grad) {
        Node* pa = a.node().get();
        n->backprop = [pa, c](Node& self) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * c;
        };
    }
    return Tensor::wrap(n);
}

Tensor sum_all(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    auto n = make_node({1}, {static_cast<float>(acc)}, {a.node()}, "sum_all");
    if (n->requires_grad) {
        Node* pa = a.node().get();
        n->backprop = [pa](Node& self) {
            pa->ensure_grad();
            float g = self.grad[0];
            for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g;
        };
    }
    return Tensor::wrap(n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw DimensionError("matmul: expected 2-d operands, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    }
    const int M = a.dim(0), K = a.dim(1), K2 = b.dim(0), N = b.dim(1);
    if (K != K2) {
        throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
    }
    std::vector<float> out(static_cast<std::size_t>(M) * N);
    auto av = a.data(), bv = b.data();
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            double acc = 0.0;
            for (int k = 0; k < K; ++k) {
                acc += static_cast<double>(av[i * K + k]) * bv[k * N + j];
            }
            out[static_cast<std::size_t>(i) * N + j] = static_cast<float>(acc);
        }
    }
    auto n = make_node({M, N}, std::move(out), {a.node(), b.node()}, "matmul");
    if (n->requires_grad) {
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->backprop = [pa, pb, M, K, N](Node& self) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (int i = 0; i < M; ++i) {
                    for (int k = 0; k < K; ++k) {
                        double acc = 0.0;
                        for (int j = 0; j < N; ++j) {
                            acc += static_cast<double>(self.grad[i * N + j]) *
                                   pb->value[k * N + j];
                        }
                        pa->grad[i * K + k] += static_cast<float>(acc);
                    }
                }
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (int k = 0; k < K; ++k) {
                    for (int j = 0; j < N; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < M; ++i) {
                            acc += static_cast<double>(pa->value[i * K + k]) *
                                   self.grad[i * N + j];
                        }
                        pb->grad[k * N + j] += static_cast<float>(acc);
                    }
                }
            }
        };
    }
    return Tensor::wrap(n);
}

Tensor bias_add_rows(const Tensor& x, const Tensor& bias) {
    if (x.ndim() != 2 || bias.ndim() != 1 || x.dim(1) != bias.dim(0)) {
        throw DimensionError("bias_add_rows: incompatible shapes " + shape_str(x.shape()) +
                             " and " + shape_str(bias.shape()));
    }
    const int N = x.dim(0), D = x.dim(1);
    std::vector<float> out(x.numel());
    auto xv = x.data(), bv = bias.data();
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < D; ++j) out[i * D + j] = xv[i * D + j] + bv[j];
    auto n = make_node(x.shape(), std::move(out), {x.node(), bias.node()}, "bias_add_rows");
    if (n->requires_grad) {
        Node* px = x.node().get();
        Node* pb = bias.node().get();
        n->backprop = [px, pb, N, D](Node& self) {
            if (px->requires_grad) {
                px->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (int j = 0; j < D; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < N; ++i) acc += self.grad[i * D + j];
                    pb->grad[j] += static_cast<float>(acc);
                }
            }
        };
    }
    return Tensor::wrap(n);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    if (x.ndim() != 4 || w.ndim() != 4) {
        throw DimensionError("conv2d: expected 4-d input and kernel, got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    if (stride <= 0) throw ArgumentError("conv2d: stride must be positive");
    if (pad < 0) throw ArgumentError("conv2d: pad must be non-negative");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), WC = w.dim(1), KH = w.dim(2), KW = w.dim(3);
    if (WC != C) {
        throw DimensionError("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                             shape_str(w.shape()));
    }
    if (KH > H + 2 * pad || KW > W + 2 * pad) {
        throw DimensionError("conv2d: kernel " + shape_str(w.shape()) +
                             " larger than padded input " + shape_str(x.shape()));
    }
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != O)) {
        throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) +
                             " does not match " + std::to_string(O) + " output channels");
    }
    const int HO = (H + 2 * pad - KH) / stride + 1;
    const int WO = (W + 2 * pad - KW) / stride + 1;

    std::vector<float> out(static_cast<std::size_t>(N) * O * HO * WO);
    auto xv = x.data();
    auto wv = w.data();
    for (int n = 0; n < N; ++n) {
        for (int o = 0; o < O; ++o) {
            const double b = bias.defined() ? bias.data()[o] : 0.0;
            for (int oh = 0; oh < HO; ++oh) {
                for (int ow = 0; ow < WO; ++ow) {
                    double acc = b;
                    for (int c = 0; c < C; ++c) {
                        for (int kh = 0; kh < KH; ++kh) {
                            const int ih = oh * stride + kh - pad;
                            if (ih < 0 || ih >= H) continue;
                            for (int kw = 0; kw < KW; ++kw) {
                                const int iw = ow * stride + kw - pad;
                                if (iw < 0 || iw >= W) continue;
                                acc += static_cast<double>(
                                           xv[((n * C + c) * H + ih) * W + iw]) *
                                       wv[((o * C + c) * KH + kh) * KW + kw];
                            }
                        }
                    }
                    out[((n * O + o) * HO + oh) * WO + ow] = static_cast<float>(acc);
                }
            }
        }
    }

    std::vector<NodePtr> parents{x.node(), w.node()};
    if (bias.defined()) parents.push_back(bias.node());
    auto node = make_node({N, O, HO, WO}, std::move(out), std::move(parents), "conv2d");
    if (node->requires_grad) {
        Node* px = x.node().get();
        Node* pw = w.node().get();
        Node* pb = bias.defined() ? bias.node().get() : nullptr;
        node->backprop = [px, pw, pb, N, C, H, W, O, KH, KW, HO, WO, stride,
                          pad](Node& self) {
            const bool gx = px->requires_grad;
            const bool gw = pw->requires_grad;
            if (gx) px->ensure_grad();
            if (gw) pw->ensure_grad();
            if (pb && pb->requires_grad) pb->ensure_grad();
            for (int n = 0; n < N; ++n) {
                for (int o = 0; o < O; ++o) {
                    for (int oh = 0; oh < HO; ++oh) {
                        for (int ow = 0; ow < WO; ++ow) {
                            const float g = self.grad[((n * O + o) * HO + oh) * WO + ow];
                            if (g == 0.0f) continue;
                            if (pb && pb->requires_grad) pb->grad[o] += g;
                            for (int c = 0; c < C; ++c) {
                                for (int kh = 0; kh < KH; ++kh) {
                                    const int ih = oh * stride + kh - pad;
                                    if (ih < 0 || ih >= H) continue;
                                    for (int kw = 0; kw < KW; ++kw) {
                                        const int iw = ow * stride + kw - pad;
                                        if (iw < 0 || iw >= W) continue;
                                        const std::size_t xi =
                                            ((n * C + c) * H + ih) * W + iw;
                                        const std::size_t wi =
                                            ((o * C + c) * KH + kh) * KW + kw;
                                        if (gx) px->grad[xi] += g * pw->value[wi];
                                        if (gw) pw->grad[wi] += g * px->value[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return Tensor::wrap(node);
}

namespace {

// Source index for each destination index of a CCW quarter-turn rotation.
// k=1: out(i,j) = in(j, W-1-i); k=2: out(i,j) = in(H-1-i, W-1-j);
// k=3: out(i,j) = in(H-1-j, i).
std::vector<std::size_t> rot_source_map(int H, int W, int k) {
    const int HO = (k % 2 == 0) ? H : W;
    const int WO = (k % 2 == 0) ? W : H;
    std::vector<std::size_t> map(static_cast<std::size_t>(HO) * WO);
    for (int i = 0; i < HO; ++i) {
        for (int j = 0; j < WO; ++j) {
            int si = 0, sj = 0;
            switch (k) {
                case 0: si = i; sj = j; break;
                case 1: si = j; sj = W - 1 - i; break;
                case 2: si = H - 1 - i; sj = W - 1 - j; break;
                case 3: si = H - 1 - j; sj = i; break;
            }
            map[static_cast<std::size_t>(i) * WO + j] =
                static_cast<std::size_t>(si) * W + sj;
        }
    }
    return map;
}

}  // namespace

Tensor rot90(const Tensor& x, int k) {
    if (k < 0 || k > 3) throw ArgumentError("rot90: k must be in 0..3, got " + std::to_string(k));
    if (x.ndim() < 2) throw DimensionError("rot90: needs at least 2 axes");
    const int H = x.dim(x.ndim() - 2);
    const int W = x.dim(x.ndim() - 1);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t batch = x.numel() / plane;
    auto map = rot_source_map(H, W, k);

    Shape out_shape = x.shape();
    if (k % 2 == 1) {
        out_shape[out_shape.size() - 2] = W;
        out_shape[out_shape.size() - 1] = H;
    }
    std::vector<float> out(x.numel());
    auto xv = x.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t p = 0; p < plane; ++p) out[b * plane + p] = xv[b * plane + map[p]];
    }
    auto n = make_node(std::move(out_shape), std::move(out), {x.node()}, "rot90");
    if (n->requires_grad) {
        Node* px = x.node().get();
        n->backprop = [px, map = std::move(map), plane, batch](Node& self) {
            px->ensure_grad();
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t p = 0; p < plane; ++p)
                    px->grad[b * plane + map[p]] += self.grad[b * plane + p];
            }
        };
    }
    return Tensor::wrap(n);
}

Tensor relu(const Tensor& x) {
    std::vector<float> out(x.numel());
    auto xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0f ? xv[i] : 0.0f;
    auto n = make_node(x.shape(), std::move(out), {x.node()}, "relu");
    if (n->requires_grad) {
        Node* px = x.node().get();
        // Subgradient at exactly 0 is 0.
        n->backprop = [px](Node& self) {
            px->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                if (px->value[i] > 0.0f) px->grad[i] += self.grad[i];
            }
        };
    }
    return Tensor::wrap(n);
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.ndim() != 4) {
        throw DimensionError("global_avg_pool: expected [N,C,H,W], got " +
                             shape_str(x.shape()));
    }
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<float> out(static_cast<std::size_t>(N) * C);
    auto xv = x.data();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) acc += xv[base + p];
            out[static_cast<std::size_t>(n) * C + c] =
                static_cast<float>(acc / static_cast<double>(plane));
        }
    }
    auto node = make_node({N, C}, std::move(out), {x.node()}, "global_avg_pool");
    if (node->requires_grad) {
        Node* px = x.node().get();
        node->backprop = [px, N, C, plane](Node& self) {
            px->ensure_grad();
            const float inv = 1.0f / static_cast<float>(plane);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    const float g = self.grad[static_cast<std::size_t>(n) * C + c] * inv;
                    const std::size_t base = (static_cast<std::size_t>(n) * C + c) * plane;
                    for (std::size_t p = 0; p < plane; ++p) px->grad[base + p] += g;
                }
            }
        };
    }
    return Tensor::wrap(node);
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(new_shape));
    }
    std::vector<float> out(x.data().begin(), x.data().end());
    auto n = make_node(std::move(new_shape), std::move(out), {x.node()}, "reshape");
    if (n->requires_grad) {
        Node* px = x.node().get();
        n->backprop = [px](Node& self) {
            px->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
        };
    }
    return Tensor::wrap(n);
}

Tensor upsample_nearest2d(const Tensor& x, int factor) {
    if (x.ndim() != 4) {
        throw DimensionError("upsample_nearest2d: expected [N,C,H,W], got " +
                             shape_str(x.shape()));
    }
    if (factor < 1) throw ArgumentError("upsample_nearest2d: factor must be >= 1");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int HO = H * factor, WO = W * factor;
    std::vector<float> out(static_cast<std::size_t>(N) * C * HO * WO);
    auto xv = x.data();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < HO; ++i)
                for (int j = 0; j < WO; ++j)
                    out[((n * C + c) * HO + i) * WO + j] =
                        xv[((n * C + c) * H + i / factor) * W + j / factor];
    auto node = make_node({N, C, HO, WO}, std::move(out), {x.node()}, "upsample_nearest2d");
    if (node->requires_grad) {
        Node* px = x.node().get();
        node->backprop = [px, N, C, H, W, HO, WO, factor](Node& self) {
            px->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int i = 0; i < HO; ++i)
                        for (int j = 0; j < WO; ++j)
                            px->grad[((n * C + c) * H + i / factor) * W + j / factor] +=
                                self.grad[((n * C + c) * HO + i) * WO + j];
        };
    }
    return Tensor::wrap(node);
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse_loss");
    const std::size_t n = pred.numel();
    double acc = 0.0;
    auto pv = pred.data(), tv = target.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pv[i]) - tv[i];
        acc += d * d;
    }
    auto node = std::make_shared<Node>();
    node->shape = {1};
    node->value = {static_cast<float>(acc / static_cast<double>(n))};
    node->parents = {pred.node(), target.node()};
    node->op = "mse_loss";
    // Target is detached: gradient flows to pred only.
    node->requires_grad = pred.requires_grad();
    if (node->requires_grad) {
        Node* pp = pred.node().get();
        Node* pt = target.node().get();
        node->backprop = [pp, pt, n](Node& self) {
            pp->ensure_grad();
            const float g = self.grad[0] * 2.0f / static_cast<float>(n);
            for (std::size_t i = 0; i < n; ++i)
                pp->grad[i] += g * (pp->value[i] - pt->value[i]);
        };
    }
    return Tensor::wrap(node);
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2) {
        throw DimensionError("softmax_cross_entropy: expected [N,K] logits, got " +
                             shape_str(logits.shape()));
    }
    const int N = logits.dim(0), K = logits.dim(1);
    if (static_cast<int>(labels.size()) != N) {
        throw ArgumentError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(N) + " rows");
    }
    for (int lbl : labels) {
        if (lbl < 0 || lbl >= K) {
            throw ArgumentError("softmax_cross_entropy: label " + std::to_string(lbl) +
                                " out of range 0.." + std::to_string(K - 1));
        }
    }
    auto lv = logits.data();
    std::vector<float> probs(logits.numel());
    double loss = 0.0;
    for (int i = 0; i < N; ++i) {
        double mx = lv[i * K];
        for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(lv[i * K + k]));
        double denom = 0.0;
        for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(lv[i * K + k]) - mx);
        for (int k = 0; k < K; ++k) {
            probs[i * K + k] = static_cast<float>(
                std::exp(static_cast<double>(lv[i * K + k]) - mx) / denom);
        }
        loss -= static_cast<double>(lv[i * K + labels[i]]) - mx - std::log(denom);
    }
    auto node = make_node({1}, {static_cast<float>(loss / N)}, {logits.node()},
                          "softmax_cross_entropy");
    if (node->requires_grad) {
        Node* pl = logits.node().get();
        node->backprop = [pl, probs = std::move(probs), labels, N, K](Node& self) {
            pl->ensure_grad();
            const float g = self.grad[0] / static_cast<float>(N);
            for (int i = 0; i < N; ++i) {
                for (int k = 0; k < K; ++k) {
                    float p = probs[i * K + k];
                    if (k == labels[i]) p -= 1.0f;
                    pl->grad[i * K + k] += g * p;
                }
            }
        };
    }
    return Tensor::wrap(node);
}

Tensor nt_xent_loss(const Tensor& embeddings, float temperature) {
    if (embeddings.ndim() != 2) {
        throw DimensionError("nt_xent_loss: expected [2N,D] embeddings, got " +
                             shape_str(embeddings.shape()));
    }
    const int R = embeddings.dim(0), D = embeddings.dim(1);
    if (R % 2 != 0 || R < 4) {
        throw ArgumentError("nt_xent_loss: needs an even row count >= 4 (at least 2 samples)");
    }
    if (temperature <= 0.0f) throw ArgumentError("nt_xent_loss: temperature must be positive");
    if (D < 2) throw DimensionError("nt_xent_loss: embedding dim must be >= 2");

    auto ev = embeddings.data();
    std::vector<double> z(static_cast<std::size_t>(R) * D);
    std::vector<double> norms(R);
    for (int i = 0; i < R; ++i) {
        double s = 0.0;
        for (int d = 0; d < D; ++d) {
            const double v = ev[i * D + d];
            s += v * v;
        }
        norms[i] = std::sqrt(std::max(s, 1e-24));
        for (int d = 0; d < D; ++d) z[i * D + d] = ev[i * D + d] / norms[i];
    }
    const double tau = temperature;
    auto sim = [&](int i, int j) {
        double s = 0.0;
        for (int d = 0; d < D; ++d) s += z[i * D + d] * z[j * D + d];
        return s / tau;
    };
    double loss = 0.0;
    for (int i = 0; i < R; ++i) {
        const int pair = (i % 2 == 0) ? i + 1 : i - 1;
        double mx = -1e300;
        for (int j = 0; j < R; ++j) {
            if (j == i) continue;
            mx = std::max(mx, sim(i, j));
        }
        double denom = 0.0;
        for (int j = 0; j < R; ++j) {
            if (j == i) continue;
            denom += std::exp(sim(i, j) - mx);
        }
        loss += (mx + std::log(denom)) - sim(i, pair);
    }
    loss /= R;

    auto node = make_node({1}, {static_cast<float>(loss)}, {embeddings.node()}, "nt_xent_loss");
    if (node->requires_grad) {
        Node* pe = embeddings.node().get();
        node->backprop = [pe, z = std::move(z), norms = std::move(norms), R, D,
                          tau](Node& self) {
            pe->ensure_grad();
            auto simz = [&](int i, int j) {
                double s = 0.0;
                for (int d = 0; d < D; ++d) s += z[i * D + d] * z[j * D + d];
                return s / tau;
            };
            // G[i][j] = dLoss/dS[i][j], S the temperature-scaled similarity.
            std::vector<double> G(static_cast<std::size_t>(R) * R, 0.0);
            for (int i = 0; i < R; ++i) {
                const int pair = (i % 2 == 0) ? i + 1 : i - 1;
                double mx = -1e300;
                for (int j = 0; j < R; ++j)
                    if (j != i) mx = std::max(mx, simz(i, j));
                double denom = 0.0;
                for (int j = 0; j < R; ++j)
                    if (j != i) denom += std::exp(simz(i, j) - mx);
                for (int j = 0; j < R; ++j) {
                    if (j == i) continue;
                    double p = std::exp(simz(i, j) - mx) / denom;
                    if (j == pair) p -= 1.0;
                    G[static_cast<std::size_t>(i) * R + j] = p / R;
                }
            }
            const float gout = self.grad[0];
            for (int k = 0; k < R; ++k) {
                std::vector<double> dz(D, 0.0);
                for (int j = 0; j < R; ++j) {
                    const double g =
                        G[static_cast<std::size_t>(k) * R + j] + G[static_cast<std::size_t>(j) * R + k];
                    if (g == 0.0) continue;
                    for (int d = 0; d < D; ++d) dz[d] += g * z[j * D + d] / tau;
                }
                // Through the row normalization: de = (dz - z (z.dz)) / ||e||.
                double dot = 0.0;
                for (int d = 0; d < D; ++d) dot += dz[d] * z[k * D + d];
                for (int d = 0; d < D; ++d) {
                    pe->grad[k * D + d] += gout * static_cast<float>(
                        (dz[d] - z[k * D + d] * dot) / norms[k]);
                }
            }
        };
    }
    return Tensor::wrap(node);
}

}  // namespace adkd
