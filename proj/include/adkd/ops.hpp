#pragma once

#include <vector>

#include "adkd/tensor.hpp"

namespace adkd {

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);

// Sum of all elements, 64-bit accumulation; returns shape [1].
Tensor sum_all(const Tensor& a);

// a[M,K] x b[K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);

// x[N,D] + bias[D] broadcast over rows.
Tensor bias_add_rows(const Tensor& x, const Tensor& bias);

// Cross-correlation (no kernel flip), zero padding. bias[O] is optional
// (pass a default-constructed Tensor to skip it).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad);

// Counter-clockwise quarter turns on the last two axes; k in 0..3.
Tensor rot90(const Tensor& x, int k);

Tensor relu(const Tensor& x);

// x[N,C,H,W] -> [N,C], mean over spatial axes.
Tensor global_avg_pool(const Tensor& x);

// Copying reshape; numel must be preserved.
Tensor reshape(const Tensor& x, Shape new_shape);

// x[N,C,H,W] -> [N,C,fH,fW], nearest neighbor.
Tensor upsample_nearest2d(const Tensor& x, int factor);

// Mean over all elements of squared differences; target is detached.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Mean over batch of -log softmax(logits)[label]; max-stabilized.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Normalized-temperature cross entropy over cosine similarities.
// Rows 2i, 2i+1 are the two views of sample i; requires at least 2 samples.
Tensor nt_xent_loss(const Tensor& embeddings, float temperature);

}  // namespace adkd
