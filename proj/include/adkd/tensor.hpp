#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adkd/common.hpp"

namespace adkd {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

// One recorded operation (or leaf) on the implicit tape. Nodes are created in
// topological order by construction; backward() replays them in reverse.
struct Node {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;  // sized lazily, same length as value
    bool requires_grad = false;
    bool backward_done = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // accumulates into parent grads
    const char* op = "leaf";

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
    }
};

}  // namespace detail

// Dense row-major float32 tensor with optional gradient accumulation.
// Copying a Tensor copies a handle to the shared node, not the storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float v, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    std::size_t numel() const { return n_->numel(); }
    int dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(n_->shape.size()); }

    std::span<const float> data() const { return n_->value; }
    std::span<float> data_mut() { return n_->value; }
    std::span<const float> grad() const { return n_->grad; }

    bool requires_grad() const { return n_->requires_grad; }
    bool is_leaf() const { return !n_->backprop; }
    void set_requires_grad(bool rq);

    // Allocates (or clears) the grad buffer on a leaf.
    void zero_grad();

    // Value of a single-element tensor.
    float item() const;

    // Deep copy with no graph history; result is a leaf.
    Tensor detach_copy(bool requires_grad = false) const;

    void check_finite(const std::string& what) const;

    std::shared_ptr<detail::Node> node() const { return n_; }
    static Tensor wrap(std::shared_ptr<detail::Node> n) {
        Tensor t;
        t.n_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<detail::Node> n_;
};

// Reverse-mode sweep from a scalar loss. Grads of every reachable
// requires_grad node accumulate by summation; calling it twice on the same
// loss node is a StateError.
void backward(const Tensor& loss);

}  // namespace adkd
