#include "adkd/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace adkd {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int e : s) {
        if (e <= 0) throw ArgumentError("non-positive extent in shape " + shape_str(s));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    Tensor t = wrap(std::move(n));
    t.check_finite("tensor creation");
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<float>(n, 0.0f), requires_grad);
}

Tensor Tensor::full(Shape shape, float v, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<float>(n, v), requires_grad);
}

void Tensor::set_requires_grad(bool rq) {
    if (!is_leaf()) throw StateError("requires_grad can only be toggled on leaf tensors");
    n_->requires_grad = rq;
}

void Tensor::zero_grad() { n_->grad.assign(n_->value.size(), 0.0f); }

float Tensor::item() const {
    if (numel() != 1) {
        throw ArgumentError("item() requires a single-element tensor, got shape " +
                            shape_str(shape()));
    }
    return n_->value[0];
}

Tensor Tensor::detach_copy(bool requires_grad) const {
    return from_data(n_->shape, n_->value, requires_grad);
}

void Tensor::check_finite(const std::string& what) const {
    for (float v : n_->value) {
        if (!std::isfinite(v)) throw NumericError("non-finite value in " + what);
    }
}

namespace {

void topo_visit(detail::Node* n, std::unordered_set<detail::Node*>& seen,
                std::vector<detail::Node*>& order) {
    // Iterative DFS postorder; graphs can be deep for long conv stacks.
    struct Frame {
        detail::Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack{{n, 0}};
    seen.insert(n);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::Node* p = f.node->parents[f.next_parent++].get();
            if (seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
}

}  // namespace

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ArgumentError("backward on undefined tensor");
    if (loss.numel() != 1) {
        throw ArgumentError("backward requires a scalar loss, got shape " +
                            shape_str(loss.shape()));
    }
    detail::Node* root = loss.node().get();
    if (root->backward_done) {
        throw StateError("backward already ran on this loss; rebuild the graph to run again");
    }
    root->backward_done = true;

    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> order;
    topo_visit(root, seen, order);

    for (detail::Node* n : order) {
        if (n->requires_grad) n->ensure_grad();
    }
    root->ensure_grad();
    root->grad[0] += 1.0f;

    // Postorder places parents before consumers; reverse iteration therefore
    // finishes every consumer of a node before the node's own backprop runs.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backprop && n->requires_grad) n->backprop(*n);
    }
}

}  // namespace adkd
