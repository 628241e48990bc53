#pragma once

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "gradroute/core/error.hpp"
#include "gradroute/core/tensor.hpp"

namespace gradroute {

// Parameter name -> gradient tensor of matching shape.
template <class T>
using GradientMap = std::map<std::string, Tensor<T>>;

// Append-only record of the forward computation. Node parents always precede
// their children, so reverse insertion order is a valid backward topological
// order. One tape per training step, confined to one thread.
template <class T>
class Tape {
public:
    struct Node {
        Shape shape;
        // Reads this node's accumulated gradient, adds contributions to parents.
        std::function<void(Tape&, const std::vector<T>&)> backward;
        std::string leaf_name; // nonempty for named parameter leaves
    };

    int add_node(Shape shape, std::function<void(Tape&, const std::vector<T>&)> bw) {
        nodes_.push_back(Node{std::move(shape), std::move(bw), {}});
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Named leaf for a parameter buffer. Re-leafing the same name returns the
    // existing node so tied uses accumulate into one gradient.
    Tensor<T> leaf(const std::string& name, const Tensor<T>& value) {
        auto it = leaf_index_.find(name);
        if (it != leaf_index_.end()) {
            Tensor<T> t = value.detached();
            t.tape = this;
            t.node = it->second;
            return t;
        }
        nodes_.push_back(Node{value.shape, nullptr, name});
        int id = static_cast<int>(nodes_.size()) - 1;
        leaf_index_.emplace(name, id);
        Tensor<T> t = value.detached();
        t.tape = this;
        t.node = id;
        return t;
    }

    // Anonymous differentiable input (used by gradient checks).
    Tensor<T> input(const Tensor<T>& value) {
        nodes_.push_back(Node{value.shape, nullptr, {}});
        Tensor<T> t = value.detached();
        t.tape = this;
        t.node = static_cast<int>(nodes_.size()) - 1;
        return t;
    }

    std::vector<T>& grad(int id) {
        auto& g = grads_[static_cast<size_t>(id)];
        if (g.empty()) g.assign(shape_size(nodes_[static_cast<size_t>(id)].shape), T(0));
        return g;
    }

    bool has_grad(int id) const { return !grads_[static_cast<size_t>(id)].empty(); }

    size_t num_nodes() const { return nodes_.size(); }

    // Reverse-mode sweep from a scalar loss. Visits each node at most once, in
    // reverse insertion order; returns gradients for every named leaf (zeros
    // for leaves the loss does not reach).
    GradientMap<T> backward(const Tensor<T>& loss) {
        if (!loss.attached() || loss.tape != this)
            throw usage_error("backward: loss is not attached to this tape");
        if (loss.size() != 1)
            throw usage_error("backward: loss must be scalar, got shape " + shape_str(loss.shape));
        grads_.assign(nodes_.size(), {});
        grad(loss.node)[0] = T(1);
        for (int i = loss.node; i >= 0; --i) {
            const auto& g = grads_[static_cast<size_t>(i)];
            if (g.empty()) continue;
            auto& bw = nodes_[static_cast<size_t>(i)].backward;
            if (bw) bw(*this, g);
        }
        GradientMap<T> out;
        for (const auto& [name, id] : leaf_index_) {
            const auto& n = nodes_[static_cast<size_t>(id)];
            auto& g = grads_[static_cast<size_t>(id)];
            if (g.empty()) g.assign(shape_size(n.shape), T(0));
            out.emplace(name, Tensor<T>(n.shape, std::make_shared<std::vector<T>>(g)));
        }
        return out;
    }

    // Gradient of one node from the latest backward() (testing hook).
    std::vector<T> node_grad(int id) const {
        const auto& g = grads_[static_cast<size_t>(id)];
        if (!g.empty()) return g;
        return std::vector<T>(shape_size(nodes_[static_cast<size_t>(id)].shape), T(0));
    }

private:
    std::vector<Node> nodes_;
    std::vector<std::vector<T>> grads_;
    std::unordered_map<std::string, int> leaf_index_;
};

namespace detail {

// Tape for an op result: all attached operands must share one tape.
template <class T>
Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> xs) {
    Tape<T>* tp = nullptr;
    for (const Tensor<T>* x : xs) {
        if (!x->attached()) continue;
        if (tp && tp != x->tape) throw usage_error("operands attached to different tapes");
        tp = x->tape;
    }
    return tp;
}

template <class T>
void axpy(std::vector<T>& dst, const std::vector<T>& src) {
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

} // namespace detail

} // namespace gradroute
