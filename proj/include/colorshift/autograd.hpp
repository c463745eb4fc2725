#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "colorshift/tensor.hpp"

namespace colorshift {

// Reverse-mode automatic differentiation over Tensor<T>. A Var is a handle
// to a node in the computation DAG; ops build new nodes whose backward
// closures scatter the incoming gradient into their parents. backward()
// topologically sorts the reachable graph and runs the closures once, so a
// node reused in several places accumulates all contributions.
template <typename T>
class Var {
  public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        // gout is this node's accumulated gradient; the closure adds into
        // parents' grad buffers (already allocated and zeroed).
        std::function<void(const Tensor<T>& gout)> backward;
    };

    Var() = default;

    static Var leaf(Tensor<T> value, bool requires_grad = false) {
        Var v;
        v.node_ = std::make_shared<Node>();
        v.node_->value = std::move(value);
        v.node_->requires_grad = requires_grad;
        return v;
    }
    static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Node* node() const { return node_.get(); }

    // Builds a result node. parents whose requires_grad is false still sit in
    // the parent list (the closure may read their values) but receive no grad.
    static Var make(Tensor<T> value, const std::vector<Var>& parents,
                    std::function<void(const Tensor<T>&)> backward) {
        Var v;
        v.node_ = std::make_shared<Node>();
        v.node_->value = std::move(value);
        bool needs = false;
        for (const auto& p : parents) needs = needs || p.requires_grad();
        v.node_->requires_grad = needs;
        if (needs) {
            for (const auto& p : parents) v.node_->parents.push_back(p.node_);
            v.node_->backward = std::move(backward);
        }
        return v;
    }

    // Adds g into dst's grad buffer if it participates in differentiation.
    static void add_grad(Node* dst, const Tensor<T>& g) {
        if (!dst->requires_grad) return;
        for (size_t i = 0; i < g.v.size(); ++i) dst->grad.v[i] += g.v[i];
    }

    void backward() const {
        if (!node_) throw std::logic_error("backward on undefined Var");
        if (node_->value.numel() != 1)
            throw std::logic_error("backward requires a scalar output");
        // Topological order (parents before children in `order`).
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, size_t>> stack;
        stack.push_back({node_.get(), 0});
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node* p = n->parents[idx++].get();
                if (seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        for (Node* n : order) n->grad = Tensor<T>(n->value.shape);
        node_->grad.v[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward) n->backward(n->grad);
        }
    }

  private:
    std::shared_ptr<Node> node_;
};

}  // namespace colorshift
