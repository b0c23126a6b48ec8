#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "srdet/core/param_store.hpp"
#include "srdet/core/tensor.hpp"

namespace srdet {

/// One value in a reverse-mode tape. Ops allocate nodes, record parents and
/// a closure that scatters this node's gradient into them.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad; // allocated on first use during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;
    std::string debug_name;

    Tensor<T>& ensure_grad() {
        if (grad.empty()) grad = Tensor<T>(value.shape(), T(0));
        return grad;
    }
};

template <typename T>
using Value = std::shared_ptr<Node<T>>;

template <typename T>
Value<T> make_node(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return n;
}

template <typename T>
bool any_requires_grad(const std::vector<Value<T>>& vs) {
    for (const auto& v : vs)
        if (v->requires_grad) return true;
    return false;
}

/// Builds one forward pass over a parameter store and runs the backward
/// sweep. The graph is rebuilt per invocation; leaves created via param()
/// flush their gradients back into the store after backward().
template <typename T>
class Graph {
public:
    Graph() = default;
    /// trainable=false makes param() leaves constant: no tape is recorded,
    /// which keeps pure inference free of gradient bookkeeping.
    explicit Graph(ParameterStore<T>& store, bool trainable = true)
        : store_(&store), trainable_(trainable) {}

    /// Constant leaf (no gradient).
    Value<T> input(Tensor<T> v) { return make_node(std::move(v)); }

    /// Differentiable leaf that is not a stored parameter.
    Value<T> var(Tensor<T> v) {
        auto n = make_node(std::move(v));
        n->requires_grad = true;
        return n;
    }

    /// Leaf bound to a store entry; gradient accumulates into the store.
    Value<T> param(const std::string& name) {
        if (!store_) throw ValidationError("graph has no parameter store attached");
        auto n = make_node(store_->value(name));
        n->debug_name = name;
        if (trainable_) {
            n->requires_grad = true;
            bound_.emplace_back(name, n);
        }
        return n;
    }

    /// Reverse sweep from a scalar root. Seeds d(root)/d(root)=1, walks the
    /// tape in reverse topological order, then adds parameter-leaf gradients
    /// into the store slots.
    void backward(const Value<T>& root) {
        if (root->value.size() != 1)
            throw ShapeError("backward root must be a scalar, got " + root->value.shape().str());
        if (!root->requires_grad) return;
        root->ensure_grad()[0] = T(1);

        std::vector<Node<T>*> order;
        topo_order(root.get(), order);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<T>* n = *it;
            if (n->backprop && n->requires_grad) n->backprop(*n);
        }
        for (auto& [name, node] : bound_) {
            if (node->grad.empty()) continue;
            Tensor<T>& slot = store_->grad(name);
            for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += node->grad[i];
        }
    }

    ParameterStore<T>* store() { return store_; }

private:
    static void topo_order(Node<T>* root, std::vector<Node<T>*>& order) {
        // Iterative DFS; graphs are deep (dozens of layers) but acyclic.
        std::unordered_set<Node<T>*> visited;
        std::vector<std::pair<Node<T>*, std::size_t>> stack;
        stack.emplace_back(root, 0);
        visited.insert(root);
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Node<T>* p = node->parents[next++].get();
                if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    ParameterStore<T>* store_ = nullptr;
    bool trainable_ = true;
    std::vector<std::pair<std::string, Value<T>>> bound_;
};

} // namespace srdet
