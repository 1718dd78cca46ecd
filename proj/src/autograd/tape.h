#pragma once
#include <functional>
#include <memory>
#include <vector>

#include "core/tensor.h"

namespace ms {

// reverse-mode tape. Nodes created by ops live on the tape in topological
// order; parameter leaves live outside (owned by modules) and only collect
// gradient. grad buffers allocate lazily on first accumulation.
template <typename T>
struct Node {
    Ten<T> val;
    Ten<T> grad;
    bool needs_grad = false;
    bool grad_live = false;  // grad allocated and seeded/accumulated
    std::function<void(Node<T>&)> back;  // accumulates into parents

    Ten<T>& ensure_grad() {
        if (!grad_live) {
            grad.shape = val.shape;
            grad.v.assign(val.v.size(), (T)0);
            grad_live = true;
        }
        return grad;
    }
    void zero_grad() {
        if (grad_live) std::fill(grad.v.begin(), grad.v.end(), (T)0);
    }
};

template <typename T>
class Tape {
public:
    Node<T>* leaf(Ten<T> v, bool needs_grad = false) {
        auto n = std::make_unique<Node<T>>();
        n->val = std::move(v);
        n->needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return nodes_.back().get();
    }

    Node<T>* make(Ten<T> v, std::initializer_list<Node<T>*> parents,
                  std::function<void(Node<T>&)> back) {
        auto n = std::make_unique<Node<T>>();
        n->val = std::move(v);
        for (auto* p : parents)
            if (p && p->needs_grad) { n->needs_grad = true; break; }
        if (n->needs_grad) n->back = std::move(back);
        nodes_.push_back(std::move(n));
        return nodes_.back().get();
    }

    // root must be scalar-shaped; seeds with 1 and sweeps the tape backwards
    void backward(Node<T>* root) {
        check(root->val.numel() == 1, ErrKind::validation, "backward root must be scalar");
        root->ensure_grad();
        root->grad.v[0] = (T)1;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<T>* n = it->get();
            if (n->grad_live && n->back) n->back(*n);
        }
    }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

private:
    std::vector<std::unique_ptr<Node<T>>> nodes_;
};

}  // namespace ms
