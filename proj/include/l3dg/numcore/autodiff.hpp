#pragma once

#include "l3dg/numcore/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace l3dg::nc {

    template <typename T>
    struct Node {
        Tensor<T> value;
        Tensor<T> grad; // allocated on first touch
        bool requires_grad = false;
        bool leaf = true;
        const char* op = "leaf";
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward;

        Tensor<T>& grad_buffer() {
            if (grad.numel() != value.numel() || grad.shape() != value.shape())
                grad = Tensor<T>(value.shape());
            return grad;
        }
        bool has_grad() const { return grad.numel() == value.numel() && !grad.empty(); }
    };

    /// Handle to a value in the dynamic computation graph. Copies share the node.
    template <typename T>
    class Var {
    public:
        Var() = default;
        explicit Var(Tensor<T> value, bool requires_grad = false)
            : node_(std::make_shared<Node<T>>()) {
            node_->value = std::move(value);
            node_->requires_grad = requires_grad;
        }
        explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

        static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

        bool defined() const { return static_cast<bool>(node_); }
        const Tensor<T>& value() const { return node_->value; }
        /// In-place access for optimizers; never use on recorded intermediates.
        Tensor<T>& value_mut() { return node_->value; }
        const Shape& shape() const { return node_->value.shape(); }
        std::int64_t numel() const { return node_->value.numel(); }
        std::int64_t dim(int i) const { return node_->value.dim(i); }
        bool requires_grad() const { return node_ && node_->requires_grad; }

        bool has_grad() const { return node_->has_grad(); }
        /// Gradient, or a zero tensor of matching shape when none was accumulated.
        Tensor<T> grad() const {
            return node_->has_grad() ? node_->grad : Tensor<T>(node_->value.shape());
        }
        void zero_grad() { node_->grad = Tensor<T>(); }

        Node<T>* node() const { return node_.get(); }
        const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

    private:
        std::shared_ptr<Node<T>> node_;
    };

    /// Disables graph recording on the current thread for its lifetime.
    class NoGradGuard {
    public:
        NoGradGuard();
        ~NoGradGuard();
        NoGradGuard(const NoGradGuard&) = delete;
        NoGradGuard& operator=(const NoGradGuard&) = delete;

    private:
        bool previous_;
    };

    bool grad_mode_enabled();

    /// Builds a result node. The backward closure is stored only when recording
    /// is enabled and some parent requires a gradient.
    template <typename T>
    Var<T> record(const char* op, Tensor<T> value, std::vector<Var<T>> parents,
                  std::function<void(Node<T>&)> backward) {
        auto node = std::make_shared<Node<T>>();
        node->value = std::move(value);
        node->op = op;
        bool needs = false;
        if (grad_mode_enabled()) {
            for (const auto& p : parents)
                needs = needs || p.requires_grad();
        }
        if (needs) {
            node->requires_grad = true;
            node->leaf = false;
            node->parents.reserve(parents.size());
            for (auto& p : parents)
                node->parents.push_back(p.node_ptr());
            node->backward = std::move(backward);
        }
        return Var<T>(std::move(node));
    }

    /// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
    /// calls; intermediate gradients are recomputed on every call.
    template <typename T>
    void backward(const Var<T>& root);

    /// Gradient buffer of parent `i`, or nullptr when it does not need one.
    template <typename T>
    Tensor<T>* parent_grad(Node<T>& self, std::size_t i) {
        auto& p = self.parents[i];
        return p->requires_grad ? &p->grad_buffer() : nullptr;
    }

} // namespace l3dg::nc
