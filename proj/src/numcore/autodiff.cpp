#include "l3dg/numcore/autodiff.hpp"

#include <unordered_set>

namespace l3dg::nc {

    namespace {
        thread_local bool g_grad_enabled = true;
    }

    NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
    NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

    bool grad_mode_enabled() { return g_grad_enabled; }

    std::int64_t shape_numel(const Shape& shape) {
        std::int64_t n = 1;
        for (auto e : shape) {
            if (e < 0)
                throw ShapeError("negative extent in shape " + shape_str(shape));
            n *= e;
        }
        return n;
    }

    std::string shape_str(const Shape& shape) {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i)
                s += ", ";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

    template <typename T>
    void backward(const Var<T>& root) {
        if (!root.defined() || root.numel() != 1)
            throw ShapeError("backward() needs a scalar root, got shape " +
                             (root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
        if (!root.requires_grad())
            return;

        // Iterative post-order DFS gives a topological order.
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> seen;
        std::vector<std::pair<Node<T>*, std::size_t>> stack;
        stack.emplace_back(root.node(), 0);
        seen.insert(root.node());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Node<T>* p = node->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second)
                    stack.emplace_back(p, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }

        for (auto* n : order)
            if (!n->leaf)
                n->grad = Tensor<T>();
        root.node()->grad_buffer()[0] += T(1);

        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<T>* n = *it;
            if (n->leaf || !n->backward || !n->has_grad())
                continue;
            n->backward(*n);
        }
    }

    template void backward<float>(const Var<float>&);
    template void backward<double>(const Var<double>&);

} // namespace l3dg::nc
