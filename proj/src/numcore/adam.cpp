#include "l3dg/numcore/adam.hpp"

#include <cmath>

namespace l3dg::nc {

    template <typename T>
    void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads, AdamState<T>& state,
                   std::span<const double> lr_scale) {
        if (params.size() != grads.size())
            throw ShapeError("adam_step: parameter and gradient counts differ");
        if (!lr_scale.empty() && lr_scale.size() != params.size())
            throw ShapeError("adam_step: lr_scale count differs from parameter count");
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i]->shape() != grads[i]->shape())
                throw ShapeError("adam_step: gradient shape " + shape_str(grads[i]->shape()) +
                                 " does not match parameter " + shape_str(params[i]->shape()));
        if (state.m.size() != params.size()) {
            state.m.clear();
            state.v.clear();
            for (auto* p : params) {
                state.m.emplace_back(p->shape());
                state.v.emplace_back(p->shape());
            }
        }
        for (std::size_t i = 0; i < params.size(); ++i)
            if (state.m[i].shape() != params[i]->shape())
                throw ShapeError("adam_step: moment shape does not match parameter " + std::to_string(i));

        ++state.step;
        const auto& h = state.hyper;
        const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
        const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double lr = h.lr * (lr_scale.empty() ? 1.0 : lr_scale[i]);
            auto& p = *params[i];
            const auto& g = *grads[i];
            auto& m = state.m[i];
            auto& v = state.v[i];
            for (std::int64_t j = 0; j < p.numel(); ++j) {
                const double gj = g[j];
                const double mj = h.beta1 * m[j] + (1.0 - h.beta1) * gj;
                const double vj = h.beta2 * v[j] + (1.0 - h.beta2) * gj * gj;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                const double mhat = mj / bc1;
                const double vhat = vj / bc2;
                p[j] = static_cast<T>(p[j] - lr * mhat / (std::sqrt(vhat) + h.eps));
            }
        }
    }

    template <typename T>
    Adam<T>::Adam(std::vector<Var<T>> params, AdamHyper hyper, std::vector<double> lr_scale)
        : params_(std::move(params)),
          lr_scale_(std::move(lr_scale)) {
        if (lr_scale_.empty())
            lr_scale_.assign(params_.size(), 1.0);
        if (lr_scale_.size() != params_.size())
            throw ShapeError("Adam: lr_scale count differs from parameter count");
        state_.hyper = hyper;
        for (const auto& p : params_) {
            state_.m.emplace_back(p.shape());
            state_.v.emplace_back(p.shape());
        }
    }

    template <typename T>
    void Adam<T>::step() {
        std::vector<Tensor<T>*> ps;
        std::vector<Tensor<T>> gs;
        std::vector<const Tensor<T>*> gp;
        gs.reserve(params_.size());
        for (auto& p : params_) {
            ps.push_back(&p.value_mut());
            gs.push_back(p.grad());
        }
        for (auto& g : gs)
            gp.push_back(&g);
        adam_step<T>(ps, gp, state_, lr_scale_);
    }

    template <typename T>
    void Adam<T>::zero_grad() {
        for (auto& p : params_)
            p.zero_grad();
    }

    template <typename T>
    void Adam<T>::remap_rows(std::size_t i, Var<T> replacement, std::span<const std::int64_t> source_rows) {
        const auto& old = params_.at(i).value();
        const auto row_w = old.rank() ? old.numel() / std::max<std::int64_t>(old.dim(0), 1) : 1;
        const auto n_new = static_cast<std::int64_t>(source_rows.size());
        if (replacement.numel() != n_new * row_w)
            throw ShapeError("remap_rows: replacement size does not match row map");
        Tensor<T> m(replacement.shape()), v(replacement.shape());
        for (std::int64_t r = 0; r < n_new; ++r) {
            const auto src = source_rows[r];
            if (src < 0)
                continue;
            for (std::int64_t j = 0; j < row_w; ++j) {
                m[r * row_w + j] = state_.m[i][src * row_w + j];
                v[r * row_w + j] = state_.v[i][src * row_w + j];
            }
        }
        state_.m[i] = std::move(m);
        state_.v[i] = std::move(v);
        params_[i] = std::move(replacement);
    }

    template void adam_step<float>(std::span<Tensor<float>* const>, std::span<const Tensor<float>* const>,
                                   AdamState<float>&, std::span<const double>);
    template void adam_step<double>(std::span<Tensor<double>* const>, std::span<const Tensor<double>* const>,
                                    AdamState<double>&, std::span<const double>);
    template class Adam<float>;
    template class Adam<double>;

} // namespace l3dg::nc
