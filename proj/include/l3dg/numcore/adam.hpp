#pragma once

#include "l3dg/numcore/autodiff.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace l3dg::nc {

    struct AdamHyper {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double decay = 1.0; // multiplied into lr by end_epoch()
    };

    template <typename T>
    struct AdamState {
        AdamHyper hyper;
        std::int64_t step = 0;
        std::vector<Tensor<T>> m;
        std::vector<Tensor<T>> v;

        void end_epoch() { hyper.lr *= hyper.decay; }
    };

    /// One bias-corrected Adam update over a parameter group. `lr_scale`, when
    /// non-empty, multiplies the learning rate per parameter tensor.
    template <typename T>
    void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads, AdamState<T>& state,
                   std::span<const double> lr_scale = {});

    /// Adam over graph leaves.
    template <typename T>
    class Adam {
    public:
        Adam() = default;
        Adam(std::vector<Var<T>> params, AdamHyper hyper, std::vector<double> lr_scale = {});

        void step();
        void zero_grad();
        void end_epoch() { state_.end_epoch(); }

        const std::vector<Var<T>>& params() const { return params_; }
        AdamState<T>& state() { return state_; }
        const AdamState<T>& state() const { return state_; }

        /// Replace parameter `i` after a structural edit. `source_rows[r]` names
        /// the old row that new row r inherits moments from, or -1 for fresh rows.
        void remap_rows(std::size_t i, Var<T> replacement, std::span<const std::int64_t> source_rows);

    private:
        std::vector<Var<T>> params_;
        std::vector<double> lr_scale_;
        AdamState<T> state_;
    };

} // namespace l3dg::nc
