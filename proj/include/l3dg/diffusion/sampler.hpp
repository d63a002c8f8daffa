#pragma once

#include "l3dg/diffusion/schedule.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace l3dg::diff {

    /// Predicts v for a batch of noisy grids [B, ...] sharing timestep t.
    template <typename T>
    using Denoiser = std::function<nc::Tensor<T>(const nc::Tensor<T>& z_t, int t)>;

    struct SampleOptions {
        /// Per-channel [lo, hi] bounds for the z_0 estimate (last axis); empty disables clipping.
        std::vector<std::pair<double, double>> clip;
        /// false drops the posterior noise at every step (variance-0 chain).
        bool stochastic = true;
        /// Chains denoised together per network call.
        int batch = 1;
    };

    /// Ancestral DDPM chains from z_T ~ N(0, I), one per seed, each of shape
    /// `shape`. A chain's draws come only from its own seed, so a sample does
    /// not depend on the other seeds in the call.
    template <typename T>
    std::vector<nc::Tensor<T>> ddpm_sample(const NoiseSchedule& schedule, const Denoiser<T>& denoise,
                                           const nc::Shape& shape, const std::vector<std::uint64_t>& seeds,
                                           const SampleOptions& options = {});

} // namespace l3dg::diff
