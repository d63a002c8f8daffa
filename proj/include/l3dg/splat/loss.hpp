#pragma once

#include "l3dg/numcore/autodiff.hpp"

namespace l3dg::splat {

    /// Mean SSIM over pixels and channels of [H, W, C] images, 11x11 Gaussian
    /// window (sigma 1.5) renormalised where it leaves the image, C1 = 0.01^2,
    /// C2 = 0.03^2. Differentiable in `x` only.
    template <typename T>
    nc::Var<T> ssim(const nc::Var<T>& x, const nc::Tensor<T>& y);

    /// (1 - lambda) * mean|x - y| + lambda * (1 - SSIM(x, y)).
    template <typename T>
    nc::Var<T> loss_3dg(const nc::Var<T>& rendered, const nc::Tensor<T>& target, double lambda = 0.2);

    template <typename T>
    double psnr(const nc::Tensor<T>& a, const nc::Tensor<T>& b);

} // namespace l3dg::splat
