#pragma once

#include "l3dg/numcore/autodiff.hpp"
#include "l3dg/splat/camera.hpp"
#include "l3dg/splat/gaussian.hpp"

#include <array>
#include <memory>
#include <optional>
#include <vector>

namespace l3dg::splat {

    struct Projection {
        std::array<double, 2> mean;
        std::array<double, 3> cov; // (xx, xy, yy)
        double depth;
    };

    /// Linearised perspective projection of a 3D Gaussian. Empty when the
    /// centre does not lie in front of the camera.
    std::optional<Projection> project_gaussian(const std::array<double, 3>& mu,
                                               const std::array<std::array<double, 3>, 3>& cov3d, const Camera& cam);

    /// exp(-1/2 d^T cov^-1 d). Empty when cov is not invertible.
    std::optional<double> eval_kernel(const std::array<double, 2>& u, const std::array<double, 2>& mean,
                                      const std::array<double, 3>& cov);

    struct RenderSettings {
        std::array<double, 3> background{1, 1, 1};
        double dilation = 0.3;       // px^2 added to the projected covariance diagonal
        double support_sigmas = 3.0; // Mahalanobis cutoff
        double min_weight = 1.0 / 255.0;
        double near_plane = 0.01;
    };

    /// Primitives as a differentiable [N, 23] parameter block placed around
    /// fixed anchors: mu = anchor + max_offset * tanh(delta).
    template <typename T>
    struct SplatScene {
        nc::Var<T> params;
        nc::Tensor<T> anchors; // [N, 3]
        double max_offset = 0;

        std::int64_t size() const { return params.defined() ? params.dim(0) : 0; }
    };

    /// Filled during the backward pass of a render.
    struct ViewGradients {
        std::vector<double> mean2d; // [N, 2], dL/d(NDC position)
        std::vector<std::uint8_t> visible;
    };

    template <typename T>
    struct RenderResult {
        nc::Var<T> image;               // [H, W, 3]
        nc::Tensor<T> accumulated_alpha; // [H, W]
        std::shared_ptr<ViewGradients> view_grads;
    };

    template <typename T>
    RenderResult<T> render(const SplatScene<T>& scene, const Camera& cam, const RenderSettings& settings = {});

    /// Per-pixel blending weights w_i * prod_{j<i}(1 - w_j) in depth order,
    /// plus the residual transmittance.
    struct PixelBlend {
        std::vector<double> weights;
        std::vector<std::int64_t> primitives;
        double residual = 1.0;
    };

    template <typename T>
    std::vector<PixelBlend> blend_weights(const SplatScene<T>& scene, const Camera& cam,
                                          const RenderSettings& settings = {});

} // namespace l3dg::splat
