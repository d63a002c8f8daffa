#pragma once

#include "l3dg/splat/gaussian.hpp"
#include "l3dg/splat/render.hpp"

#include <array>
#include <compare>
#include <map>
#include <stdexcept>
#include <vector>

namespace l3dg::gridfit {

    struct Voxel {
        int x = 0, y = 0, z = 0;
        auto operator<=>(const Voxel&) const = default;
    };

    /// Maps world coordinates into the unit cube: x' = scale * x + offset.
    struct Normalization {
        double scale = 1.0;
        std::array<double, 3> offset{0, 0, 0};

        std::array<double, 3> apply(const std::array<double, 3>& x) const {
            return {scale * x[0] + offset[0], scale * x[1] + offset[1], scale * x[2] + offset[2]};
        }
    };

    /// Grid-assigned Gaussians over the unit cube, at most one per voxel.
    struct SparseGaussianGrid {
        int resolution = 0;
        double voxel_size = 0;
        Normalization normalization;
        std::map<Voxel, splat::GaussianPrimitive> cells;

        static SparseGaussianGrid empty(int resolution) {
            SparseGaussianGrid g;
            g.resolution = resolution;
            g.voxel_size = 1.0 / resolution;
            return g;
        }

        std::size_t size() const { return cells.size(); }
        bool in_bounds(const Voxel& v) const {
            return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < resolution && v.y < resolution && v.z < resolution;
        }
        std::array<double, 3> voxel_center(const Voxel& v) const {
            return {(v.x + 0.5) * voxel_size, (v.y + 0.5) * voxel_size, (v.z + 0.5) * voxel_size};
        }
        Voxel voxel_of(const std::array<double, 3>& p) const;
        /// mu = y_kappa + psi(delta)
        std::array<double, 3> center(const Voxel& v, const splat::GaussianPrimitive& g) const;
    };

    /// 1.5 * tanh(delta) * voxel_size, componentwise.
    std::array<double, 3> psi(const std::array<double, 3>& delta, double voxel_size);

    class GridError : public std::invalid_argument {
    public:
        using std::invalid_argument::invalid_argument;
    };

    struct InitConfig {
        double opacity = 0.1;
        double margin = 0.05; // fraction of the unit cube left free on each side by bbox normalisation
    };

    /// Unit-cube bounding-box normalisation of a point set.
    Normalization fit_normalization(const std::vector<std::array<double, 3>>& points, double margin);

    /// One primitive per occupied voxel, from points already expressed in the
    /// grid's unit cube. Positions and colours are averaged per voxel.
    SparseGaussianGrid assign_to_grid(const std::vector<std::array<double, 3>>& points,
                                      const std::vector<std::array<double, 3>>& colors, int resolution,
                                      const Normalization& normalization = {}, const InitConfig& init = {});

    struct DensifyConfig {
        double grad_threshold = 0.0008;   // eps_delta
        double opacity_threshold = 0.005; // eps_alpha
        int interval = 100;
        double new_opacity = 0.1;
        double stop_fraction = 0.8; // no structural edits after this fraction of training
    };

    /// Mean view-space positional gradient norm per voxel since the last edit.
    using GradStats = std::map<Voxel, double>;

    /// Spawns primitives in inactive neighbour voxels that high-gradient
    /// primitives have drifted into. Existing primitives are left untouched.
    SparseGaussianGrid densify_step(const SparseGaussianGrid& grid, const GradStats& stats,
                                    const DensifyConfig& cfg = {});

    /// Removes primitives whose opacity is below `eps_alpha`.
    SparseGaussianGrid prune_step(const SparseGaussianGrid& grid, double eps_alpha);

    /// Packed [N, 23] rows and voxel-centre anchors, in voxel order.
    template <typename T>
    splat::SplatScene<T> to_scene(const SparseGaussianGrid& grid, bool requires_grad = false);

    /// Voxel keys in the row order used by to_scene.
    std::vector<Voxel> voxel_keys(const SparseGaussianGrid& grid);

    /// Renders the grid in the camera's (world) frame.
    nc::Tensor<float> render_grid(const SparseGaussianGrid& grid, const splat::Camera& world_camera,
                                  const splat::RenderSettings& settings = {});

} // namespace l3dg::gridfit
