#pragma once

#include "l3dg/gridfit/grid.hpp"

#include <functional>
#include <json.hpp>

namespace l3dg::gridfit {

    /// Adam step sizes per parameter group.
    struct LearningRates {
        double delta = 0.01;
        double log_scale = 0.005;
        double rotation = 0.001;
        double sh_dc = 0.0025;
        double sh_rest = 0.000125;
        double opacity = 0.05;
    };

    struct FitConfig {
        int iterations = 2000;
        double lambda_3dg = 0.2;
        bool densify_enabled = true;
        DensifyConfig densify;
        LearningRates lr;
        std::array<double, 3> background{1, 1, 1};
        std::uint64_t seed = 0;
    };

    nlohmann::json fit_config_to_json(const FitConfig& c);
    FitConfig fit_config_from_json(const nlohmann::json& j);

    /// A posed target image; the camera is in world coordinates.
    struct TrainingView {
        splat::Camera camera;
        nc::Tensor<float> image; // [H, W, 3]
    };

    struct FitProgress {
        int iteration = 0;
        double loss = 0;
        std::size_t primitives = 0;
        bool structural_step = false;
    };

    struct FitResult {
        SparseGaussianGrid grid;
        std::vector<double> losses;
        bool any_visible = true; // false when no primitive projected into any view
    };

    /// Optimises L_3DG from `init` with periodic densify/prune.
    template <typename T>
    FitResult fit(SparseGaussianGrid init, const std::vector<TrainingView>& views, const FitConfig& cfg,
                  const std::function<void(const FitProgress&)>& on_progress = {});

    /// Uniform random points in the unit cube, assigned to the grid.
    SparseGaussianGrid random_init(int resolution, int points, std::uint64_t seed, const InitConfig& init = {});

    double mean_psnr(const SparseGaussianGrid& grid, const std::vector<TrainingView>& views,
                     const std::array<double, 3>& background = {1, 1, 1});

    /// Target pixels whose accumulated opacity stays below `threshold` while the
    /// target differs from the background there.
    std::int64_t uncovered_pixels(const SparseGaussianGrid& grid, const std::vector<TrainingView>& views,
                                  const std::array<double, 3>& background = {1, 1, 1}, double threshold = 0.5);

} // namespace l3dg::gridfit
