#pragma once

#include "l3dg/cli/synthetic.hpp"
#include "l3dg/gridfit/fit.hpp"

namespace l3dg::cli {

    /// Fixed world-to-unit-cube map for synthetic scenes: [-0.6, 0.6]^3 onto
    /// [0.05, 0.95]^3, shared by every scene so latents are comparable.
    gridfit::Normalization synthetic_normalization();

    struct SceneFitConfig {
        int resolution = 32;
        int views = 16;
        int image_size = 64;
        int init_points = 20000;
        gridfit::FitConfig fit{};
        std::uint64_t seed = 0;
    };

    struct FittedScene {
        gridfit::SparseGaussianGrid grid;
        std::vector<gridfit::TrainingView> views;
        double psnr = 0;
    };

    /// Ray-traces the orbit views, initialises the grid from surface samples
    /// and fits it; `psnr` is the mean over the training views.
    FittedScene fit_synthetic(const SyntheticScene& scene, const SceneFitConfig& cfg);

    /// Ray-traced orbit views of a scene.
    std::vector<gridfit::TrainingView> synthetic_views(const SyntheticScene& scene, int count, int size);

} // namespace l3dg::cli
