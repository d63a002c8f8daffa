#include "l3dg/cli/scenes.hpp"

namespace l3dg::cli {

    gridfit::Normalization synthetic_normalization() { return {0.75, {0.5, 0.5, 0.5}}; }

    std::vector<gridfit::TrainingView> synthetic_views(const SyntheticScene& scene, int count, int size) {
        std::vector<gridfit::TrainingView> views;
        for (const auto& cam : orbit_cameras(count, size))
            views.push_back({cam, ray_trace(scene, cam)});
        return views;
    }

    FittedScene fit_synthetic(const SyntheticScene& scene, const SceneFitConfig& cfg) {
        FittedScene out;
        out.views = synthetic_views(scene, cfg.views, cfg.image_size);
        nc::Rng rng(nc::derive_seed(cfg.seed, "scene.points"));
        auto cloud = surface_points(scene, cfg.init_points, rng);
        const auto norm = synthetic_normalization();
        for (auto& p : cloud.points)
            p = norm.apply(p);
        auto init = gridfit::assign_to_grid(cloud.points, cloud.colors, cfg.resolution, norm);
        auto fc = cfg.fit;
        fc.seed = nc::derive_seed(cfg.seed, "scene.fit");
        out.grid = gridfit::fit<float>(std::move(init), out.views, fc).grid;
        out.psnr = gridfit::mean_psnr(out.grid, out.views, fc.background);
        return out;
    }

} // namespace l3dg::cli
