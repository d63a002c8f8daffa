#include "l3dg/gridfit/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace l3dg::gridfit {

    Voxel SparseGaussianGrid::voxel_of(const std::array<double, 3>& p) const {
        return {static_cast<int>(std::floor(p[0] / voxel_size)), static_cast<int>(std::floor(p[1] / voxel_size)),
                static_cast<int>(std::floor(p[2] / voxel_size))};
    }

    std::array<double, 3> SparseGaussianGrid::center(const Voxel& v, const splat::GaussianPrimitive& g) const {
        const auto c = voxel_center(v);
        const auto d = psi(g.delta, voxel_size);
        return {c[0] + d[0], c[1] + d[1], c[2] + d[2]};
    }

    std::array<double, 3> psi(const std::array<double, 3>& delta, double voxel_size) {
        return {1.5 * std::tanh(delta[0]) * voxel_size, 1.5 * std::tanh(delta[1]) * voxel_size,
                1.5 * std::tanh(delta[2]) * voxel_size};
    }

    Normalization fit_normalization(const std::vector<std::array<double, 3>>& points, double margin) {
        if (points.empty())
            throw GridError("cannot normalise an empty point set");
        std::array<double, 3> lo{}, hi{};
        lo.fill(std::numeric_limits<double>::infinity());
        hi.fill(-std::numeric_limits<double>::infinity());
        for (const auto& p : points)
            for (int k = 0; k < 3; ++k) {
                lo[k] = std::min(lo[k], p[k]);
                hi[k] = std::max(hi[k], p[k]);
            }
        const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], 1e-12});
        Normalization n;
        n.scale = (1.0 - 2.0 * margin) / extent;
        for (int k = 0; k < 3; ++k)
            n.offset[k] = 0.5 - n.scale * 0.5 * (lo[k] + hi[k]);
        return n;
    }

    SparseGaussianGrid assign_to_grid(const std::vector<std::array<double, 3>>& points,
                                      const std::vector<std::array<double, 3>>& colors, int resolution,
                                      const Normalization& normalization, const InitConfig& init) {
        if (points.empty())
            throw GridError("assign_to_grid: empty point set");
        if (!colors.empty() && colors.size() != points.size())
            throw GridError("assign_to_grid: colour count differs from point count");
        if (resolution <= 0)
            throw GridError("assign_to_grid: resolution must be positive");
        auto grid = SparseGaussianGrid::empty(resolution);
        grid.normalization = normalization;

        struct Acc {
            std::array<double, 3> pos{}, rgb{};
            int n = 0;
        };
        std::map<Voxel, Acc> acc;
        for (std::size_t i = 0; i < points.size(); ++i) {
            auto v = grid.voxel_of(points[i]);
            v.x = std::clamp(v.x, 0, resolution - 1);
            v.y = std::clamp(v.y, 0, resolution - 1);
            v.z = std::clamp(v.z, 0, resolution - 1);
            auto& a = acc[v];
            for (int k = 0; k < 3; ++k) {
                a.pos[k] += points[i][k];
                a.rgb[k] += colors.empty() ? 0.5 : colors[i][k];
            }
            ++a.n;
        }
        const double d = grid.voxel_size;
        const double logit = std::log(init.opacity / (1 - init.opacity));
        for (const auto& [v, a] : acc) {
            splat::GaussianPrimitive g;
            const auto c = grid.voxel_center(v);
            for (int k = 0; k < 3; ++k) {
                const double off = std::clamp((a.pos[k] / a.n - c[k]) / (1.5 * d), -0.99, 0.99);
                g.delta[k] = std::atanh(off);
                g.log_scale[k] = std::log(d);
                g.sh[k] = splat::sh_dc_for_color(a.rgb[k] / a.n);
            }
            g.opacity_logit = logit;
            grid.cells.emplace(v, g);
        }
        return grid;
    }

    SparseGaussianGrid densify_step(const SparseGaussianGrid& grid, const GradStats& stats,
                                    const DensifyConfig& cfg) {
        struct Competition {
            std::array<double, splat::kShValues> sh{};
            int n = 0;
        };
        std::map<Voxel, Competition> targets;
        for (const auto& [v, g] : grid.cells) {
            const auto it = stats.find(v);
            if (it == stats.end() || !(it->second > cfg.grad_threshold))
                continue;
            const Voxel moved = grid.voxel_of(grid.center(v, g));
            if (moved == v || !grid.in_bounds(moved) || grid.cells.contains(moved))
                continue;
            auto& c = targets[moved];
            for (int k = 0; k < splat::kShValues; ++k)
                c.sh[k] += g.sh[k];
            ++c.n;
        }
        SparseGaussianGrid out = grid;
        const double logit = std::log(cfg.new_opacity / (1 - cfg.new_opacity));
        for (const auto& [v, c] : targets) {
            splat::GaussianPrimitive g;
            g.log_scale = {std::log(grid.voxel_size), std::log(grid.voxel_size), std::log(grid.voxel_size)};
            for (int k = 0; k < splat::kShValues; ++k)
                g.sh[k] = c.sh[k] / c.n;
            g.opacity_logit = logit;
            out.cells.emplace(v, g);
        }
        return out;
    }

    SparseGaussianGrid prune_step(const SparseGaussianGrid& grid, double eps_alpha) {
        SparseGaussianGrid out = grid;
        std::erase_if(out.cells, [&](const auto& kv) { return kv.second.opacity() < eps_alpha; });
        return out;
    }

    std::vector<Voxel> voxel_keys(const SparseGaussianGrid& grid) {
        std::vector<Voxel> keys;
        keys.reserve(grid.size());
        for (const auto& kv : grid.cells)
            keys.push_back(kv.first);
        return keys;
    }

    template <typename T>
    splat::SplatScene<T> to_scene(const SparseGaussianGrid& grid, bool requires_grad) {
        const auto n = static_cast<std::int64_t>(grid.size());
        splat::SplatScene<T> s;
        s.max_offset = 1.5 * grid.voxel_size;
        s.anchors = nc::Tensor<T>({n, 3});
        nc::Tensor<T> params({n, splat::field::count});
        std::int64_t i = 0;
        for (const auto& [v, g] : grid.cells) {
            const auto c = grid.voxel_center(v);
            for (int k = 0; k < 3; ++k)
                s.anchors[i * 3 + k] = static_cast<T>(c[k]);
            const auto row = g.pack();
            for (int k = 0; k < splat::field::count; ++k)
                params[i * splat::field::count + k] = static_cast<T>(row[k]);
            ++i;
        }
        s.params = nc::Var<T>(std::move(params), requires_grad);
        return s;
    }

    nc::Tensor<float> render_grid(const SparseGaussianGrid& grid, const splat::Camera& world_camera,
                                  const splat::RenderSettings& settings) {
        nc::NoGradGuard guard;
        const auto cam = world_camera.in_normalized_space(grid.normalization.scale, grid.normalization.offset);
        return splat::render(to_scene<float>(grid), cam, settings).image.value();
    }

    template splat::SplatScene<float> to_scene(const SparseGaussianGrid&, bool);
    template splat::SplatScene<double> to_scene(const SparseGaussianGrid&, bool);

} // namespace l3dg::gridfit
