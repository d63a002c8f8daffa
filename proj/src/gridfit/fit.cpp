#include "l3dg/gridfit/fit.hpp"

#include "l3dg/numcore/adam.hpp"
#include "l3dg/numcore/ops.hpp"
#include "l3dg/numcore/random.hpp"
#include "l3dg/splat/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace l3dg::gridfit {

    using Json = nlohmann::json;

    namespace {
        void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
            if (!j.is_object())
                throw std::invalid_argument(where + ": expected a JSON object");
            const std::set<std::string> allowed(keys.begin(), keys.end());
            for (const auto& [k, v] : j.items())
                if (!allowed.count(k))
                    throw std::invalid_argument(where + ": unknown key '" + k + "'");
        }
    } // namespace

    Json fit_config_to_json(const FitConfig& c) {
        return {{"iterations", c.iterations},
                {"lambda_3dg", c.lambda_3dg},
                {"densify_enabled", c.densify_enabled},
                {"densify",
                 {{"grad_threshold", c.densify.grad_threshold},
                  {"opacity_threshold", c.densify.opacity_threshold},
                  {"interval", c.densify.interval},
                  {"new_opacity", c.densify.new_opacity},
                  {"stop_fraction", c.densify.stop_fraction}}},
                {"lr",
                 {{"delta", c.lr.delta},
                  {"log_scale", c.lr.log_scale},
                  {"rotation", c.lr.rotation},
                  {"sh_dc", c.lr.sh_dc},
                  {"sh_rest", c.lr.sh_rest},
                  {"opacity", c.lr.opacity}}},
                {"background", c.background},
                {"seed", c.seed}};
    }

    FitConfig fit_config_from_json(const Json& j) {
        reject_unknown(j, {"iterations", "lambda_3dg", "densify_enabled", "densify", "lr", "background", "seed"},
                       "fit config");
        FitConfig c;
        c.iterations = j.value("iterations", c.iterations);
        c.lambda_3dg = j.value("lambda_3dg", c.lambda_3dg);
        c.densify_enabled = j.value("densify_enabled", c.densify_enabled);
        if (j.contains("densify")) {
            const auto& d = j["densify"];
            reject_unknown(d, {"grad_threshold", "opacity_threshold", "interval", "new_opacity", "stop_fraction"},
                           "fit densify config");
            c.densify.grad_threshold = d.value("grad_threshold", c.densify.grad_threshold);
            c.densify.opacity_threshold = d.value("opacity_threshold", c.densify.opacity_threshold);
            c.densify.interval = d.value("interval", c.densify.interval);
            c.densify.new_opacity = d.value("new_opacity", c.densify.new_opacity);
            c.densify.stop_fraction = d.value("stop_fraction", c.densify.stop_fraction);
        }
        if (j.contains("lr")) {
            const auto& l = j["lr"];
            reject_unknown(l, {"delta", "log_scale", "rotation", "sh_dc", "sh_rest", "opacity"}, "fit learning rates");
            c.lr.delta = l.value("delta", c.lr.delta);
            c.lr.log_scale = l.value("log_scale", c.lr.log_scale);
            c.lr.rotation = l.value("rotation", c.lr.rotation);
            c.lr.sh_dc = l.value("sh_dc", c.lr.sh_dc);
            c.lr.sh_rest = l.value("sh_rest", c.lr.sh_rest);
            c.lr.opacity = l.value("opacity", c.lr.opacity);
        }
        c.background = j.value("background", c.background);
        c.seed = j.value("seed", c.seed);
        if (c.iterations < 0 || !(c.lambda_3dg >= 0 && c.lambda_3dg <= 1) || c.densify.interval < 1)
            throw std::invalid_argument("fit config: iterations >= 0, lambda_3dg in [0, 1] and interval >= 1 required");
        return c;
    }

    namespace {

        // Parameter groups as (first column, width) of the packed row.
        constexpr std::array<std::pair<int, int>, 6> kGroups{{
            {splat::field::delta, 3},
            {splat::field::log_scale, 3},
            {splat::field::rotation, 4},
            {splat::field::sh, 3},
            {splat::field::sh + 3, 9},
            {splat::field::opacity, 1},
        }};

        template <typename T>
        std::vector<nc::Var<T>> make_leaves(const SparseGaussianGrid& grid) {
            const auto n = static_cast<std::int64_t>(grid.size());
            std::vector<nc::Tensor<T>> parts;
            for (const auto& [col, w] : kGroups)
                parts.emplace_back(nc::Shape{n, w});
            std::int64_t i = 0;
            for (const auto& kv : grid.cells) {
                const auto row = kv.second.pack();
                for (std::size_t g = 0; g < kGroups.size(); ++g) {
                    const auto [col, w] = kGroups[g];
                    for (int k = 0; k < w; ++k)
                        parts[g][i * w + k] = static_cast<T>(row[col + k]);
                }
                ++i;
            }
            std::vector<nc::Var<T>> leaves;
            for (auto& p : parts)
                leaves.push_back(nc::Var<T>::parameter(std::move(p)));
            return leaves;
        }

        template <typename T>
        SparseGaussianGrid leaves_to_grid(const SparseGaussianGrid& layout, const std::vector<Voxel>& keys,
                                          const std::vector<nc::Var<T>>& leaves) {
            SparseGaussianGrid out = layout;
            out.cells.clear();
            std::array<double, splat::field::count> row{};
            for (std::size_t i = 0; i < keys.size(); ++i) {
                for (std::size_t g = 0; g < kGroups.size(); ++g) {
                    const auto [col, w] = kGroups[g];
                    for (int k = 0; k < w; ++k)
                        row[col + k] = static_cast<double>(leaves[g].value()[i * w + k]);
                }
                out.cells.emplace(keys[i], splat::GaussianPrimitive::unpack<double>(row));
            }
            return out;
        }

        template <typename T>
        nc::Tensor<T> anchors_of(const SparseGaussianGrid& grid) {
            nc::Tensor<T> a({static_cast<std::int64_t>(grid.size()), 3});
            std::int64_t i = 0;
            for (const auto& kv : grid.cells) {
                const auto c = grid.voxel_center(kv.first);
                for (int k = 0; k < 3; ++k)
                    a[i * 3 + k] = static_cast<T>(c[k]);
                ++i;
            }
            return a;
        }

    } // namespace

    template <typename T>
    FitResult fit(SparseGaussianGrid grid, const std::vector<TrainingView>& views, const FitConfig& cfg,
                  const std::function<void(const FitProgress&)>& on_progress) {
        if (views.empty())
            throw GridError("fit: at least one posed image is required");
        nc::Rng rng(cfg.seed);
        splat::RenderSettings settings;
        settings.background = cfg.background;

        std::vector<splat::Camera> cams;
        std::vector<nc::Tensor<T>> targets;
        for (const auto& v : views) {
            cams.push_back(v.camera.in_normalized_space(grid.normalization.scale, grid.normalization.offset));
            if (v.image.shape() != nc::Shape{v.camera.height, v.camera.width, 3})
                throw GridError("fit: image size does not match its camera");
            targets.push_back(v.image.template cast<T>());
        }

        auto keys = voxel_keys(grid);
        auto leaves = make_leaves<T>(grid);
        auto anchors = anchors_of<T>(grid);
        const auto& lr = cfg.lr;
        nc::AdamHyper hyper;
        hyper.lr = 1.0;
        nc::Adam<T> opt(leaves, hyper, {lr.delta, lr.log_scale, lr.rotation, lr.sh_dc, lr.sh_rest, lr.opacity});

        std::vector<double> grad_sum(keys.size(), 0.0);
        std::vector<int> seen(keys.size(), 0);
        std::vector<std::size_t> order(views.size());
        std::iota(order.begin(), order.end(), 0);
        std::size_t cursor = order.size();

        FitResult result;
        bool any_visible = false;
        const int last_edit = static_cast<int>(std::floor(cfg.densify.stop_fraction * cfg.iterations));
        for (int it = 0; it < cfg.iterations; ++it) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng.engine());
                cursor = 0;
            }
            const auto view = order[cursor++];

            double loss_value = 0;
            if (!keys.empty()) {
                splat::SplatScene<T> scene{nc::concat_channels(opt.params()), anchors, 1.5 * grid.voxel_size};
                auto r = splat::render(scene, cams[view], settings);
                auto loss = splat::loss_3dg(r.image, targets[view], cfg.lambda_3dg);
                nc::backward(loss);
                loss_value = static_cast<double>(loss.value().item());
                for (std::size_t i = 0; i < keys.size(); ++i)
                    if (r.view_grads->visible[i]) {
                        grad_sum[i] += std::hypot(r.view_grads->mean2d[2 * i], r.view_grads->mean2d[2 * i + 1]);
                        ++seen[i];
                        any_visible = true;
                    }
                opt.step();
                opt.zero_grad();
            } else {
                nc::Tensor<T> blank({cams[view].height, cams[view].width, 3});
                for (std::int64_t i = 0; i < blank.numel(); ++i)
                    blank[i] = static_cast<T>(cfg.background[i % 3]);
                loss_value = static_cast<double>(
                    splat::loss_3dg(nc::Var<T>(blank), targets[view], cfg.lambda_3dg).value().item());
            }
            result.losses.push_back(loss_value);

            const bool edit = cfg.densify_enabled && (it + 1) % cfg.densify.interval == 0 && it + 1 <= last_edit;
            if (edit) {
                auto current = leaves_to_grid(grid, keys, opt.params());
                GradStats stats;
                for (std::size_t i = 0; i < keys.size(); ++i)
                    if (seen[i] > 0)
                        stats[keys[i]] = grad_sum[i] / seen[i];
                auto next = prune_step(densify_step(current, stats, cfg.densify), cfg.densify.opacity_threshold);

                auto new_keys = voxel_keys(next);
                std::vector<std::int64_t> source(new_keys.size(), -1);
                for (std::size_t r = 0, o = 0; r < new_keys.size(); ++r) {
                    while (o < keys.size() && keys[o] < new_keys[r])
                        ++o;
                    if (o < keys.size() && keys[o] == new_keys[r])
                        source[r] = static_cast<std::int64_t>(o);
                }
                auto fresh = make_leaves<T>(next);
                for (std::size_t g = 0; g < fresh.size(); ++g)
                    opt.remap_rows(g, fresh[g], source);
                grid = std::move(next);
                keys = std::move(new_keys);
                anchors = anchors_of<T>(grid);
                grad_sum.assign(keys.size(), 0.0);
                seen.assign(keys.size(), 0);
            }
            if (on_progress)
                on_progress({it, loss_value, keys.size(), edit});
        }
        result.grid = leaves_to_grid(grid, keys, opt.params());
        result.any_visible = any_visible;
        return result;
    }

    SparseGaussianGrid random_init(int resolution, int points, std::uint64_t seed, const InitConfig& init) {
        nc::Rng rng(seed);
        std::vector<std::array<double, 3>> pts(points);
        for (auto& p : pts)
            p = {rng.uniform(), rng.uniform(), rng.uniform()};
        return assign_to_grid(pts, {}, resolution, Normalization{}, init);
    }

    double mean_psnr(const SparseGaussianGrid& grid, const std::vector<TrainingView>& views,
                     const std::array<double, 3>& background) {
        if (views.empty())
            return 0.0;
        splat::RenderSettings st;
        st.background = background;
        double total = 0;
        for (const auto& v : views)
            total += splat::psnr(render_grid(grid, v.camera, st), v.image);
        return total / views.size();
    }

    std::int64_t uncovered_pixels(const SparseGaussianGrid& grid, const std::vector<TrainingView>& views,
                                  const std::array<double, 3>& background, double threshold) {
        nc::NoGradGuard guard;
        splat::RenderSettings st;
        st.background = background;
        auto scene = to_scene<float>(grid);
        std::int64_t count = 0;
        for (const auto& v : views) {
            const auto cam = v.camera.in_normalized_space(grid.normalization.scale, grid.normalization.offset);
            const auto r = splat::render(scene, cam, st);
            for (std::int64_t p = 0; p < r.accumulated_alpha.numel(); ++p) {
                double diff = 0;
                for (int ch = 0; ch < 3; ++ch)
                    diff += std::abs(v.image[p * 3 + ch] - background[ch]);
                if (diff > 0.05 && r.accumulated_alpha[p] < threshold)
                    ++count;
            }
        }
        return count;
    }

    template FitResult fit<float>(SparseGaussianGrid, const std::vector<TrainingView>&, const FitConfig&,
                                  const std::function<void(const FitProgress&)>&);
    template FitResult fit<double>(SparseGaussianGrid, const std::vector<TrainingView>&, const FitConfig&,
                                   const std::function<void(const FitProgress&)>&);

} // namespace l3dg::gridfit
