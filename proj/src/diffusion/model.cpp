#include "l3dg/diffusion/model.hpp"

#include "l3dg/numcore/adam.hpp"
#include "l3dg/numcore/checkpoint.hpp"
#include "l3dg/numcore/ops.hpp"
#include "l3dg/numcore/random.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace l3dg::diff {

    using Json = nlohmann::json;

    namespace {
        void reject_unknown(const Json& j, const std::set<std::string>& keys, const std::string& what) {
            if (!j.is_object())
                throw std::invalid_argument(what + ": expected a JSON object");
            for (const auto& [k, v] : j.items())
                if (!keys.count(k))
                    throw std::invalid_argument(what + ": unknown key '" + k + "'");
        }
    } // namespace

    Json diffusion_config_to_json(const DiffusionConfig& c) {
        return {{"unet", unet_config_to_json(c.unet)},
                {"timesteps", c.timesteps},
                {"beta_start", c.beta_start},
                {"beta_end", c.beta_end}};
    }

    DiffusionConfig diffusion_config_from_json(const Json& j) {
        reject_unknown(j, {"unet", "timesteps", "beta_start", "beta_end"}, "diffusion config");
        DiffusionConfig c;
        if (j.contains("unet"))
            c.unet = unet_config_from_json(j.at("unet"));
        c.timesteps = j.value("timesteps", c.timesteps);
        c.beta_start = j.value("beta_start", c.beta_start);
        c.beta_end = j.value("beta_end", c.beta_end);
        NoiseSchedule::linear(c.timesteps, c.beta_start, c.beta_end);
        return c;
    }

    Json diffusion_train_to_json(const DiffusionTrainConfig& c) {
        return {{"steps", c.steps}, {"lr", c.lr}, {"batch", c.batch}, {"seed", c.seed}};
    }

    DiffusionTrainConfig diffusion_train_from_json(const Json& j) {
        reject_unknown(j, {"steps", "lr", "batch", "seed"}, "diffusion training config");
        DiffusionTrainConfig c;
        c.steps = j.value("steps", c.steps);
        c.lr = j.value("lr", c.lr);
        c.batch = j.value("batch", c.batch);
        c.seed = j.value("seed", c.seed);
        if (c.steps < 0 || c.batch < 1 || !(c.lr > 0))
            throw std::invalid_argument("diffusion training config: steps >= 0, batch >= 1 and lr > 0 required");
        return c;
    }

    template <typename T>
    LatentDiffusion<T>::LatentDiffusion(DiffusionConfig cfg, LatentStats stats)
        : cfg_(std::move(cfg)), stats_(stats),
          schedule_(NoiseSchedule::linear(cfg_.timesteps, cfg_.beta_start, cfg_.beta_end)), unet_(cfg_.unet) {
        if (cfg_.unet.channels != kLatentChannels)
            throw std::invalid_argument("diffusion: the denoiser must carry " + std::to_string(kLatentChannels) +
                                        " channels");
    }

    template <typename T>
    nc::Shape LatentDiffusion<T>::grid_shape() const {
        const std::int64_t n = cfg_.unet.resolution;
        return {n, n, n, cfg_.unet.channels};
    }

    template <typename T>
    nc::Tensor<T> LatentDiffusion<T>::predict_v(const nc::Tensor<T>& z_t, int t) const {
        nc::NoGradGuard guard;
        const std::vector<int> ts(static_cast<std::size_t>(z_t.dim(0)), t);
        return unet_.forward(nc::Var<T>(z_t), ts).value();
    }

    template <typename T>
    nc::Var<T> LatentDiffusion<T>::loss(const nc::Tensor<T>& z0, const std::vector<int>& t,
                                        const nc::Tensor<T>& eps) const {
        if (z0.shape() != eps.shape() || z0.rank() != 5 || z0.dim(0) != static_cast<std::int64_t>(t.size()))
            throw nc::ShapeError("diffusion loss: z0 and eps must be [B, n, n, n, C] with one timestep per entry");
        const auto per = z0.numel() / z0.dim(0);
        nc::Tensor<T> zt(z0.shape()), scaled(z0.shape()), sig(z0.shape());
        for (std::size_t b = 0; b < t.size(); ++b) {
            const double a = schedule_.alpha(t[b]), s = schedule_.sigma(t[b]);
            for (std::int64_t k = b * per; k < static_cast<std::int64_t>(b + 1) * per; ++k) {
                zt[k] = static_cast<T>(a * z0[k] + s * eps[k]);
                scaled[k] = static_cast<T>(a * zt[k]);
                sig[k] = static_cast<T>(s);
            }
        }
        const auto v_hat = unet_.forward(nc::Var<T>(zt), t);
        const auto z0_hat = nc::sub(nc::Var<T>(scaled), nc::mul(v_hat, nc::Var<T>(sig)));
        return nc::mse_loss(z0_hat, nc::Var<T>(z0));
    }

    template <typename T>
    std::vector<nc::Tensor<T>> LatentDiffusion<T>::sample(const std::vector<std::uint64_t>& seeds, int batch,
                                                          bool clip) const {
        SampleOptions opt;
        opt.batch = batch;
        if (clip)
            for (std::int64_t c = 0; c < kLatentChannels; ++c)
                opt.clip.emplace_back(stats_.lo[c], stats_.hi[c]);
        return ddpm_sample<T>(schedule_, [this](const nc::Tensor<T>& z, int t) { return predict_v(z, t); },
                              grid_shape(), seeds, opt);
    }

    template <typename T>
    Json LatentDiffusion<T>::manifest() const {
        return {{"format", "l3dg-diffusion"},
                {"precision", std::is_same_v<T, float> ? "f32" : "f64"},
                {"config", diffusion_config_to_json(cfg_)},
                {"stats", stats_to_json(stats_)},
                {"parameters", unet_.params().count()}};
    }

    template <typename T>
    void LatentDiffusion<T>::save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        nc::save_checkpoint(dir / "model.l3dg", unet_.params().state());
        std::ofstream(dir / "manifest.json") << manifest().dump(2) << "\n";
    }

    template <typename T>
    LatentDiffusion<T> LatentDiffusion<T>::load(const std::filesystem::path& dir) {
        std::ifstream in(dir / "manifest.json");
        if (!in)
            throw nc::CheckpointError("missing diffusion manifest " + (dir / "manifest.json").string());
        Json m;
        try {
            m = Json::parse(in);
        } catch (const Json::exception& e) {
            throw nc::CheckpointError("unreadable diffusion manifest: " + std::string(e.what()));
        }
        if (m.value("format", "") != "l3dg-diffusion")
            throw nc::CheckpointError("not a diffusion manifest: " + (dir / "manifest.json").string());
        LatentDiffusion model(diffusion_config_from_json(m.at("config")), stats_from_json(m.at("stats")));
        model.unet_.params().load(nc::load_checkpoint<T>(dir / "model.l3dg"));
        return model;
    }

    template <typename T>
    void train_diffusion(LatentDiffusion<T>& model, const std::vector<nc::Tensor<T>>& grids,
                         const DiffusionTrainConfig& cfg, const std::function<void(const DiffusionProgress&)>& on_progress) {
        if (grids.empty())
            throw std::invalid_argument("train_diffusion: empty training set");
        const auto shape = model.grid_shape();
        for (const auto& g : grids)
            if (g.shape() != shape)
                throw nc::ShapeError("train_diffusion: grid " + nc::shape_str(g.shape()) + " does not match " +
                                     nc::shape_str(shape));
        nc::Rng rng(nc::derive_seed(cfg.seed, "diffusion.train"));
        nc::Adam<T> opt(model.unet().params().vars(), {.lr = cfg.lr});
        const auto per = grids.front().numel();
        nc::Shape bshape{cfg.batch};
        bshape.insert(bshape.end(), shape.begin(), shape.end());
        for (int step = 1; step <= cfg.steps; ++step) {
            nc::Tensor<T> z0(bshape);
            std::vector<int> t(cfg.batch);
            for (int b = 0; b < cfg.batch; ++b) {
                const auto& g = grids[rng.randint(0, static_cast<std::int64_t>(grids.size()))];
                std::copy(g.data().begin(), g.data().end(), z0.data().begin() + b * per);
                t[b] = static_cast<int>(rng.randint(1, model.schedule().steps() + 1));
            }
            const auto eps = rng.normal_tensor<T>(bshape);
            const auto loss = model.loss(z0, t, eps);
            opt.zero_grad();
            nc::backward(loss);
            opt.step();
            if (on_progress)
                on_progress({step, static_cast<double>(loss.value().item())});
        }
    }

    template class LatentDiffusion<float>;
    template class LatentDiffusion<double>;
    template void train_diffusion(LatentDiffusion<float>&, const std::vector<nc::Tensor<float>>&,
                                  const DiffusionTrainConfig&, const std::function<void(const DiffusionProgress&)>&);
    template void train_diffusion(LatentDiffusion<double>&, const std::vector<nc::Tensor<double>>&,
                                  const DiffusionTrainConfig&, const std::function<void(const DiffusionProgress&)>&);

} // namespace l3dg::diff
