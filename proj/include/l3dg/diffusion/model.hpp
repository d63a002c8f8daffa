#pragma once

#include "l3dg/diffusion/latent.hpp"
#include "l3dg/diffusion/sampler.hpp"
#include "l3dg/diffusion/schedule.hpp"
#include "l3dg/diffusion/unet.hpp"

#include <filesystem>
#include <functional>
#include <json.hpp>

namespace l3dg::diff {

    struct DiffusionConfig {
        UNet3DConfig unet;
        int timesteps = 1000;
        double beta_start = 1e-4;
        double beta_end = 0.02;
    };

    nlohmann::json diffusion_config_to_json(const DiffusionConfig& c);
    DiffusionConfig diffusion_config_from_json(const nlohmann::json& j);

    /// Denoiser, schedule and latent normalization as one unit.
    template <typename T>
    class LatentDiffusion {
    public:
        LatentDiffusion(DiffusionConfig cfg, LatentStats stats);

        const DiffusionConfig& config() const { return cfg_; }
        const NoiseSchedule& schedule() const { return schedule_; }
        const LatentStats& stats() const { return stats_; }
        UNet3D<T>& unet() { return unet_; }
        const UNet3D<T>& unet() const { return unet_; }

        /// Shape of one latent grid: [n, n, n, C].
        nc::Shape grid_shape() const;

        /// v prediction for [B, n, n, n, C] noisy grids at a shared timestep.
        nc::Tensor<T> predict_v(const nc::Tensor<T>& z_t, int t) const;

        /// mean ||z0_hat - z_0||^2 over all elements, z0_hat = alpha_t z_t - sigma_t v_hat,
        /// with z_t formed from `eps` at the per-entry timesteps `t`.
        nc::Var<T> loss(const nc::Tensor<T>& z0, const std::vector<int>& t, const nc::Tensor<T>& eps) const;

        /// One chain per seed; z_0 estimates clipped to the training range when `clip`.
        std::vector<nc::Tensor<T>> sample(const std::vector<std::uint64_t>& seeds, int batch = 1, bool clip = true) const;

        void save(const std::filesystem::path& dir) const;
        static LatentDiffusion load(const std::filesystem::path& dir);
        nlohmann::json manifest() const;

    private:
        DiffusionConfig cfg_;
        LatentStats stats_;
        NoiseSchedule schedule_;
        UNet3D<T> unet_;
    };

    struct DiffusionTrainConfig {
        int steps = 5000;
        double lr = 2e-4;
        int batch = 4;
        std::uint64_t seed = 0;
    };

    nlohmann::json diffusion_train_to_json(const DiffusionTrainConfig& c);
    DiffusionTrainConfig diffusion_train_from_json(const nlohmann::json& j);

    struct DiffusionProgress {
        int step = 0;
        double loss = 0;
    };

    /// Adam on uniformly drawn timesteps in [1, T] over dense latent grids [n, n, n, C].
    template <typename T>
    void train_diffusion(LatentDiffusion<T>& model, const std::vector<nc::Tensor<T>>& grids,
                         const DiffusionTrainConfig& cfg,
                         const std::function<void(const DiffusionProgress&)>& on_progress = {});

} // namespace l3dg::diff
