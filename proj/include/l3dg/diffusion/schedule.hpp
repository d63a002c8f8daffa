#pragma once

#include "l3dg/numcore/tensor.hpp"

#include <stdexcept>
#include <vector>

namespace l3dg::diff {

    class ScheduleError : public std::out_of_range {
    public:
        using std::out_of_range::out_of_range;
    };

    /// Variance-preserving schedule: alpha_bar_t = prod_{s<=t} (1 - beta_s),
    /// alpha_t = sqrt(alpha_bar_t), sigma_t = sqrt(1 - alpha_bar_t). Index 0 is
    /// the clean extension (alpha 1, sigma 0).
    class NoiseSchedule {
    public:
        static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

        int steps() const { return steps_; }
        double beta(int t) const { check(t, 1); return beta_[t]; }
        double alpha_bar(int t) const { check(t, 0); return alpha_bar_[t]; }
        double alpha(int t) const { check(t, 0); return alpha_[t]; }
        double sigma(int t) const { check(t, 0); return sigma_[t]; }

        /// Posterior q(z_{t-1} | z_t, z_0): mean = c0 * z_0 + ct * z_t, variance beta_tilde.
        double posterior_c0(int t) const;
        double posterior_ct(int t) const;
        double posterior_variance(int t) const;

    private:
        void check(int t, int lo) const {
            if (t < lo || t > steps_)
                throw ScheduleError("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                                    std::to_string(steps_) + "]");
        }

        int steps_ = 0;
        std::vector<double> beta_, alpha_bar_, alpha_, sigma_;
    };

    /// z_t = alpha_t z_0 + sigma_t eps.
    template <typename T>
    nc::Tensor<T> forward_noise(const NoiseSchedule& s, const nc::Tensor<T>& z0, int t, const nc::Tensor<T>& eps);

    /// v = alpha_t eps - sigma_t z_0.
    template <typename T>
    nc::Tensor<T> v_target(const NoiseSchedule& s, const nc::Tensor<T>& z0, const nc::Tensor<T>& eps, int t);

    /// z_0 = alpha_t z_t - sigma_t v.
    template <typename T>
    nc::Tensor<T> recover_z0(const NoiseSchedule& s, const nc::Tensor<T>& zt, const nc::Tensor<T>& v, int t);

} // namespace l3dg::diff
