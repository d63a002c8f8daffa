#include "l3dg/diffusion/schedule.hpp"

#include <cmath>

namespace l3dg::diff {

    NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
        if (steps < 1)
            throw std::invalid_argument("noise schedule needs at least one step");
        if (!(beta_start > 0 && beta_end < 1 && beta_start <= beta_end))
            throw std::invalid_argument("noise schedule betas must satisfy 0 < start <= end < 1");
        NoiseSchedule s;
        s.steps_ = steps;
        s.beta_.assign(steps + 1, 0.0);
        s.alpha_bar_.assign(steps + 1, 1.0);
        s.alpha_.assign(steps + 1, 1.0);
        s.sigma_.assign(steps + 1, 0.0);
        for (int t = 1; t <= steps; ++t) {
            s.beta_[t] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (steps - 1);
            s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t]);
            s.alpha_[t] = std::sqrt(s.alpha_bar_[t]);
            s.sigma_[t] = std::sqrt(1.0 - s.alpha_bar_[t]);
        }
        return s;
    }

    double NoiseSchedule::posterior_c0(int t) const {
        check(t, 1);
        return std::sqrt(alpha_bar_[t - 1]) * beta_[t] / (1.0 - alpha_bar_[t]);
    }

    double NoiseSchedule::posterior_ct(int t) const {
        check(t, 1);
        return std::sqrt(1.0 - beta_[t]) * (1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]);
    }

    double NoiseSchedule::posterior_variance(int t) const {
        check(t, 1);
        return (1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]) * beta_[t];
    }

    namespace {
        template <typename T>
        nc::Tensor<T> affine(const nc::Tensor<T>& a, double ca, const nc::Tensor<T>& b, double cb) {
            if (a.shape() != b.shape())
                throw nc::ShapeError("diffusion: operand shapes differ: " + nc::shape_str(a.shape()) + " vs " +
                                     nc::shape_str(b.shape()));
            nc::Tensor<T> out(a.shape());
            const T fa = static_cast<T>(ca), fb = static_cast<T>(cb);
            for (std::int64_t i = 0; i < a.numel(); ++i)
                out[i] = fa * a[i] + fb * b[i];
            return out;
        }
    } // namespace

    template <typename T>
    nc::Tensor<T> forward_noise(const NoiseSchedule& s, const nc::Tensor<T>& z0, int t, const nc::Tensor<T>& eps) {
        return affine(z0, s.alpha(t), eps, s.sigma(t));
    }

    template <typename T>
    nc::Tensor<T> v_target(const NoiseSchedule& s, const nc::Tensor<T>& z0, const nc::Tensor<T>& eps, int t) {
        return affine(eps, s.alpha(t), z0, -s.sigma(t));
    }

    template <typename T>
    nc::Tensor<T> recover_z0(const NoiseSchedule& s, const nc::Tensor<T>& zt, const nc::Tensor<T>& v, int t) {
        return affine(zt, s.alpha(t), v, -s.sigma(t));
    }

#define L3DG_INSTANTIATE_SCHEDULE(T)                                                                                \
    template nc::Tensor<T> forward_noise(const NoiseSchedule&, const nc::Tensor<T>&, int, const nc::Tensor<T>&);   \
    template nc::Tensor<T> v_target(const NoiseSchedule&, const nc::Tensor<T>&, const nc::Tensor<T>&, int);        \
    template nc::Tensor<T> recover_z0(const NoiseSchedule&, const nc::Tensor<T>&, const nc::Tensor<T>&, int);

    L3DG_INSTANTIATE_SCHEDULE(float)
    L3DG_INSTANTIATE_SCHEDULE(double)

} // namespace l3dg::diff
