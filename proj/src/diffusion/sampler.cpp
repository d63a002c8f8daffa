#include "l3dg/diffusion/sampler.hpp"

#include "l3dg/numcore/random.hpp"

#include <algorithm>

namespace l3dg::diff {

    template <typename T>
    std::vector<nc::Tensor<T>> ddpm_sample(const NoiseSchedule& schedule, const Denoiser<T>& denoise,
                                           const nc::Shape& shape, const std::vector<std::uint64_t>& seeds,
                                           const SampleOptions& options) {
        if (options.batch < 1)
            throw std::invalid_argument("ddpm_sample: batch must be positive");
        const nc::Tensor<T> probe(shape);
        const auto numel = probe.numel();
        const auto channels = shape.empty() ? 1 : shape.back();
        if (!options.clip.empty() && static_cast<std::int64_t>(options.clip.size()) != channels)
            throw nc::ShapeError("ddpm_sample: clip ranges must match the channel count");

        std::vector<nc::Tensor<T>> out;
        for (std::size_t first = 0; first < seeds.size(); first += options.batch) {
            const auto b = static_cast<std::int64_t>(std::min<std::size_t>(options.batch, seeds.size() - first));
            nc::Shape bshape{b};
            bshape.insert(bshape.end(), shape.begin(), shape.end());
            std::vector<nc::Rng> rngs;
            nc::Tensor<T> z(bshape);
            for (std::int64_t i = 0; i < b; ++i) {
                rngs.emplace_back(nc::derive_seed(seeds[first + i], "ddpm.chain"));
                for (std::int64_t k = 0; k < numel; ++k)
                    z[i * numel + k] = static_cast<T>(rngs.back().normal());
            }
            for (int t = schedule.steps(); t >= 1; --t) {
                const auto v = denoise(z, t);
                if (v.shape() != z.shape())
                    throw nc::ShapeError("ddpm_sample: denoiser returned " + nc::shape_str(v.shape()) + " for " +
                                         nc::shape_str(z.shape()));
                const double a = schedule.alpha(t), s = schedule.sigma(t);
                const double c0 = schedule.posterior_c0(t), ct = schedule.posterior_ct(t);
                const double sd = std::sqrt(schedule.posterior_variance(t));
                const bool noise = options.stochastic && t > 1;
                for (std::int64_t i = 0; i < b; ++i)
                    for (std::int64_t k = 0; k < numel; ++k) {
                        const auto j = i * numel + k;
                        double z0 = a * z[j] - s * v[j];
                        if (!options.clip.empty()) {
                            const auto& [lo, hi] = options.clip[k % channels];
                            z0 = std::clamp(z0, lo, hi);
                        }
                        double next = c0 * z0 + ct * z[j];
                        if (noise)
                            next += sd * rngs[i].normal();
                        z[j] = static_cast<T>(next);
                    }
            }
            for (std::int64_t i = 0; i < b; ++i)
                out.emplace_back(shape, std::vector<T>(z.data().begin() + i * numel, z.data().begin() + (i + 1) * numel));
        }
        return out;
    }

    template std::vector<nc::Tensor<float>> ddpm_sample(const NoiseSchedule&, const Denoiser<float>&, const nc::Shape&,
                                                        const std::vector<std::uint64_t>&, const SampleOptions&);
    template std::vector<nc::Tensor<double>> ddpm_sample(const NoiseSchedule&, const Denoiser<double>&,
                                                         const nc::Shape&, const std::vector<std::uint64_t>&,
                                                         const SampleOptions&);

} // namespace l3dg::diff
