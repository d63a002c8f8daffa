#pragma once

#include "l3dg/numcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace l3dg::nc {

    /// SplitMix64 finaliser; used to fan a root seed out to named streams.
    std::uint64_t mix_seed(std::uint64_t x);
    std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

    class Rng {
    public:
        explicit Rng(std::uint64_t seed = 0) : engine_(mix_seed(seed)) {}

        double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
        double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
        double normal() { return normal_(engine_); }
        std::int64_t randint(std::int64_t lo, std::int64_t hi_exclusive) {
            return std::uniform_int_distribution<std::int64_t>(lo, hi_exclusive - 1)(engine_);
        }
        std::mt19937_64& engine() { return engine_; }

        template <typename T>
        Tensor<T> uniform_tensor(Shape shape, double lo, double hi) {
            Tensor<T> t(std::move(shape));
            for (auto& v : t.data())
                v = static_cast<T>(uniform(lo, hi));
            return t;
        }

        template <typename T>
        Tensor<T> normal_tensor(Shape shape, double stddev = 1.0) {
            Tensor<T> t(std::move(shape));
            for (auto& v : t.data())
                v = static_cast<T>(normal() * stddev);
            return t;
        }

    private:
        std::mt19937_64 engine_;
        std::normal_distribution<double> normal_{0.0, 1.0};
    };

    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
    template <typename T>
    Tensor<T> fan_in_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(fan_in, 1)));
        return rng.uniform_tensor<T>(std::move(shape), -bound, bound);
    }

} // namespace l3dg::nc
