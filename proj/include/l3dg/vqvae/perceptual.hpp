#pragma once

#include "l3dg/numcore/autodiff.hpp"
#include "l3dg/numcore/random.hpp"

#include <array>
#include <memory>
#include <vector>

namespace l3dg::vq {

    /// Maps an [H, W, 3] image to a list of feature maps.
    template <typename T>
    class FeatureExtractor {
    public:
        virtual ~FeatureExtractor() = default;
        virtual std::vector<nc::Var<T>> features(const nc::Var<T>& image) const = 0;
    };

    template <typename T>
    class IdentityExtractor final : public FeatureExtractor<T> {
    public:
        std::vector<nc::Var<T>> features(const nc::Var<T>& image) const override { return {image}; }
    };

    /// Fixed random-weight pyramid: five stages of 3x3 conv + ReLU, 2x2 max
    /// pooling between stages; each stage's pre-pool activation is a feature.
    template <typename T>
    class RandomPyramid final : public FeatureExtractor<T> {
    public:
        explicit RandomPyramid(std::uint64_t seed, std::array<std::int64_t, 5> widths = {8, 16, 32, 32, 32});
        std::vector<nc::Var<T>> features(const nc::Var<T>& image) const override;

    private:
        std::vector<nc::Var<T>> weights_;
        std::vector<nc::Var<T>> biases_;
    };

    /// sum over layers of |f_l(a) - f_l(b)|^2 / numel(f_l).
    template <typename T>
    nc::Var<T> perceptual_loss(const FeatureExtractor<T>& phi, const nc::Var<T>& a, const nc::Tensor<T>& b);

} // namespace l3dg::vq
