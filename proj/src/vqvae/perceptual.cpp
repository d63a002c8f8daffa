#include "l3dg/vqvae/perceptual.hpp"

#include "l3dg/numcore/neighbor_conv.hpp"
#include "l3dg/numcore/ops.hpp"

#include <cmath>

namespace l3dg::vq {

    template <typename T>
    RandomPyramid<T>::RandomPyramid(std::uint64_t seed, std::array<std::int64_t, 5> widths) {
        nc::Rng rng(seed);
        std::int64_t cin = 3;
        for (const auto cout : widths) {
            weights_.emplace_back(rng.normal_tensor<T>({9 * cin, cout}, std::sqrt(2.0 / (9.0 * cin))));
            biases_.emplace_back(rng.uniform_tensor<T>({cout}, -0.1, 0.1));
            cin = cout;
        }
    }

    template <typename T>
    std::vector<nc::Var<T>> RandomPyramid<T>::features(const nc::Var<T>& image) const {
        if (image.shape().size() != 3 || image.dim(2) != 3)
            throw nc::ShapeError("feature extractor expects an [H, W, 3] image");
        std::int64_t h = image.dim(0), w = image.dim(1);
        auto x = nc::reshape(nc::add_scalar(image, T(-0.5)), {h * w, 3});
        std::vector<nc::Var<T>> out;
        for (std::size_t s = 0; s < weights_.size(); ++s) {
            auto table = std::make_shared<const nc::NeighborTable>(nc::image_conv3x3_table(h, w));
            x = nc::relu(nc::add_bias(nc::neighbor_conv(x, table, weights_[s]), biases_[s]));
            out.push_back(x);
            if (s + 1 == weights_.size() || h < 2 || w < 2)
                break;
            x = nc::max_pool_rows(x, nc::image_pool2x2_table(h, w));
            h /= 2;
            w /= 2;
        }
        return out;
    }

    template <typename T>
    nc::Var<T> perceptual_loss(const FeatureExtractor<T>& phi, const nc::Var<T>& a, const nc::Tensor<T>& b) {
        std::vector<nc::Var<T>> fb;
        {
            nc::NoGradGuard guard;
            fb = phi.features(nc::Var<T>(b));
        }
        const auto fa = phi.features(a);
        nc::Var<T> total;
        for (std::size_t l = 0; l < fa.size(); ++l) {
            // mse_loss divides by the element count, i.e. each layer is scaled by 1/sqrt(n).
            auto term = nc::mse_loss(fa[l], fb[l]);
            total = total.defined() ? nc::add(total, term) : term;
        }
        return total;
    }

    template class RandomPyramid<float>;
    template class RandomPyramid<double>;
    template nc::Var<float> perceptual_loss(const FeatureExtractor<float>&, const nc::Var<float>&,
                                            const nc::Tensor<float>&);
    template nc::Var<double> perceptual_loss(const FeatureExtractor<double>&, const nc::Var<double>&,
                                             const nc::Tensor<double>&);

} // namespace l3dg::vq
