#pragma once

#include "l3dg/sparseconv/sparse_tensor.hpp"
#include "l3dg/vqvae/codebook.hpp"

#include <array>
#include <json.hpp>
#include <vector>

namespace l3dg::diff {

    constexpr std::int64_t kLatentChannels = 5; // 4 code channels + occupancy

    /// Per-channel standardisation of the code channels (occupied sites only)
    /// and per-channel clipping range of the normalised dense grids.
    struct LatentStats {
        std::array<double, 4> mean{0, 0, 0, 0};
        std::array<double, 4> std{1, 1, 1, 1};
        std::array<double, 5> lo{-1, -1, -1, -1, -1};
        std::array<double, 5> hi{1, 1, 1, 1, 1};
    };

    nlohmann::json stats_to_json(const LatentStats& s);
    LatentStats stats_from_json(const nlohmann::json& j);

    /// Code statistics over the occupied sites of the latents, then the clip
    /// ranges over their densified grids.
    template <typename T>
    LatentStats compute_stats(const std::vector<sparse::SparseTensor<T>>& latents);

    /// Dense [n, n, n, 5] grid (n = resolution / stride) of batch entry 0:
    /// standardised codes at occupied sites, 0 elsewhere; occupancy +1 / -1.
    template <typename T>
    nc::Tensor<T> densify_latent(const sparse::SparseTensor<T>& z_q, const LatentStats& stats);

    /// Sites whose occupancy channel exceeds `threshold`; codes de-standardised
    /// and, when a codebook is given, replaced by the nearest entry.
    template <typename T>
    sparse::SparseTensor<T> sparsify_latent(const nc::Tensor<T>& grid, const LatentStats& stats, int stride,
                                            const vq::Codebook<T>* codebook = nullptr, double threshold = 0.0);

} // namespace l3dg::diff
