#include "l3dg/diffusion/latent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace l3dg::diff {

    nlohmann::json stats_to_json(const LatentStats& s) {
        return {{"mean", s.mean}, {"std", s.std}, {"lo", s.lo}, {"hi", s.hi}};
    }

    LatentStats stats_from_json(const nlohmann::json& j) {
        LatentStats s;
        s.mean = j.at("mean").get<std::array<double, 4>>();
        s.std = j.at("std").get<std::array<double, 4>>();
        s.lo = j.at("lo").get<std::array<double, 5>>();
        s.hi = j.at("hi").get<std::array<double, 5>>();
        return s;
    }

    template <typename T>
    LatentStats compute_stats(const std::vector<sparse::SparseTensor<T>>& latents) {
        LatentStats s;
        std::array<double, 4> sum{}, sq{};
        std::int64_t n = 0;
        for (const auto& z : latents) {
            const auto& f = z.features.value();
            for (std::int64_t i = 0; i < z.size(); ++i)
                for (int c = 0; c < 4; ++c) {
                    const double v = f[i * 4 + c];
                    sum[c] += v;
                    sq[c] += v * v;
                }
            n += z.size();
        }
        if (n > 0)
            for (int c = 0; c < 4; ++c) {
                s.mean[c] = sum[c] / n;
                const double var = sq[c] / n - s.mean[c] * s.mean[c];
                s.std[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
            }
        s.lo.fill(std::numeric_limits<double>::infinity());
        s.hi.fill(-std::numeric_limits<double>::infinity());
        for (const auto& z : latents) {
            const auto g = densify_latent(z, s);
            for (std::int64_t i = 0; i < g.numel(); ++i) {
                const auto c = i % kLatentChannels;
                s.lo[c] = std::min(s.lo[c], static_cast<double>(g[i]));
                s.hi[c] = std::max(s.hi[c], static_cast<double>(g[i]));
            }
        }
        return s;
    }

    template <typename T>
    nc::Tensor<T> densify_latent(const sparse::SparseTensor<T>& z_q, const LatentStats& stats) {
        if (z_q.channels() != 4)
            throw nc::ShapeError("densify_latent expects 4 code channels");
        const int stride = z_q.stride();
        const std::int64_t n = z_q.coords->resolution() / stride;
        nc::Tensor<T> g({n, n, n, kLatentChannels});
        for (std::int64_t i = 0; i < n * n * n; ++i)
            g[i * kLatentChannels + 4] = T(-1);
        const auto& f = z_q.features.value();
        for (std::int64_t i = 0; i < z_q.size(); ++i) {
            const auto& c = (*z_q.coords)[i];
            if (c.b != 0)
                continue;
            const std::int64_t x = c.x / stride, y = c.y / stride, z = c.z / stride;
            if (x >= n || y >= n || z >= n)
                throw nc::ShapeError("densify_latent: coordinate outside the latent grid");
            const auto cell = ((x * n + y) * n + z) * kLatentChannels;
            for (int k = 0; k < 4; ++k)
                g[cell + k] = static_cast<T>((f[i * 4 + k] - stats.mean[k]) / stats.std[k]);
            g[cell + 4] = T(1);
        }
        return g;
    }

    template <typename T>
    sparse::SparseTensor<T> sparsify_latent(const nc::Tensor<T>& grid, const LatentStats& stats, int stride,
                                            const vq::Codebook<T>* codebook, double threshold) {
        if (grid.rank() != 4 || grid.dim(3) != kLatentChannels || grid.dim(0) != grid.dim(1) ||
            grid.dim(1) != grid.dim(2))
            throw nc::ShapeError("sparsify_latent expects an [n, n, n, 5] grid, got " + nc::shape_str(grid.shape()));
        const auto n = grid.dim(0);
        std::vector<sparse::Coord> coords;
        std::vector<T> feats;
        for (std::int64_t x = 0; x < n; ++x)
            for (std::int64_t y = 0; y < n; ++y)
                for (std::int64_t z = 0; z < n; ++z) {
                    const auto cell = ((x * n + y) * n + z) * kLatentChannels;
                    if (!(grid[cell + 4] > threshold))
                        continue;
                    coords.push_back({0, static_cast<std::int32_t>(x * stride), static_cast<std::int32_t>(y * stride),
                                      static_cast<std::int32_t>(z * stride)});
                    std::array<T, 4> code;
                    for (int k = 0; k < 4; ++k)
                        code[k] = static_cast<T>(grid[cell + k] * stats.std[k] + stats.mean[k]);
                    if (codebook) {
                        const auto e = codebook->nearest(code);
                        for (int k = 0; k < 4; ++k)
                            code[k] = codebook->entries()[e * 4 + k];
                    }
                    feats.insert(feats.end(), code.begin(), code.end());
                }
        // Row-major traversal yields sorted coordinates, so rows stay aligned.
        auto set = sparse::make_coords(std::move(coords), stride, static_cast<int>(n * stride));
        return {set, nc::Var<T>(nc::Tensor<T>({set->size(), 4}, std::move(feats)))};
    }

#define L3DG_INSTANTIATE_LATENT(T)                                                                                  \
    template LatentStats compute_stats(const std::vector<sparse::SparseTensor<T>>&);                                \
    template nc::Tensor<T> densify_latent(const sparse::SparseTensor<T>&, const LatentStats&);                       \
    template sparse::SparseTensor<T> sparsify_latent(const nc::Tensor<T>&, const LatentStats&, int,                 \
                                                     const vq::Codebook<T>*, double);

    L3DG_INSTANTIATE_LATENT(float)
    L3DG_INSTANTIATE_LATENT(double)

} // namespace l3dg::diff
