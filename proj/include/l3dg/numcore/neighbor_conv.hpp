#pragma once

#include "l3dg/numcore/autodiff.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace l3dg::nc {

    /// For every output row and kernel tap, the contributing input row (or -1).
    /// Every convolution flavour in this project (dense, strided, sparse,
    /// transposed) reduces to one of these tables.
    struct NeighborTable {
        std::int64_t n_out = 0;
        std::int64_t n_in = 0;
        int taps = 0;
        std::vector<std::int32_t> rows; // n_out * taps

        std::int32_t at(std::int64_t out, int tap) const { return rows[out * taps + tap]; }
    };

    using TablePtr = std::shared_ptr<const NeighborTable>;

    /// y[o] = sum_k x[table(o, k)] * W_k with W laid out as [taps * Cin, Cout].
    /// The graph keeps the table alive until backward has run.
    template <typename T>
    Var<T> neighbor_conv(const Var<T>& x, TablePtr table, const Var<T>& weight);

    /// Channel-wise max over the table rows of each output (missing rows ignored).
    template <typename T>
    Var<T> max_pool_rows(const Var<T>& x, const NeighborTable& table);

    /// Offsets {-1,0,1}^3, first component slowest; index 13 is the centre tap.
    const std::array<std::array<int, 3>, 27>& kernel_offsets_3d();

    // Tables for dense channel-last grids [B, D, H, W, C] with zero padding.
    NeighborTable dense_conv3d_table(std::int64_t batch, std::int64_t d, std::int64_t h, std::int64_t w,
                                     int stride);
    /// Nearest-neighbour 2x upsampling (single tap).
    NeighborTable dense_upsample3d_table(std::int64_t batch, std::int64_t d, std::int64_t h, std::int64_t w);

    // Tables for channel-last images [H, W, C].
    NeighborTable image_conv3x3_table(std::int64_t h, std::int64_t w);
    NeighborTable image_pool2x2_table(std::int64_t h, std::int64_t w);

} // namespace l3dg::nc
