#pragma once

#include "l3dg/numcore/autodiff.hpp"
#include "l3dg/numcore/neighbor_conv.hpp"

#include <compare>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

namespace l3dg::sparse {

    /// Batch index plus fine-grid voxel coordinates.
    struct Coord {
        std::int32_t b = 0, x = 0, y = 0, z = 0;
        auto operator<=>(const Coord&) const = default;
    };

    /// Sorted, unique coordinates at one stride, with O(1) lookup and cached
    /// kernel maps. Immutable once built.
    class CoordSet {
    public:
        /// Sorts and deduplicates. Throws if a coordinate is not a multiple of
        /// `stride` or lies outside [0, resolution).
        CoordSet(std::vector<Coord> coords, int stride, int resolution);

        std::int64_t size() const { return static_cast<std::int64_t>(coords_.size()); }
        const std::vector<Coord>& coords() const { return coords_; }
        const Coord& operator[](std::int64_t i) const { return coords_[i]; }
        int stride() const { return stride_; }
        int resolution() const { return resolution_; }
        int batch_size() const { return coords_.empty() ? 0 : coords_.back().b + 1; }
        bool in_bounds(const Coord& c) const {
            return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < resolution_ && c.y < resolution_ && c.z < resolution_;
        }
        /// Row of `c`, or -1.
        std::int32_t find(const Coord& c) const;

        /// 27-tap map onto itself at offsets k * stride.
        nc::TablePtr same_table() const;
        /// Coarser set floor(c / 2s) * 2s and the map from it back onto this set.
        std::shared_ptr<const CoordSet> downsampled() const;
        nc::TablePtr down_table() const;
        /// Finer candidate set {c + k * s/2} within bounds and its transpose map.
        std::shared_ptr<const CoordSet> upsampled() const;
        nc::TablePtr up_table() const;

    private:
        std::vector<Coord> coords_;
        int stride_;
        int resolution_;
        std::unordered_map<std::uint64_t, std::int32_t> index_;

        mutable std::mutex cache_mutex_;
        mutable nc::TablePtr same_, down_table_, up_table_;
        mutable std::shared_ptr<const CoordSet> down_, up_;
    };

    using CoordSetPtr = std::shared_ptr<const CoordSet>;

    template <typename T>
    struct SparseTensor {
        CoordSetPtr coords;
        nc::Var<T> features; // [N, C]

        std::int64_t size() const { return coords ? coords->size() : 0; }
        std::int64_t channels() const { return features.dim(1); }
        int stride() const { return coords->stride(); }
    };

    CoordSetPtr make_coords(std::vector<Coord> coords, int stride, int resolution);

    /// Dense [B, R/s, R/s, R/s, C] grid (index = coordinate / stride) with
    /// zeros at inactive sites.
    template <typename T>
    nc::Tensor<T> to_dense(const SparseTensor<T>& x, int batch_size);

    /// Sites of a dense grid whose mask is set, features copied.
    template <typename T>
    SparseTensor<T> from_dense(const nc::Tensor<T>& dense, std::span<const std::uint8_t> mask, int stride,
                               bool requires_grad = false);

} // namespace l3dg::sparse
