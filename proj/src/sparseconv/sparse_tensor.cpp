#include "l3dg/sparseconv/sparse_tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace l3dg::sparse {

    namespace {
        std::uint64_t pack(const Coord& c) {
            return (static_cast<std::uint64_t>(static_cast<std::uint16_t>(c.b)) << 48) |
                   (static_cast<std::uint64_t>(static_cast<std::uint16_t>(c.x)) << 32) |
                   (static_cast<std::uint64_t>(static_cast<std::uint16_t>(c.y)) << 16) |
                   static_cast<std::uint64_t>(static_cast<std::uint16_t>(c.z));
        }

        int floor_to(int v, int step) { return (v >= 0 ? v / step : -((-v + step - 1) / step)) * step; }
    } // namespace

    CoordSet::CoordSet(std::vector<Coord> coords, int stride, int resolution)
        : coords_(std::move(coords)),
          stride_(stride),
          resolution_(resolution) {
        if (stride <= 0 || resolution <= 0 || resolution >= 1 << 15)
            throw std::invalid_argument("CoordSet: invalid stride or resolution");
        std::sort(coords_.begin(), coords_.end());
        coords_.erase(std::unique(coords_.begin(), coords_.end()), coords_.end());
        index_.reserve(coords_.size() * 2);
        for (std::size_t i = 0; i < coords_.size(); ++i) {
            const auto& c = coords_[i];
            if (c.b < 0 || c.b >= 1 << 15 || !in_bounds(c))
                throw std::invalid_argument("CoordSet: coordinate outside the grid");
            if (c.x % stride || c.y % stride || c.z % stride)
                throw std::invalid_argument("CoordSet: coordinate not divisible by stride " + std::to_string(stride));
            index_.emplace(pack(c), static_cast<std::int32_t>(i));
        }
    }

    std::int32_t CoordSet::find(const Coord& c) const {
        if (!in_bounds(c))
            return -1;
        const auto it = index_.find(pack(c));
        return it == index_.end() ? -1 : it->second;
    }

    nc::TablePtr CoordSet::same_table() const {
        std::lock_guard lock(cache_mutex_);
        if (!same_) {
            auto t = std::make_shared<nc::NeighborTable>();
            t->n_out = t->n_in = size();
            t->taps = 27;
            t->rows.resize(static_cast<std::size_t>(size()) * 27);
            const auto& offs = nc::kernel_offsets_3d();
            for (std::int64_t i = 0; i < size(); ++i) {
                const auto& c = coords_[i];
                for (int k = 0; k < 27; ++k)
                    t->rows[i * 27 + k] = find({c.b, c.x + offs[k][0] * stride_, c.y + offs[k][1] * stride_,
                                                c.z + offs[k][2] * stride_});
            }
            same_ = std::move(t);
        }
        return same_;
    }

    std::shared_ptr<const CoordSet> CoordSet::downsampled() const {
        std::lock_guard lock(cache_mutex_);
        if (!down_) {
            const int s2 = stride_ * 2;
            std::vector<Coord> out;
            out.reserve(coords_.size());
            for (const auto& c : coords_)
                out.push_back({c.b, floor_to(c.x, s2), floor_to(c.y, s2), floor_to(c.z, s2)});
            down_ = std::make_shared<CoordSet>(std::move(out), s2, resolution_);
        }
        return down_;
    }

    nc::TablePtr CoordSet::down_table() const {
        auto coarse = downsampled();
        std::lock_guard lock(cache_mutex_);
        if (!down_table_) {
            auto t = std::make_shared<nc::NeighborTable>();
            t->n_out = coarse->size();
            t->n_in = size();
            t->taps = 27;
            t->rows.resize(static_cast<std::size_t>(t->n_out) * 27);
            const auto& offs = nc::kernel_offsets_3d();
            for (std::int64_t i = 0; i < t->n_out; ++i) {
                const auto& c = (*coarse)[i];
                for (int k = 0; k < 27; ++k)
                    t->rows[i * 27 + k] = find({c.b, c.x + offs[k][0] * stride_, c.y + offs[k][1] * stride_,
                                                c.z + offs[k][2] * stride_});
            }
            down_table_ = std::move(t);
        }
        return down_table_;
    }

    std::shared_ptr<const CoordSet> CoordSet::upsampled() const {
        if (stride_ % 2)
            throw std::invalid_argument("transpose convolution needs an even input stride");
        std::lock_guard lock(cache_mutex_);
        if (!up_) {
            const int h = stride_ / 2;
            std::vector<Coord> out;
            out.reserve(coords_.size() * 27);
            for (const auto& c : coords_)
                for (const auto& o : nc::kernel_offsets_3d()) {
                    const Coord n{c.b, c.x + o[0] * h, c.y + o[1] * h, c.z + o[2] * h};
                    if (in_bounds(n))
                        out.push_back(n);
                }
            up_ = std::make_shared<CoordSet>(std::move(out), h, resolution_);
        }
        return up_;
    }

    nc::TablePtr CoordSet::up_table() const {
        auto fine = upsampled();
        std::lock_guard lock(cache_mutex_);
        if (!up_table_) {
            const int h = stride_ / 2;
            auto t = std::make_shared<nc::NeighborTable>();
            t->n_out = fine->size();
            t->n_in = size();
            t->taps = 27;
            t->rows.resize(static_cast<std::size_t>(t->n_out) * 27);
            const auto& offs = nc::kernel_offsets_3d();
            for (std::int64_t i = 0; i < t->n_out; ++i) {
                const auto& c = (*fine)[i];
                for (int k = 0; k < 27; ++k)
                    t->rows[i * 27 + k] =
                        find({c.b, c.x - offs[k][0] * h, c.y - offs[k][1] * h, c.z - offs[k][2] * h});
            }
            up_table_ = std::move(t);
        }
        return up_table_;
    }

    CoordSetPtr make_coords(std::vector<Coord> coords, int stride, int resolution) {
        return std::make_shared<CoordSet>(std::move(coords), stride, resolution);
    }

    template <typename T>
    nc::Tensor<T> to_dense(const SparseTensor<T>& x, int batch_size) {
        const int s = x.stride();
        const std::int64_t n = (x.coords->resolution() + s - 1) / s;
        const auto c = x.channels();
        nc::Tensor<T> out({batch_size, n, n, n, c});
        const auto& f = x.features.value();
        for (std::int64_t i = 0; i < x.size(); ++i) {
            const auto& p = (*x.coords)[i];
            const auto cell = (((static_cast<std::int64_t>(p.b) * n + p.x / s) * n + p.y / s) * n + p.z / s);
            for (std::int64_t j = 0; j < c; ++j)
                out[cell * c + j] = f[i * c + j];
        }
        return out;
    }

    template <typename T>
    SparseTensor<T> from_dense(const nc::Tensor<T>& dense, std::span<const std::uint8_t> mask, int stride,
                               bool requires_grad) {
        if (dense.rank() != 5 || dense.dim(1) != dense.dim(2) || dense.dim(2) != dense.dim(3))
            throw nc::ShapeError("from_dense: expected a cubic [B, N, N, N, C] grid");
        const auto b = dense.dim(0), n = dense.dim(1), c = dense.dim(4);
        if (static_cast<std::int64_t>(mask.size()) != b * n * n * n)
            throw nc::ShapeError("from_dense: mask size mismatch");
        std::vector<Coord> coords;
        std::vector<std::int64_t> cells;
        // Row-major cell order equals sorted coordinate order.
        for (std::int64_t cell = 0; cell < b * n * n * n; ++cell)
            if (mask[cell]) {
                const auto z = cell % n, y = (cell / n) % n, x = (cell / (n * n)) % n, bb = cell / (n * n * n);
                coords.push_back({static_cast<std::int32_t>(bb), static_cast<std::int32_t>(x * stride),
                                  static_cast<std::int32_t>(y * stride), static_cast<std::int32_t>(z * stride)});
                cells.push_back(cell);
            }
        nc::Tensor<T> f({static_cast<std::int64_t>(cells.size()), c});
        for (std::size_t i = 0; i < cells.size(); ++i)
            for (std::int64_t j = 0; j < c; ++j)
                f[i * c + j] = dense[cells[i] * c + j];
        return {make_coords(std::move(coords), stride, static_cast<int>(n * stride)), nc::Var<T>(std::move(f), requires_grad)};
    }

    template nc::Tensor<float> to_dense(const SparseTensor<float>&, int);
    template nc::Tensor<double> to_dense(const SparseTensor<double>&, int);
    template SparseTensor<float> from_dense(const nc::Tensor<float>&, std::span<const std::uint8_t>, int, bool);
    template SparseTensor<double> from_dense(const nc::Tensor<double>&, std::span<const std::uint8_t>, int, bool);

} // namespace l3dg::sparse
