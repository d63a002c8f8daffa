#include "l3dg/numcore/neighbor_conv.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>

namespace l3dg::nc {

    namespace {

        template <typename T>
        using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

        constexpr std::int64_t kChunkRows = 2048;

        template <typename T>
        void fill_columns(const T* x, std::int64_t cin, const NeighborTable& table, std::int64_t r0,
                          std::int64_t r1, RowMat<T>& col) {
            const int taps = table.taps;
            col.resize(r1 - r0, taps * cin);
            for (std::int64_t r = r0; r < r1; ++r) {
                T* dst = col.data() + (r - r0) * taps * cin;
                for (int k = 0; k < taps; ++k) {
                    const auto src = table.at(r, k);
                    if (src < 0)
                        std::fill_n(dst + k * cin, cin, T(0));
                    else
                        std::copy_n(x + static_cast<std::int64_t>(src) * cin, cin, dst + k * cin);
                }
            }
        }

        void check_table(const NeighborTable& t) {
            if (static_cast<std::int64_t>(t.rows.size()) != t.n_out * t.taps)
                throw ShapeError("neighbor table size does not match n_out * taps");
        }

    } // namespace

    template <typename T>
    Var<T> neighbor_conv(const Var<T>& x, TablePtr table_ptr, const Var<T>& weight) {
        const NeighborTable& table = *table_ptr;
        check_table(table);
        const auto& xv = x.value();
        if (xv.rank() != 2 || xv.dim(0) != table.n_in)
            throw ShapeError("neighbor_conv: input " + shape_str(xv.shape()) + " does not match table with " +
                             std::to_string(table.n_in) + " input rows");
        const auto cin = xv.dim(1);
        if (weight.value().rank() != 2 || weight.dim(0) != table.taps * cin)
            throw ShapeError("neighbor_conv: weight " + shape_str(weight.shape()) + " does not match " +
                             std::to_string(table.taps) + " taps x " + std::to_string(cin) + " channels");
        const auto cout = weight.dim(1);
        const auto n_out = table.n_out;

        Tensor<T> out({n_out, cout});
        Eigen::Map<const RowMat<T>> w(weight.value().ptr(), table.taps * cin, cout);
        RowMat<T> col;
        for (std::int64_t r0 = 0; r0 < n_out; r0 += kChunkRows) {
            const auto r1 = std::min(n_out, r0 + kChunkRows);
            fill_columns(xv.ptr(), cin, table, r0, r1, col);
            Eigen::Map<RowMat<T>>(out.ptr() + r0 * cout, r1 - r0, cout).noalias() = col * w;
        }

        return record<T>("neighbor_conv", std::move(out), {x, weight}, [table_ptr, cin, cout](Node<T>& self) {
            const NeighborTable& table = *table_ptr;
            const auto& xv = self.parents[0]->value;
            const auto& wv = self.parents[1]->value;
            auto* gx = parent_grad(self, 0);
            auto* gw = parent_grad(self, 1);
            Eigen::Map<const RowMat<T>> w(wv.ptr(), table.taps * cin, cout);
            RowMat<T> col, dcol;
            for (std::int64_t r0 = 0; r0 < table.n_out; r0 += kChunkRows) {
                const auto r1 = std::min(table.n_out, r0 + kChunkRows);
                Eigen::Map<const RowMat<T>> go(self.grad.ptr() + r0 * cout, r1 - r0, cout);
                if (gw) {
                    fill_columns(xv.ptr(), cin, table, r0, r1, col);
                    Eigen::Map<RowMat<T>>(gw->ptr(), table.taps * cin, cout).noalias() += col.transpose() * go;
                }
                if (gx) {
                    dcol.noalias() = go * w.transpose();
                    for (std::int64_t r = r0; r < r1; ++r)
                        for (int k = 0; k < table.taps; ++k) {
                            const auto src = table.at(r, k);
                            if (src < 0)
                                continue;
                            const T* s = dcol.data() + (r - r0) * table.taps * cin + k * cin;
                            T* d = gx->ptr() + static_cast<std::int64_t>(src) * cin;
                            for (std::int64_t j = 0; j < cin; ++j)
                                d[j] += s[j];
                        }
                }
            }
        });
    }

    template <typename T>
    Var<T> max_pool_rows(const Var<T>& x, const NeighborTable& table) {
        check_table(table);
        const auto& xv = x.value();
        if (xv.rank() != 2 || xv.dim(0) != table.n_in)
            throw ShapeError("max_pool_rows: input does not match table");
        const auto c = xv.dim(1);
        Tensor<T> out({table.n_out, c});
        std::vector<std::int32_t> argmax(static_cast<std::size_t>(table.n_out * c), -1);
        for (std::int64_t r = 0; r < table.n_out; ++r)
            for (std::int64_t j = 0; j < c; ++j) {
                T best = -std::numeric_limits<T>::infinity();
                std::int32_t arg = -1;
                for (int k = 0; k < table.taps; ++k) {
                    const auto src = table.at(r, k);
                    if (src >= 0 && xv[src * c + j] > best) {
                        best = xv[src * c + j];
                        arg = src;
                    }
                }
                out[r * c + j] = arg >= 0 ? best : T(0);
                argmax[r * c + j] = arg;
            }
        return record<T>("max_pool", std::move(out), {x}, [argmax = std::move(argmax), c](Node<T>& self) {
            if (auto* g = parent_grad(self, 0))
                for (std::size_t i = 0; i < argmax.size(); ++i)
                    if (argmax[i] >= 0)
                        (*g)[argmax[i] * c + static_cast<std::int64_t>(i) % c] += self.grad[static_cast<std::int64_t>(i)];
        });
    }

    const std::array<std::array<int, 3>, 27>& kernel_offsets_3d() {
        static const auto offsets = [] {
            std::array<std::array<int, 3>, 27> o{};
            int i = 0;
            for (int dx = -1; dx <= 1; ++dx)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dz = -1; dz <= 1; ++dz)
                        o[i++] = {dx, dy, dz};
            return o;
        }();
        return offsets;
    }

    NeighborTable dense_conv3d_table(std::int64_t batch, std::int64_t d, std::int64_t h, std::int64_t w, int stride) {
        if (stride != 1 && stride != 2)
            throw ShapeError("dense_conv3d_table: stride must be 1 or 2");
        const auto od = stride == 1 ? d : (d + 1) / 2;
        const auto oh = stride == 1 ? h : (h + 1) / 2;
        const auto ow = stride == 1 ? w : (w + 1) / 2;
        NeighborTable t;
        t.taps = 27;
        t.n_in = batch * d * h * w;
        t.n_out = batch * od * oh * ow;
        t.rows.assign(static_cast<std::size_t>(t.n_out * 27), -1);
        const auto& offs = kernel_offsets_3d();
        std::int64_t o = 0;
        for (std::int64_t b = 0; b < batch; ++b)
            for (std::int64_t z = 0; z < od; ++z)
                for (std::int64_t y = 0; y < oh; ++y)
                    for (std::int64_t x = 0; x < ow; ++x, ++o)
                        for (int k = 0; k < 27; ++k) {
                            // offs[k] components map to (D, H, W)
                            const auto iz = z * stride + offs[k][0];
                            const auto iy = y * stride + offs[k][1];
                            const auto ix = x * stride + offs[k][2];
                            if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 || ix >= w)
                                continue;
                            t.rows[o * 27 + k] = static_cast<std::int32_t>(((b * d + iz) * h + iy) * w + ix);
                        }
        return t;
    }

    NeighborTable dense_upsample3d_table(std::int64_t batch, std::int64_t d, std::int64_t h, std::int64_t w) {
        NeighborTable t;
        t.taps = 1;
        t.n_in = batch * d * h * w;
        t.n_out = batch * 8 * d * h * w;
        t.rows.resize(static_cast<std::size_t>(t.n_out));
        std::int64_t o = 0;
        for (std::int64_t b = 0; b < batch; ++b)
            for (std::int64_t z = 0; z < 2 * d; ++z)
                for (std::int64_t y = 0; y < 2 * h; ++y)
                    for (std::int64_t x = 0; x < 2 * w; ++x, ++o)
                        t.rows[o] = static_cast<std::int32_t>(((b * d + z / 2) * h + y / 2) * w + x / 2);
        return t;
    }

    NeighborTable image_conv3x3_table(std::int64_t h, std::int64_t w) {
        NeighborTable t;
        t.taps = 9;
        t.n_in = t.n_out = h * w;
        t.rows.assign(static_cast<std::size_t>(t.n_out * 9), -1);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                for (int k = 0; k < 9; ++k) {
                    const auto iy = y + k / 3 - 1, ix = x + k % 3 - 1;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                        t.rows[(y * w + x) * 9 + k] = static_cast<std::int32_t>(iy * w + ix);
                }
        return t;
    }

    NeighborTable image_pool2x2_table(std::int64_t h, std::int64_t w) {
        NeighborTable t;
        t.taps = 4;
        t.n_in = h * w;
        const auto oh = h / 2, ow = w / 2;
        t.n_out = oh * ow;
        t.rows.resize(static_cast<std::size_t>(t.n_out * 4));
        for (std::int64_t y = 0; y < oh; ++y)
            for (std::int64_t x = 0; x < ow; ++x)
                for (int k = 0; k < 4; ++k)
                    t.rows[(y * ow + x) * 4 + k] = static_cast<std::int32_t>((2 * y + k / 2) * w + 2 * x + k % 2);
        return t;
    }

    template Var<float> neighbor_conv(const Var<float>&, TablePtr, const Var<float>&);
    template Var<double> neighbor_conv(const Var<double>&, TablePtr, const Var<double>&);
    template Var<float> max_pool_rows(const Var<float>&, const NeighborTable&);
    template Var<double> max_pool_rows(const Var<double>&, const NeighborTable&);

} // namespace l3dg::nc
