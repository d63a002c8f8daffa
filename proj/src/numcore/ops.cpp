#include "l3dg/numcore/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace l3dg::nc {

    namespace {

        template <typename T>
        using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        template <typename T>
        using MapMat = Eigen::Map<RowMat<T>>;
        template <typename T>
        using CMapMat = Eigen::Map<const RowMat<T>>;

        template <typename T>
        void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
            if (a.shape() != b.shape())
                throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
        }

        std::int64_t channels_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

        // f(x) and df/dx expressed through (x, y).
        template <typename T, typename F, typename DF>
        Var<T> unary(const char* name, const Var<T>& a, F f, DF df) {
            const auto& av = a.value();
            Tensor<T> out(av.shape());
            for (std::int64_t i = 0; i < av.numel(); ++i)
                out[i] = f(av[i]);
            return record<T>(name, std::move(out), {a}, [df](Node<T>& self) {
                auto* ga = parent_grad(self, 0);
                if (!ga)
                    return;
                const auto& x = self.parents[0]->value;
                const auto& y = self.value;
                for (std::int64_t i = 0; i < x.numel(); ++i)
                    (*ga)[i] += self.grad[i] * df(x[i], y[i]);
            });
        }

    } // namespace

    template <typename T>
    Var<T> add(const Var<T>& a, const Var<T>& b) {
        require_same_shape(a, b, "add");
        Tensor<T> out(a.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i)
            out[i] = a.value()[i] + b.value()[i];
        return record<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
            for (std::size_t p = 0; p < 2; ++p)
                if (auto* g = parent_grad(self, p))
                    for (std::int64_t i = 0; i < g->numel(); ++i)
                        (*g)[i] += self.grad[i];
        });
    }

    template <typename T>
    Var<T> sub(const Var<T>& a, const Var<T>& b) {
        require_same_shape(a, b, "sub");
        Tensor<T> out(a.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i)
            out[i] = a.value()[i] - b.value()[i];
        return record<T>("sub", std::move(out), {a, b}, [](Node<T>& self) {
            if (auto* g = parent_grad(self, 0))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] += self.grad[i];
            if (auto* g = parent_grad(self, 1))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] -= self.grad[i];
        });
    }

    template <typename T>
    Var<T> mul(const Var<T>& a, const Var<T>& b) {
        require_same_shape(a, b, "mul");
        Tensor<T> out(a.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i)
            out[i] = a.value()[i] * b.value()[i];
        return record<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
            const auto& av = self.parents[0]->value;
            const auto& bv = self.parents[1]->value;
            if (auto* g = parent_grad(self, 0))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] += self.grad[i] * bv[i];
            if (auto* g = parent_grad(self, 1))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] += self.grad[i] * av[i];
        });
    }

    template <typename T>
    Var<T> div(const Var<T>& a, const Var<T>& b) {
        require_same_shape(a, b, "div");
        Tensor<T> out(a.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i)
            out[i] = a.value()[i] / b.value()[i];
        return record<T>("div", std::move(out), {a, b}, [](Node<T>& self) {
            const auto& bv = self.parents[1]->value;
            if (auto* g = parent_grad(self, 0))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] += self.grad[i] / bv[i];
            if (auto* g = parent_grad(self, 1))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] -= self.grad[i] * self.value[i] / bv[i];
        });
    }

    template <typename T>
    Var<T> neg(const Var<T>& a) {
        return scale(a, T(-1));
    }

    template <typename T>
    Var<T> scale(const Var<T>& a, T s) {
        Tensor<T> out(a.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i)
            out[i] = a.value()[i] * s;
        return record<T>("scale", std::move(out), {a}, [s](Node<T>& self) {
            if (auto* g = parent_grad(self, 0))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] += self.grad[i] * s;
        });
    }

    template <typename T>
    Var<T> add_scalar(const Var<T>& a, T s) {
        Tensor<T> out(a.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i)
            out[i] = a.value()[i] + s;
        return record<T>("add_scalar", std::move(out), {a}, [](Node<T>& self) {
            if (auto* g = parent_grad(self, 0))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] += self.grad[i];
        });
    }

    template <typename T>
    Var<T> exp(const Var<T>& a) {
        return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
    }
    template <typename T>
    Var<T> log(const Var<T>& a) {
        return unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
    }
    template <typename T>
    Var<T> tanh(const Var<T>& a) {
        return unary<T>("tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
    }
    template <typename T>
    Var<T> sigmoid(const Var<T>& a) {
        return unary<T>(
            "sigmoid", a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
    }
    template <typename T>
    Var<T> relu(const Var<T>& a) {
        return unary<T>(
            "relu", a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
    }
    template <typename T>
    Var<T> silu(const Var<T>& a) {
        return unary<T>(
            "silu", a, [](T x) { return x / (T(1) + std::exp(-x)); },
            [](T x, T) {
                T s = T(1) / (T(1) + std::exp(-x));
                return s * (T(1) + x * (T(1) - s));
            });
    }
    template <typename T>
    Var<T> square(const Var<T>& a) {
        return unary<T>("square", a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
    }
    template <typename T>
    Var<T> sqrt(const Var<T>& a) {
        return unary<T>("sqrt", a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
    }
    template <typename T>
    Var<T> abs(const Var<T>& a) {
        return unary<T>(
            "abs", a, [](T x) { return std::abs(x); },
            [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
    }

    template <typename T>
    Var<T> sum(const Var<T>& a) {
        T s = 0;
        for (auto v : a.value().data())
            s += v;
        return record<T>("sum", Tensor<T>::scalar(s), {a}, [](Node<T>& self) {
            if (auto* g = parent_grad(self, 0)) {
                T go = self.grad[0];
                for (auto& v : g->data())
                    v += go;
            }
        });
    }

    template <typename T>
    Var<T> mean(const Var<T>& a) {
        const auto n = a.numel();
        if (n == 0)
            throw ShapeError("mean of empty tensor");
        return scale(sum(a), T(1) / static_cast<T>(n));
    }

    template <typename T>
    Var<T> reshape(const Var<T>& a, Shape shape) {
        Tensor<T> out = a.value().reshaped(std::move(shape));
        return record<T>("reshape", std::move(out), {a}, [](Node<T>& self) {
            if (auto* g = parent_grad(self, 0))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] += self.grad[i];
        });
    }

    template <typename T>
    Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
        const auto c = channels_of(x.shape());
        if (bias.numel() != c)
            throw ShapeError("add_bias: bias has " + std::to_string(bias.numel()) + " entries, expected " +
                             std::to_string(c));
        Tensor<T> out = x.value();
        const auto rows = c ? out.numel() / c : 0;
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < c; ++j)
                out[r * c + j] += bias.value()[j];
        return record<T>("add_bias", std::move(out), {x, bias}, [c, rows](Node<T>& self) {
            if (auto* g = parent_grad(self, 0))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] += self.grad[i];
            if (auto* g = parent_grad(self, 1))
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < c; ++j)
                        (*g)[j] += self.grad[r * c + j];
        });
    }

    template <typename T>
    Var<T> mul_channels(const Var<T>& x, const Var<T>& s) {
        const auto c = channels_of(x.shape());
        if (s.numel() != c)
            throw ShapeError("mul_channels: scale length mismatch");
        Tensor<T> out = x.value();
        const auto rows = c ? out.numel() / c : 0;
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < c; ++j)
                out[r * c + j] *= s.value()[j];
        return record<T>("mul_channels", std::move(out), {x, s}, [c, rows](Node<T>& self) {
            const auto& xv = self.parents[0]->value;
            const auto& sv = self.parents[1]->value;
            if (auto* g = parent_grad(self, 0))
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < c; ++j)
                        (*g)[r * c + j] += self.grad[r * c + j] * sv[j];
            if (auto* g = parent_grad(self, 1))
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < c; ++j)
                        (*g)[j] += self.grad[r * c + j] * xv[r * c + j];
        });
    }

    template <typename T>
    Var<T> add_per_batch(const Var<T>& x, const Var<T>& e) {
        if (x.value().rank() < 2 || e.value().rank() != 2 || e.dim(0) != x.dim(0) ||
            e.dim(1) != channels_of(x.shape()))
            throw ShapeError("add_per_batch: expected x [B, ..., C] and e [B, C], got " + shape_str(x.shape()) +
                             " and " + shape_str(e.shape()));
        const auto b = x.dim(0), c = e.dim(1);
        const auto sites = x.numel() / (b * c);
        Tensor<T> out = x.value();
        for (std::int64_t bi = 0; bi < b; ++bi)
            for (std::int64_t s = 0; s < sites; ++s)
                for (std::int64_t j = 0; j < c; ++j)
                    out[(bi * sites + s) * c + j] += e.value()[bi * c + j];
        return record<T>("add_per_batch", std::move(out), {x, e}, [b, c, sites](Node<T>& self) {
            if (auto* g = parent_grad(self, 0))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] += self.grad[i];
            if (auto* g = parent_grad(self, 1))
                for (std::int64_t bi = 0; bi < b; ++bi)
                    for (std::int64_t s = 0; s < sites; ++s)
                        for (std::int64_t j = 0; j < c; ++j)
                            (*g)[bi * c + j] += self.grad[(bi * sites + s) * c + j];
        });
    }

    template <typename T>
    Var<T> matmul(const Var<T>& a, const Var<T>& b) {
        if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(1) != b.dim(0))
            throw ShapeError("matmul: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
        const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
        Tensor<T> out({m, n});
        MapMat<T>(out.ptr(), m, n).noalias() = CMapMat<T>(a.value().ptr(), m, k) * CMapMat<T>(b.value().ptr(), k, n);
        return record<T>("matmul", std::move(out), {a, b}, [m, k, n](Node<T>& self) {
            CMapMat<T> go(self.grad.ptr(), m, n);
            if (auto* g = parent_grad(self, 0))
                MapMat<T>(g->ptr(), m, k).noalias() += go * CMapMat<T>(self.parents[1]->value.ptr(), k, n).transpose();
            if (auto* g = parent_grad(self, 1))
                MapMat<T>(g->ptr(), k, n).noalias() += CMapMat<T>(self.parents[0]->value.ptr(), m, k).transpose() * go;
        });
    }

    template <typename T>
    Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
        if (w.value().rank() != 2 || channels_of(x.shape()) != w.dim(0))
            throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
        const auto k = w.dim(0), n = w.dim(1);
        const auto rows = x.numel() / k;
        Shape out_shape = x.shape();
        out_shape.back() = n;
        auto y = reshape(matmul(reshape(x, {rows, k}), w), out_shape);
        return bias.defined() ? add_bias(y, bias) : y;
    }

    template <typename T>
    Var<T> concat_channels(const std::vector<Var<T>>& parts) {
        if (parts.empty())
            throw ShapeError("concat_channels: no inputs");
        const auto rows = parts[0].numel() / channels_of(parts[0].shape());
        std::vector<std::int64_t> widths;
        std::int64_t total = 0;
        for (const auto& p : parts) {
            const auto c = channels_of(p.shape());
            if (p.numel() / c != rows || p.value().rank() != parts[0].value().rank())
                throw ShapeError("concat_channels: leading extents differ");
            widths.push_back(c);
            total += c;
        }
        Shape shape = parts[0].shape();
        shape.back() = total;
        Tensor<T> out(shape);
        std::int64_t off = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const auto c = widths[p];
            for (std::int64_t r = 0; r < rows; ++r)
                std::copy_n(parts[p].value().ptr() + r * c, c, out.ptr() + r * total + off);
            off += c;
        }
        return record<T>("concat", std::move(out), parts, [widths, rows, total](Node<T>& self) {
            std::int64_t off = 0;
            for (std::size_t p = 0; p < widths.size(); ++p) {
                const auto c = widths[p];
                if (auto* g = parent_grad(self, p))
                    for (std::int64_t r = 0; r < rows; ++r)
                        for (std::int64_t j = 0; j < c; ++j)
                            (*g)[r * c + j] += self.grad[r * total + off + j];
                off += c;
            }
        });
    }

    template <typename T>
    Var<T> slice_channels(const Var<T>& x, std::int64_t begin, std::int64_t end) {
        const auto c = channels_of(x.shape());
        if (begin < 0 || end > c || begin >= end)
            throw ShapeError("slice_channels: bad range");
        const auto rows = x.numel() / c;
        const auto w = end - begin;
        Shape shape = x.shape();
        shape.back() = w;
        Tensor<T> out(shape);
        for (std::int64_t r = 0; r < rows; ++r)
            std::copy_n(x.value().ptr() + r * c + begin, w, out.ptr() + r * w);
        return record<T>("slice", std::move(out), {x}, [rows, c, w, begin](Node<T>& self) {
            if (auto* g = parent_grad(self, 0))
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t j = 0; j < w; ++j)
                        (*g)[r * c + begin + j] += self.grad[r * w + j];
        });
    }

    template <typename T>
    Var<T> gather_rows(const Var<T>& x, std::span<const std::int64_t> rows) {
        const auto c = channels_of(x.shape());
        const auto n = c ? x.numel() / c : 0;
        const auto m = static_cast<std::int64_t>(rows.size());
        std::vector<std::int64_t> idx(rows.begin(), rows.end());
        Tensor<T> out({m, c});
        for (std::int64_t i = 0; i < m; ++i) {
            if (idx[i] < 0)
                continue;
            if (idx[i] >= n)
                throw ShapeError("gather_rows: row " + std::to_string(idx[i]) + " out of range");
            std::copy_n(x.value().ptr() + idx[i] * c, c, out.ptr() + i * c);
        }
        return record<T>("gather_rows", std::move(out), {x}, [idx = std::move(idx), c](Node<T>& self) {
            if (auto* g = parent_grad(self, 0))
                for (std::size_t i = 0; i < idx.size(); ++i)
                    if (idx[i] >= 0)
                        for (std::int64_t j = 0; j < c; ++j)
                            (*g)[idx[i] * c + j] += self.grad[static_cast<std::int64_t>(i) * c + j];
        });
    }

    template <typename T>
    Var<T> group_norm(const Var<T>& x, std::int64_t batch, std::int64_t groups, const Var<T>& gamma,
                      const Var<T>& beta, T eps) {
        const auto c = channels_of(x.shape());
        if (batch <= 0 || x.numel() % (batch * c) != 0 || groups <= 0 || c % groups != 0)
            throw ShapeError("group_norm: bad batch/group layout for " + shape_str(x.shape()));
        if (gamma.numel() != c || beta.numel() != c)
            throw ShapeError("group_norm: affine parameter length mismatch");
        const auto sites = x.numel() / (batch * c);
        const auto cg = c / groups;
        const auto& xv = x.value();
        Tensor<T> xhat(x.shape());
        std::vector<T> inv_std(static_cast<std::size_t>(batch * groups), T(0));
        for (std::int64_t b = 0; b < batch; ++b)
            for (std::int64_t g = 0; g < groups; ++g) {
                const auto count = sites * cg;
                if (count == 0)
                    continue;
                double m = 0;
                for (std::int64_t s = 0; s < sites; ++s)
                    for (std::int64_t j = 0; j < cg; ++j)
                        m += xv[(b * sites + s) * c + g * cg + j];
                m /= static_cast<double>(count);
                double var = 0;
                for (std::int64_t s = 0; s < sites; ++s)
                    for (std::int64_t j = 0; j < cg; ++j) {
                        double d = xv[(b * sites + s) * c + g * cg + j] - m;
                        var += d * d;
                    }
                var /= static_cast<double>(count);
                const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
                inv_std[b * groups + g] = is;
                for (std::int64_t s = 0; s < sites; ++s)
                    for (std::int64_t j = 0; j < cg; ++j) {
                        const auto i = (b * sites + s) * c + g * cg + j;
                        xhat[i] = (xv[i] - static_cast<T>(m)) * is;
                    }
            }
        Tensor<T> out(x.shape());
        for (std::int64_t r = 0; r < batch * sites; ++r)
            for (std::int64_t j = 0; j < c; ++j)
                out[r * c + j] = xhat[r * c + j] * gamma.value()[j] + beta.value()[j];

        return record<T>(
            "group_norm", std::move(out), {x, gamma, beta},
            [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, groups, sites, c, cg](Node<T>& self) {
                const auto& gv = self.parents[1]->value;
                const auto& go = self.grad;
                if (auto* gg = parent_grad(self, 1))
                    for (std::int64_t r = 0; r < batch * sites; ++r)
                        for (std::int64_t j = 0; j < c; ++j)
                            (*gg)[j] += go[r * c + j] * xhat[r * c + j];
                if (auto* gb = parent_grad(self, 2))
                    for (std::int64_t r = 0; r < batch * sites; ++r)
                        for (std::int64_t j = 0; j < c; ++j)
                            (*gb)[j] += go[r * c + j];
                auto* gx = parent_grad(self, 0);
                if (!gx)
                    return;
                for (std::int64_t b = 0; b < batch; ++b)
                    for (std::int64_t g = 0; g < groups; ++g) {
                        const auto count = static_cast<T>(sites * cg);
                        if (count == T(0))
                            continue;
                        T sum_dy = 0, sum_dy_xhat = 0;
                        for (std::int64_t s = 0; s < sites; ++s)
                            for (std::int64_t j = 0; j < cg; ++j) {
                                const auto i = (b * sites + s) * c + g * cg + j;
                                const T dy = go[i] * gv[g * cg + j];
                                sum_dy += dy;
                                sum_dy_xhat += dy * xhat[i];
                            }
                        const T is = inv_std[b * groups + g];
                        for (std::int64_t s = 0; s < sites; ++s)
                            for (std::int64_t j = 0; j < cg; ++j) {
                                const auto i = (b * sites + s) * c + g * cg + j;
                                const T dy = go[i] * gv[g * cg + j];
                                (*gx)[i] += is * (dy - sum_dy / count - xhat[i] * sum_dy_xhat / count);
                            }
                    }
            });
    }

    template <typename T>
    Var<T> self_attention(const Var<T>& qkv, std::int64_t heads) {
        if (qkv.value().rank() != 3 || qkv.dim(2) % (3 * heads) != 0)
            throw ShapeError("self_attention: expected [B, N, 3C] with C divisible by heads, got " +
                             shape_str(qkv.shape()));
        const auto b = qkv.dim(0), n = qkv.dim(1), c3 = qkv.dim(2), c = c3 / 3, dh = c / heads;
        const T scale_f = T(1) / std::sqrt(static_cast<T>(dh));
        using Stride = Eigen::OuterStride<>;
        using CMap = Eigen::Map<const RowMat<T>, 0, Stride>;
        using Map = Eigen::Map<RowMat<T>, 0, Stride>;

        Tensor<T> out({b, n, c});
        // Softmax probabilities per (batch, head), kept for backward.
        std::vector<RowMat<T>> probs(static_cast<std::size_t>(b * heads));
        for (std::int64_t bi = 0; bi < b; ++bi)
            for (std::int64_t h = 0; h < heads; ++h) {
                const T* base = qkv.value().ptr() + bi * n * c3;
                CMap q(base + h * dh, n, dh, Stride(c3));
                CMap k(base + c + h * dh, n, dh, Stride(c3));
                CMap v(base + 2 * c + h * dh, n, dh, Stride(c3));
                RowMat<T> s = (q * k.transpose()) * scale_f;
                for (std::int64_t i = 0; i < n; ++i) {
                    auto row = s.row(i);
                    const T mx = row.maxCoeff();
                    row = (row.array() - mx).exp();
                    row /= row.sum();
                }
                Map o(out.ptr() + bi * n * c + h * dh, n, dh, Stride(c));
                o.noalias() = s * v;
                probs[bi * heads + h] = std::move(s);
            }

        return record<T>("self_attention", std::move(out), {qkv},
                         [probs = std::move(probs), b, n, c, c3, dh, heads, scale_f](Node<T>& self) {
                             auto* g = parent_grad(self, 0);
                             if (!g)
                                 return;
                             for (std::int64_t bi = 0; bi < b; ++bi)
                                 for (std::int64_t h = 0; h < heads; ++h) {
                                     const T* base = self.parents[0]->value.ptr() + bi * n * c3;
                                     CMap q(base + h * dh, n, dh, Stride(c3));
                                     CMap k(base + c + h * dh, n, dh, Stride(c3));
                                     CMap v(base + 2 * c + h * dh, n, dh, Stride(c3));
                                     CMap go(self.grad.ptr() + bi * n * c + h * dh, n, dh, Stride(c));
                                     const auto& p = probs[bi * heads + h];
                                     T* gbase = g->ptr() + bi * n * c3;
                                     Map gq(gbase + h * dh, n, dh, Stride(c3));
                                     Map gk(gbase + c + h * dh, n, dh, Stride(c3));
                                     Map gv(gbase + 2 * c + h * dh, n, dh, Stride(c3));
                                     gv.noalias() += p.transpose() * go;
                                     RowMat<T> dp = go * v.transpose();
                                     RowMat<T> ds = p.array() *
                                                    (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
                                     ds *= scale_f;
                                     gq.noalias() += ds * k;
                                     gk.noalias() += ds.transpose() * q;
                                 }
                         });
    }

    template <typename T>
    Var<T> l1_loss(const Var<T>& a, const Var<T>& b) {
        return mean(abs(sub(a, b)));
    }

    template <typename T>
    Var<T> mse_loss(const Var<T>& a, const Var<T>& b) {
        return mean(square(sub(a, b)));
    }

    template <typename T>
    Var<T> bce_with_logits(const Var<T>& logits, std::span<const T> labels) {
        const auto n = logits.numel();
        if (static_cast<std::int64_t>(labels.size()) != n)
            throw ShapeError("bce_with_logits: label count mismatch");
        if (n == 0)
            return Var<T>(Tensor<T>::scalar(T(0)));
        std::vector<T> y(labels.begin(), labels.end());
        T total = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            const T x = logits.value()[i];
            // max(x,0) - x*y + log(1 + exp(-|x|))
            total += std::max(x, T(0)) - x * y[i] + std::log1p(std::exp(-std::abs(x)));
        }
        return record<T>("bce", Tensor<T>::scalar(total / static_cast<T>(n)), {logits},
                         [y = std::move(y), n](Node<T>& self) {
                             if (auto* g = parent_grad(self, 0)) {
                                 const T go = self.grad[0] / static_cast<T>(n);
                                 for (std::int64_t i = 0; i < n; ++i) {
                                     const T x = self.parents[0]->value[i];
                                     const T s = T(1) / (T(1) + std::exp(-x));
                                     (*g)[i] += go * (s - y[i]);
                                 }
                             }
                         });
    }

#define L3DG_INSTANTIATE_OPS(T)                                                                                   \
    template Var<T> add(const Var<T>&, const Var<T>&);                                                           \
    template Var<T> sub(const Var<T>&, const Var<T>&);                                                           \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                                           \
    template Var<T> div(const Var<T>&, const Var<T>&);                                                           \
    template Var<T> neg(const Var<T>&);                                                                          \
    template Var<T> scale(const Var<T>&, T);                                                                     \
    template Var<T> add_scalar(const Var<T>&, T);                                                                \
    template Var<T> exp(const Var<T>&);                                                                          \
    template Var<T> log(const Var<T>&);                                                                          \
    template Var<T> tanh(const Var<T>&);                                                                         \
    template Var<T> sigmoid(const Var<T>&);                                                                      \
    template Var<T> relu(const Var<T>&);                                                                         \
    template Var<T> silu(const Var<T>&);                                                                         \
    template Var<T> square(const Var<T>&);                                                                       \
    template Var<T> sqrt(const Var<T>&);                                                                         \
    template Var<T> abs(const Var<T>&);                                                                          \
    template Var<T> sum(const Var<T>&);                                                                          \
    template Var<T> mean(const Var<T>&);                                                                         \
    template Var<T> reshape(const Var<T>&, Shape);                                                               \
    template Var<T> add_bias(const Var<T>&, const Var<T>&);                                                      \
    template Var<T> mul_channels(const Var<T>&, const Var<T>&);                                                  \
    template Var<T> add_per_batch(const Var<T>&, const Var<T>&);                                                 \
    template Var<T> matmul(const Var<T>&, const Var<T>&);                                                        \
    template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                         \
    template Var<T> concat_channels(const std::vector<Var<T>>&);                                                 \
    template Var<T> slice_channels(const Var<T>&, std::int64_t, std::int64_t);                                   \
    template Var<T> gather_rows(const Var<T>&, std::span<const std::int64_t>);                                   \
    template Var<T> group_norm(const Var<T>&, std::int64_t, std::int64_t, const Var<T>&, const Var<T>&, T);      \
    template Var<T> self_attention(const Var<T>&, std::int64_t);                                                 \
    template Var<T> l1_loss(const Var<T>&, const Var<T>&);                                                       \
    template Var<T> mse_loss(const Var<T>&, const Var<T>&);                                                      \
    template Var<T> bce_with_logits(const Var<T>&, std::span<const T>);

    L3DG_INSTANTIATE_OPS(float)
    L3DG_INSTANTIATE_OPS(double)

} // namespace l3dg::nc
