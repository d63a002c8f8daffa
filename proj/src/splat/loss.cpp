#include "l3dg/splat/loss.hpp"

#include "l3dg/numcore/ops.hpp"

#include <array>
#include <cmath>
#include <memory>

namespace l3dg::splat {

    namespace {

        constexpr int kRadius = 5;
        constexpr double kSigma = 1.5;
        constexpr double kC1 = 0.01 * 0.01;
        constexpr double kC2 = 0.03 * 0.03;

        // Separable window whose rows are renormalised to the in-image weight.
        template <typename T>
        struct Window {
            std::array<T, 2 * kRadius + 1> taps;
            std::vector<T> norm_h, norm_w;
            int h, w;

            Window(int h_, int w_) : h(h_), w(w_) {
                for (int i = -kRadius; i <= kRadius; ++i)
                    taps[i + kRadius] = static_cast<T>(std::exp(-0.5 * i * i / (kSigma * kSigma)));
                norm_h = norms(h);
                norm_w = norms(w);
            }

            std::vector<T> norms(int n) const {
                std::vector<T> z(n, T(0));
                for (int i = 0; i < n; ++i)
                    for (int k = -kRadius; k <= kRadius; ++k)
                        if (i + k >= 0 && i + k < n)
                            z[i] += taps[k + kRadius];
                return z;
            }

            // out(p) = sum_q K(p, q) in(q), or the transpose when `transpose`.
            void apply(const std::vector<T>& in, std::vector<T>& out, bool transpose) const {
                std::vector<T> tmp(in.size(), T(0));
                out.assign(in.size(), T(0));
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        T acc = 0;
                        for (int k = -kRadius; k <= kRadius; ++k) {
                            const int xx = x + k;
                            if (xx < 0 || xx >= w)
                                continue;
                            const T v = in[y * w + xx];
                            acc += taps[k + kRadius] * (transpose ? v / norm_w[xx] : v);
                        }
                        tmp[y * w + x] = transpose ? acc : acc / norm_w[x];
                    }
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        T acc = 0;
                        for (int k = -kRadius; k <= kRadius; ++k) {
                            const int yy = y + k;
                            if (yy < 0 || yy >= h)
                                continue;
                            const T v = tmp[yy * w + x];
                            acc += taps[k + kRadius] * (transpose ? v / norm_h[yy] : v);
                        }
                        out[y * w + x] = transpose ? acc : acc / norm_h[y];
                    }
            }
        };

    } // namespace

    template <typename T>
    nc::Var<T> ssim(const nc::Var<T>& x, const nc::Tensor<T>& y) {
        const auto& xv = x.value();
        if (xv.shape() != y.shape() || xv.rank() != 3)
            throw nc::ShapeError("ssim: expected equal [H, W, C] images, got " + nc::shape_str(xv.shape()) +
                                 " and " + nc::shape_str(y.shape()));
        const int h = static_cast<int>(xv.dim(0)), w = static_cast<int>(xv.dim(1)), ch = static_cast<int>(xv.dim(2));
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        auto win = std::make_shared<Window<T>>(h, w);
        const T c1 = static_cast<T>(kC1), c2 = static_cast<T>(kC2);

        // Per-pixel partials of SSIM w.r.t. (mu_x, E[x^2], E[xy]), per channel.
        auto d_mu = std::make_shared<std::vector<T>>(plane * ch);
        auto d_xx = std::make_shared<std::vector<T>>(plane * ch);
        auto d_xy = std::make_shared<std::vector<T>>(plane * ch);
        T total = 0;
        std::vector<T> xs(plane), ys(plane), buf(plane), mx, my, exx, eyy, exy;
        for (int c = 0; c < ch; ++c) {
            for (std::size_t p = 0; p < plane; ++p) {
                xs[p] = xv[p * ch + c];
                ys[p] = y[p * ch + c];
            }
            win->apply(xs, mx, false);
            win->apply(ys, my, false);
            for (std::size_t p = 0; p < plane; ++p)
                buf[p] = xs[p] * xs[p];
            win->apply(buf, exx, false);
            for (std::size_t p = 0; p < plane; ++p)
                buf[p] = ys[p] * ys[p];
            win->apply(buf, eyy, false);
            for (std::size_t p = 0; p < plane; ++p)
                buf[p] = xs[p] * ys[p];
            win->apply(buf, exy, false);
            for (std::size_t p = 0; p < plane; ++p) {
                const T ux = mx[p], uy = my[p];
                const T sxx = exx[p] - ux * ux, syy = eyy[p] - uy * uy, sxy = exy[p] - ux * uy;
                const T a1 = 2 * ux * uy + c1, a2 = 2 * sxy + c2;
                const T b1 = ux * ux + uy * uy + c1, b2 = sxx + syy + c2;
                const T s = a1 * a2 / (b1 * b2);
                total += s;
                const std::size_t k = c * plane + p;
                // Grouped so that every partial cancels exactly when x == y.
                const T r1 = a1 / b1;
                (*d_mu)[k] = (2 * uy * (a2 - a1) - 2 * ux * s * (b2 - b1)) / (b1 * b2);
                (*d_xx)[k] = -s / b2;
                (*d_xy)[k] = 2 * (r1 / b2);
            }
        }
        const T count = static_cast<T>(plane * ch);
        return nc::record<T>(
            "ssim", nc::Tensor<T>::scalar(total / count), {x}, [=, yt = y](nc::Node<T>& self) {
                auto* gx = nc::parent_grad(self, 0);
                if (!gx)
                    return;
                const T scale = self.grad[0] / count;
                const auto& xv = self.parents[0]->value;
                std::vector<T> a, b, c;
                std::vector<T> seg(plane);
                for (int cc = 0; cc < ch; ++cc) {
                    const std::size_t off = cc * plane;
                    seg.assign(d_mu->begin() + off, d_mu->begin() + off + plane);
                    win->apply(seg, a, true);
                    seg.assign(d_xx->begin() + off, d_xx->begin() + off + plane);
                    win->apply(seg, b, true);
                    seg.assign(d_xy->begin() + off, d_xy->begin() + off + plane);
                    win->apply(seg, c, true);
                    for (std::size_t p = 0; p < plane; ++p) {
                        const T xq = xv[p * ch + cc], yq = yt[p * ch + cc];
                        (*gx)[p * ch + cc] += scale * (a[p] + 2 * xq * b[p] + yq * c[p]);
                    }
                }
            });
    }

    template <typename T>
    nc::Var<T> loss_3dg(const nc::Var<T>& rendered, const nc::Tensor<T>& target, double lambda) {
        if (rendered.shape() != target.shape())
            throw nc::ShapeError("loss_3dg: image dimensions differ");
        const T lam = static_cast<T>(lambda);
        auto l1 = nc::l1_loss(rendered, nc::Var<T>(target));
        auto dssim = nc::add_scalar(nc::neg(ssim(rendered, target)), T(1));
        return nc::add(nc::scale(l1, T(1) - lam), nc::scale(dssim, lam));
    }

    template <typename T>
    double psnr(const nc::Tensor<T>& a, const nc::Tensor<T>& b) {
        if (a.shape() != b.shape())
            throw nc::ShapeError("psnr: image dimensions differ");
        double mse = 0;
        for (std::int64_t i = 0; i < a.numel(); ++i) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            mse += d * d;
        }
        mse /= static_cast<double>(a.numel());
        return mse > 0 ? -10.0 * std::log10(mse) : INFINITY;
    }

#define L3DG_INSTANTIATE_LOSS(T)                                                                                   \
    template nc::Var<T> ssim(const nc::Var<T>&, const nc::Tensor<T>&);                                             \
    template nc::Var<T> loss_3dg(const nc::Var<T>&, const nc::Tensor<T>&, double);                                 \
    template double psnr(const nc::Tensor<T>&, const nc::Tensor<T>&);

    L3DG_INSTANTIATE_LOSS(float)
    L3DG_INSTANTIATE_LOSS(double)

} // namespace l3dg::splat
