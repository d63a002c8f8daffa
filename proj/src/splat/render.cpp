#include "l3dg/splat/render.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace l3dg::splat {

    namespace {

        constexpr int kTile = 16;

        template <typename T>
        using V3 = Eigen::Matrix<T, 3, 1>;
        template <typename T>
        using M3 = Eigen::Matrix<T, 3, 3>;
        template <typename T>
        using M23 = Eigen::Matrix<T, 2, 3>;

        template <typename T>
        M3<T> quat_to_rot(T w, T x, T y, T z) {
            M3<T> R;
            R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y), //
                2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),  //
                2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
            return R;
        }

        // dL/dq for a unit quaternion given dL/dR.
        template <typename T>
        Eigen::Matrix<T, 4, 1> rot_grad_to_quat(T w, T x, T y, T z, const M3<T>& G) {
            Eigen::Matrix<T, 4, 1> g;
            g[0] = 2 * (-z * G(0, 1) + y * G(0, 2) + z * G(1, 0) - x * G(1, 2) - y * G(2, 0) + x * G(2, 1));
            g[1] = 2 * (y * G(0, 1) + z * G(0, 2) + y * G(1, 0) - 2 * x * G(1, 1) - w * G(1, 2) + z * G(2, 0) +
                        w * G(2, 1) - 2 * x * G(2, 2));
            g[2] = 2 * (-2 * y * G(0, 0) + x * G(0, 1) + w * G(0, 2) + x * G(1, 0) + z * G(1, 2) - w * G(2, 0) +
                        z * G(2, 1) - 2 * y * G(2, 2));
            g[3] = 2 * (-2 * z * G(0, 0) - w * G(0, 1) + x * G(0, 2) + w * G(1, 0) - 2 * z * G(1, 1) +
                        y * G(1, 2) + x * G(2, 0) + y * G(2, 1));
            return g;
        }

        template <typename T>
        struct Prim {
            bool valid = false;
            V3<T> tanh_d, mu, p, s, dir;
            T dist = 0;
            Eigen::Matrix<T, 4, 1> qhat;
            T qnorm = 0;
            M3<T> R, M, Sigma;
            M23<T> Tm;
            T conic[3]{};
            T mean2d[2]{};
            T depth = 0;
            T alpha = 0;
            T color[3]{};
            bool clamped[3]{};
            int x0 = 0, x1 = 0, y0 = 0, y1 = 0; // pixel rectangle [x0, x1) x [y0, y1)
        };

        template <typename T>
        struct Contrib {
            std::int32_t entry; // position in the tile list
            T G, w, trans;
        };

        template <typename T>
        struct Frame {
            int width = 0, height = 0, tiles_x = 0, tiles_y = 0;
            Camera cam;
            RenderSettings settings;
            double max_offset = 0;
            std::vector<Prim<T>> prims;
            std::vector<std::vector<std::int32_t>> tile_lists;
            std::vector<std::vector<Contrib<T>>> contribs;
            std::vector<std::vector<std::int32_t>> pixel_begin;
            std::vector<T> final_trans;

            int tile_count() const { return tiles_x * tiles_y; }
        };

        template <typename T>
        void prepare_primitive(Prim<T>& g, const T* row, const T* anchor, const Frame<T>& f, const M3<T>& W,
                               const V3<T>& t, const V3<T>& campos) {
            const auto& cam = f.cam;
            const auto& st = f.settings;
            const T fx = static_cast<T>(cam.fx), fy = static_cast<T>(cam.fy);
            for (int k = 0; k < 3; ++k) {
                g.tanh_d[k] = std::tanh(row[field::delta + k]);
                g.mu[k] = anchor[k] + static_cast<T>(f.max_offset) * g.tanh_d[k];
                g.s[k] = std::exp(row[field::log_scale + k]);
            }
            const T* r = row + field::rotation;
            g.qnorm = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2] + r[3] * r[3]);
            if (!(g.qnorm > T(1e-12)))
                return;
            for (int k = 0; k < 4; ++k)
                g.qhat[k] = r[k] / g.qnorm;
            g.R = quat_to_rot(g.qhat[0], g.qhat[1], g.qhat[2], g.qhat[3]);
            g.M = g.R * g.s.asDiagonal();
            g.Sigma = g.M * g.M.transpose();

            g.p = W * g.mu + t;
            const T z = g.p[2];
            if (!(z > static_cast<T>(st.near_plane)))
                return;
            M23<T> J;
            J << fx / z, 0, -fx * g.p[0] / (z * z), 0, fy / z, -fy * g.p[1] / (z * z);
            g.Tm = J * W;
            const Eigen::Matrix<T, 2, 2> cov = g.Tm * g.Sigma * g.Tm.transpose();
            const T a = cov(0, 0) + static_cast<T>(st.dilation);
            const T b = cov(0, 1);
            const T c = cov(1, 1) + static_cast<T>(st.dilation);
            const T det = a * c - b * b;
            if (!(det > 0))
                return;
            g.conic[0] = c / det;
            g.conic[1] = -b / det;
            g.conic[2] = a / det;
            g.mean2d[0] = fx * g.p[0] / z + static_cast<T>(cam.cx);
            g.mean2d[1] = fy * g.p[1] / z + static_cast<T>(cam.cy);
            g.depth = z;

            const T mid = T(0.5) * (a + c);
            const T lambda = mid + std::sqrt(std::max(T(0.1), mid * mid - det));
            const T radius = std::ceil(static_cast<T>(st.support_sigmas) * std::sqrt(lambda));
            g.x0 = std::max(0, static_cast<int>(std::floor(g.mean2d[0] - radius)));
            g.x1 = std::min(f.width, static_cast<int>(std::ceil(g.mean2d[0] + radius)) + 1);
            g.y0 = std::max(0, static_cast<int>(std::floor(g.mean2d[1] - radius)));
            g.y1 = std::min(f.height, static_cast<int>(std::ceil(g.mean2d[1] + radius)) + 1);
            if (g.x0 >= g.x1 || g.y0 >= g.y1)
                return;

            g.alpha = T(1) / (T(1) + std::exp(-row[field::opacity]));
            V3<T> v = g.mu - campos;
            g.dist = v.norm();
            g.dir = g.dist > 0 ? V3<T>(v / g.dist) : V3<T>(0, 0, 1);
            const T* sh = row + field::sh;
            const T c0 = static_cast<T>(kShC0), c1 = static_cast<T>(kShC1);
            for (int ch = 0; ch < 3; ++ch) {
                const T raw = c0 * sh[ch] +
                              c1 * (-g.dir[1] * sh[3 + ch] + g.dir[2] * sh[6 + ch] - g.dir[0] * sh[9 + ch]) + T(0.5);
                g.clamped[ch] = raw < 0;
                g.color[ch] = g.clamped[ch] ? T(0) : raw;
            }
            g.valid = true;
        }

        template <typename T>
        std::shared_ptr<Frame<T>> prepare(const SplatScene<T>& scene, const Camera& cam, const RenderSettings& st) {
            cam.validate();
            const auto n = scene.size();
            if (n > 0 && (scene.params.dim(1) != field::count || scene.anchors.shape() != nc::Shape{n, 3}))
                throw nc::ShapeError("render: expected params [N, 23] and anchors [N, 3]");
            auto f = std::make_shared<Frame<T>>();
            f->width = cam.width;
            f->height = cam.height;
            f->tiles_x = (cam.width + kTile - 1) / kTile;
            f->tiles_y = (cam.height + kTile - 1) / kTile;
            f->cam = cam;
            f->settings = st;
            f->max_offset = scene.max_offset;
            f->prims.resize(n);

            M3<T> W;
            V3<T> t, campos;
            const auto centre = cam.center();
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j)
                    W(i, j) = static_cast<T>(cam.rotation[i][j]);
                t[i] = static_cast<T>(cam.translation[i]);
                campos[i] = static_cast<T>(centre[i]);
            }
            const T* params = n ? scene.params.value().ptr() : nullptr;
            const T* anchors = n ? scene.anchors.ptr() : nullptr;
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < n; ++i)
                prepare_primitive(f->prims[i], params + i * field::count, anchors + i * 3, *f, W, t, campos);

            std::vector<std::int32_t> order;
            for (std::int64_t i = 0; i < n; ++i)
                if (f->prims[i].valid)
                    order.push_back(static_cast<std::int32_t>(i));
            std::stable_sort(order.begin(), order.end(),
                             [&](std::int32_t a, std::int32_t b) { return f->prims[a].depth < f->prims[b].depth; });

            f->tile_lists.resize(f->tile_count());
            for (auto i : order) {
                const auto& g = f->prims[i];
                for (int ty = g.y0 / kTile; ty <= (g.y1 - 1) / kTile; ++ty)
                    for (int tx = g.x0 / kTile; tx <= (g.x1 - 1) / kTile; ++tx)
                        f->tile_lists[ty * f->tiles_x + tx].push_back(i);
            }
            f->contribs.resize(f->tile_count());
            f->pixel_begin.resize(f->tile_count());
            f->final_trans.assign(static_cast<std::size_t>(f->width) * f->height, T(1));
            return f;
        }

        // Visits every accepted contribution of one pixel in depth order.
        template <typename T, typename Visit>
        T blend_pixel(const Frame<T>& f, const std::vector<std::int32_t>& list, int px, int py, Visit&& visit) {
            const T ux = px + T(0.5), uy = py + T(0.5);
            const T cutoff = static_cast<T>(f.settings.support_sigmas * f.settings.support_sigmas);
            const T min_w = static_cast<T>(f.settings.min_weight);
            T trans = 1;
            for (std::size_t e = 0; e < list.size(); ++e) {
                const auto& g = f.prims[list[e]];
                if (px < g.x0 || px >= g.x1 || py < g.y0 || py >= g.y1)
                    continue;
                const T dx = ux - g.mean2d[0], dy = uy - g.mean2d[1];
                const T q = g.conic[0] * dx * dx + 2 * g.conic[1] * dx * dy + g.conic[2] * dy * dy;
                if (q > cutoff)
                    continue;
                const T G = std::exp(T(-0.5) * q);
                const T w = g.alpha * G;
                if (w < min_w)
                    continue;
                visit(static_cast<std::int32_t>(e), G, w, trans);
                trans *= (1 - w);
            }
            return trans;
        }

        template <typename T>
        void rasterize(Frame<T>& f, T* image, T* acc_alpha) {
            const T bg[3] = {static_cast<T>(f.settings.background[0]), static_cast<T>(f.settings.background[1]),
                             static_cast<T>(f.settings.background[2])};
#pragma omp parallel for schedule(dynamic)
            for (int tile = 0; tile < f.tile_count(); ++tile) {
                const int tx = tile % f.tiles_x, ty = tile / f.tiles_x;
                const auto& list = f.tile_lists[tile];
                auto& contribs = f.contribs[tile];
                auto& begin = f.pixel_begin[tile];
                contribs.clear();
                begin.clear();
                for (int py = ty * kTile; py < std::min(f.height, (ty + 1) * kTile); ++py)
                    for (int px = tx * kTile; px < std::min(f.width, (tx + 1) * kTile); ++px) {
                        begin.push_back(static_cast<std::int32_t>(contribs.size()));
                        T c[3] = {0, 0, 0};
                        const T trans = blend_pixel(f, list, px, py, [&](std::int32_t e, T G, T w, T tr) {
                            const auto& g = f.prims[list[e]];
                            for (int ch = 0; ch < 3; ++ch)
                                c[ch] += g.color[ch] * w * tr;
                            contribs.push_back({e, G, w, tr});
                        });
                        const std::size_t pix = static_cast<std::size_t>(py) * f.width + px;
                        f.final_trans[pix] = trans;
                        for (int ch = 0; ch < 3; ++ch)
                            image[pix * 3 + ch] = c[ch] + trans * bg[ch];
                        acc_alpha[pix] = 1 - trans;
                    }
                begin.push_back(static_cast<std::int32_t>(contribs.size()));
            }
        }

        // Screen-space gradient slots per tile-list entry.
        enum Slot { kColor = 0, kAlpha = 3, kConic = 4, kMean = 7, kSlots = 9 };

        template <typename T>
        void backward_tile(const Frame<T>& f, int tile, const T* dimage, std::vector<T>& partial) {
            const T bg[3] = {static_cast<T>(f.settings.background[0]), static_cast<T>(f.settings.background[1]),
                             static_cast<T>(f.settings.background[2])};
            const auto& list = f.tile_lists[tile];
            const auto& contribs = f.contribs[tile];
            const auto& begin = f.pixel_begin[tile];
            partial.assign(list.size() * kSlots, T(0));
            const int tx = tile % f.tiles_x, ty = tile / f.tiles_x;
            int local = 0;
            for (int py = ty * kTile; py < std::min(f.height, (ty + 1) * kTile); ++py)
                for (int px = tx * kTile; px < std::min(f.width, (tx + 1) * kTile); ++px, ++local) {
                    const std::size_t pix = static_cast<std::size_t>(py) * f.width + px;
                    const T* dc = dimage + pix * 3;
                    // Colour blended behind the current contribution, background included.
                    T after[3] = {bg[0], bg[1], bg[2]};
                    const T ux = px + T(0.5), uy = py + T(0.5);
                    for (int k = begin[local + 1] - 1; k >= begin[local]; --k) {
                        const auto& c = contribs[k];
                        const auto& g = f.prims[list[c.entry]];
                        T* out = partial.data() + static_cast<std::size_t>(c.entry) * kSlots;
                        T dw = 0;
                        for (int ch = 0; ch < 3; ++ch) {
                            out[kColor + ch] += dc[ch] * c.w * c.trans;
                            dw += dc[ch] * c.trans * (g.color[ch] - after[ch]);
                            after[ch] = g.color[ch] * c.w + (1 - c.w) * after[ch];
                        }
                        out[kAlpha] += dw * c.G;
                        const T dq = dw * g.alpha * c.G * T(-0.5);
                        const T dx = ux - g.mean2d[0], dy = uy - g.mean2d[1];
                        out[kConic + 0] += dq * dx * dx;
                        out[kConic + 1] += dq * 2 * dx * dy;
                        out[kConic + 2] += dq * dy * dy;
                        out[kMean + 0] -= dq * 2 * (g.conic[0] * dx + g.conic[1] * dy);
                        out[kMean + 1] -= dq * 2 * (g.conic[1] * dx + g.conic[2] * dy);
                    }
                }
        }

        template <typename T>
        void backward_primitive(const Frame<T>& f, const Prim<T>& g, const T* row, const T* s2d, T* grow) {
            const auto& cam = f.cam;
            const T fx = static_cast<T>(cam.fx), fy = static_cast<T>(cam.fy);
            M3<T> W;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    W(i, j) = static_cast<T>(cam.rotation[i][j]);

            // Opacity.
            grow[field::opacity] += s2d[kAlpha] * g.alpha * (1 - g.alpha);

            // Colour and view direction.
            const T* sh = row + field::sh;
            const T c0 = static_cast<T>(kShC0), c1 = static_cast<T>(kShC1);
            V3<T> ddir = V3<T>::Zero();
            for (int ch = 0; ch < 3; ++ch) {
                if (g.clamped[ch])
                    continue;
                const T d = s2d[kColor + ch];
                grow[field::sh + ch] += c0 * d;
                grow[field::sh + 3 + ch] += -c1 * g.dir[1] * d;
                grow[field::sh + 6 + ch] += c1 * g.dir[2] * d;
                grow[field::sh + 9 + ch] += -c1 * g.dir[0] * d;
                ddir[0] += -c1 * sh[9 + ch] * d;
                ddir[1] += -c1 * sh[3 + ch] * d;
                ddir[2] += c1 * sh[6 + ch] * d;
            }
            V3<T> dmu = V3<T>::Zero();
            if (g.dist > 0)
                dmu += (ddir - g.dir * g.dir.dot(ddir)) / g.dist;

            // Conic -> projected covariance.
            Eigen::Matrix<T, 2, 2> Q, GQ;
            Q << g.conic[0], g.conic[1], g.conic[1], g.conic[2];
            GQ << s2d[kConic + 0], T(0.5) * s2d[kConic + 1], T(0.5) * s2d[kConic + 1], s2d[kConic + 2];
            const Eigen::Matrix<T, 2, 2> Gcov = -Q * GQ * Q;

            // cov = Tm Sigma Tm^T with Tm = J W.
            const M3<T> dSigma = g.Tm.transpose() * Gcov * g.Tm;
            const M23<T> dTm = 2 * Gcov * g.Tm * g.Sigma;
            const M23<T> dJ = dTm * W.transpose();

            const T x = g.p[0], y = g.p[1], z = g.p[2];
            const T z2 = z * z, z3 = z2 * z;
            V3<T> dp;
            dp[0] = -fx / z2 * dJ(0, 2) + fx / z * s2d[kMean + 0];
            dp[1] = -fy / z2 * dJ(1, 2) + fy / z * s2d[kMean + 1];
            dp[2] = -fx / z2 * dJ(0, 0) + 2 * fx * x / z3 * dJ(0, 2) - fy / z2 * dJ(1, 1) +
                    2 * fy * y / z3 * dJ(1, 2) - fx * x / z2 * s2d[kMean + 0] - fy * y / z2 * s2d[kMean + 1];
            dmu += W.transpose() * dp;

            for (int k = 0; k < 3; ++k)
                grow[field::delta + k] +=
                    dmu[k] * static_cast<T>(f.max_offset) * (1 - g.tanh_d[k] * g.tanh_d[k]);

            // Sigma = M M^T, M = R diag(s).
            const M3<T> dM = 2 * dSigma * g.M;
            M3<T> dR;
            for (int k = 0; k < 3; ++k) {
                T ds = 0;
                for (int j = 0; j < 3; ++j) {
                    ds += dM(j, k) * g.R(j, k);
                    dR(j, k) = dM(j, k) * g.s[k];
                }
                grow[field::log_scale + k] += ds * g.s[k];
            }
            const auto dq = rot_grad_to_quat(g.qhat[0], g.qhat[1], g.qhat[2], g.qhat[3], dR);
            const T along = g.qhat.dot(dq);
            for (int k = 0; k < 4; ++k)
                grow[field::rotation + k] += (dq[k] - g.qhat[k] * along) / g.qnorm;
        }

    } // namespace

    std::optional<Projection> project_gaussian(const std::array<double, 3>& mu,
                                               const std::array<std::array<double, 3>, 3>& cov3d,
                                               const Camera& cam) {
        const auto p = cam.to_camera(mu);
        if (!(p[2] > 0))
            return std::nullopt;
        M3<double> W, S;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                W(i, j) = cam.rotation[i][j];
                S(i, j) = cov3d[i][j];
            }
        M23<double> J;
        const double z = p[2];
        J << cam.fx / z, 0, -cam.fx * p[0] / (z * z), 0, cam.fy / z, -cam.fy * p[1] / (z * z);
        const Eigen::Matrix2d cov = J * W * S * W.transpose() * J.transpose();
        return Projection{{cam.fx * p[0] / z + cam.cx, cam.fy * p[1] / z + cam.cy},
                          {cov(0, 0), 0.5 * (cov(0, 1) + cov(1, 0)), cov(1, 1)},
                          z};
    }

    std::optional<double> eval_kernel(const std::array<double, 2>& u, const std::array<double, 2>& mean,
                                      const std::array<double, 3>& cov) {
        const double det = cov[0] * cov[2] - cov[1] * cov[1];
        if (!(det > 0))
            return std::nullopt;
        const double dx = u[0] - mean[0], dy = u[1] - mean[1];
        const double q = (cov[2] * dx * dx - 2 * cov[1] * dx * dy + cov[0] * dy * dy) / det;
        return std::exp(-0.5 * q);
    }

    std::array<double, 3> sh_color(std::span<const double> sh, const std::array<double, 3>& d) {
        if (sh.size() != kShValues)
            throw std::invalid_argument("sh_color: expected 12 coefficients");
        const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        if (std::abs(n - 1) > 1e-6)
            throw std::invalid_argument("sh_color: view direction must be unit length");
        std::array<double, 3> c{};
        for (int ch = 0; ch < 3; ++ch)
            c[ch] = std::max(0.0, kShC0 * sh[ch] + kShC1 * (-d[1] * sh[3 + ch] + d[2] * sh[6 + ch] - d[0] * sh[9 + ch]) +
                                      0.5);
        return c;
    }

    template <typename T>
    RenderResult<T> render(const SplatScene<T>& scene, const Camera& cam, const RenderSettings& st) {
        auto f = prepare(scene, cam, st);
        nc::Tensor<T> image({cam.height, cam.width, 3});
        nc::Tensor<T> alpha({cam.height, cam.width});
        rasterize(*f, image.ptr(), alpha.ptr());

        auto stats = std::make_shared<ViewGradients>();
        const auto n = scene.size();
        stats->mean2d.assign(static_cast<std::size_t>(n) * 2, 0.0);
        stats->visible.assign(n, 0);
        for (std::int64_t i = 0; i < n; ++i)
            stats->visible[i] = f->prims[i].valid;

        if (n == 0)
            return {nc::Var<T>(std::move(image)), std::move(alpha), std::move(stats)};

        auto var = nc::record<T>(
            "render", std::move(image), {scene.params}, [f, stats](nc::Node<T>& self) {
                auto* gp = nc::parent_grad(self, 0);
                if (!gp)
                    return;
                const int tiles = f->tile_count();
                std::vector<std::vector<T>> partials(tiles);
#pragma omp parallel for schedule(dynamic)
                for (int tile = 0; tile < tiles; ++tile)
                    backward_tile(*f, tile, self.grad.ptr(), partials[tile]);

                const auto n = static_cast<std::int64_t>(f->prims.size());
                std::vector<T> screen(static_cast<std::size_t>(n) * kSlots, T(0));
                for (int tile = 0; tile < tiles; ++tile) {
                    const auto& list = f->tile_lists[tile];
                    for (std::size_t e = 0; e < list.size(); ++e)
                        for (int k = 0; k < kSlots; ++k)
                            screen[static_cast<std::size_t>(list[e]) * kSlots + k] += partials[tile][e * kSlots + k];
                }
                const T* params = self.parents[0]->value.ptr();
                T* grads = gp->ptr();
#pragma omp parallel for schedule(static)
                for (std::int64_t i = 0; i < n; ++i) {
                    const auto& g = f->prims[i];
                    if (!g.valid)
                        continue;
                    const T* s2d = screen.data() + i * kSlots;
                    backward_primitive(*f, g, params + i * field::count, s2d, grads + i * field::count);
                    stats->mean2d[i * 2 + 0] += static_cast<double>(s2d[kMean + 0]) * 0.5 * f->width;
                    stats->mean2d[i * 2 + 1] += static_cast<double>(s2d[kMean + 1]) * 0.5 * f->height;
                }
            });
        return {std::move(var), std::move(alpha), std::move(stats)};
    }

    template <typename T>
    std::vector<PixelBlend> blend_weights(const SplatScene<T>& scene, const Camera& cam, const RenderSettings& st) {
        auto f = prepare(scene, cam, st);
        std::vector<PixelBlend> out(static_cast<std::size_t>(cam.width) * cam.height);
        for (int py = 0; py < cam.height; ++py)
            for (int px = 0; px < cam.width; ++px) {
                const auto& list = f->tile_lists[(py / kTile) * f->tiles_x + px / kTile];
                auto& pb = out[static_cast<std::size_t>(py) * cam.width + px];
                pb.residual = blend_pixel(*f, list, px, py, [&](std::int32_t e, T, T w, T tr) {
                    pb.weights.push_back(static_cast<double>(w * tr));
                    pb.primitives.push_back(list[e]);
                });
            }
        return out;
    }

    template RenderResult<float> render(const SplatScene<float>&, const Camera&, const RenderSettings&);
    template RenderResult<double> render(const SplatScene<double>&, const Camera&, const RenderSettings&);
    template std::vector<PixelBlend> blend_weights(const SplatScene<float>&, const Camera&, const RenderSettings&);
    template std::vector<PixelBlend> blend_weights(const SplatScene<double>&, const Camera&, const RenderSettings&);

} // namespace l3dg::splat
