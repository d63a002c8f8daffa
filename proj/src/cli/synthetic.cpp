#include "l3dg/cli/synthetic.hpp"

#include "l3dg/splat/image.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace l3dg::cli {

    namespace {
        using Vec3 = std::array<double, 3>;

        double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
        Vec3 normalized(const Vec3& a) {
            const double n = std::sqrt(dot(a, a));
            return {a[0] / n, a[1] / n, a[2] / n};
        }
    } // namespace

    SyntheticScene three_sphere_scene() {
        SyntheticScene s;
        s.spheres = {{{-0.45, 0.1, 0.0}, 0.35, {0.85, 0.2, 0.15}},
                     {{0.4, 0.15, 0.2}, 0.3, {0.15, 0.6, 0.9}},
                     {{0.0, -0.3, -0.4}, 0.28, {0.25, 0.8, 0.3}}};
        return s;
    }

    SyntheticScene random_sphere_scene(nc::Rng& rng, int count) {
        SyntheticScene s;
        for (int i = 0; i < count; ++i) {
            Sphere sp;
            sp.radius = rng.uniform(0.18, 0.35);
            const double lim = 0.6 - sp.radius;
            sp.center = {rng.uniform(-lim, lim), rng.uniform(-lim, lim), rng.uniform(-lim, lim)};
            sp.albedo = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
            s.spheres.push_back(sp);
        }
        return s;
    }

    std::vector<splat::Camera> orbit_cameras(int count, int size, double distance, double fov_deg) {
        std::vector<splat::Camera> cams;
        const double fov = fov_deg * M_PI / 180.0;
        for (int i = 0; i < count; ++i) {
            const double elevation = (i % 2 == 0 ? 0.35 : -0.3);
            const double azimuth = 2.0 * M_PI * i / count;
            const Vec3 eye{distance * std::cos(elevation) * std::cos(azimuth), distance * std::sin(elevation),
                           distance * std::cos(elevation) * std::sin(azimuth)};
            cams.push_back(splat::Camera::look_at(eye, {0, 0, 0}, {0, 1, 0}, fov, size, size));
        }
        return cams;
    }

    nc::Tensor<float> ray_trace(const SyntheticScene& scene, const splat::Camera& cam, int supersample,
                                const std::array<double, 3>& background) {
        nc::Tensor<float> img({cam.height, cam.width, 3});
        const Vec3 origin = cam.center();
        const Vec3 light = normalized(scene.light_dir);
        for (int py = 0; py < cam.height; ++py)
            for (int px = 0; px < cam.width; ++px) {
                Vec3 acc{0, 0, 0};
                for (int sy = 0; sy < supersample; ++sy)
                    for (int sx = 0; sx < supersample; ++sx) {
                        const double u = px + (sx + 0.5) / supersample, v = py + (sy + 0.5) / supersample;
                        const Vec3 dc{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
                        Vec3 dir{};
                        for (int k = 0; k < 3; ++k)
                            dir[k] = cam.rotation[0][k] * dc[0] + cam.rotation[1][k] * dc[1] +
                                     cam.rotation[2][k] * dc[2];
                        dir = normalized(dir);
                        double best = std::numeric_limits<double>::infinity();
                        Vec3 n{}, albedo{};
                        bool hit = false;
                        for (const auto& s : scene.spheres) {
                            const Vec3 oc{origin[0] - s.center[0], origin[1] - s.center[1], origin[2] - s.center[2]};
                            const double b = dot(oc, dir);
                            const double disc = b * b - (dot(oc, oc) - s.radius * s.radius);
                            if (disc < 0)
                                continue;
                            const double t = -b - std::sqrt(disc);
                            if (t > 1e-9 && t < best) {
                                best = t;
                                hit = true;
                                albedo = s.albedo;
                                for (int k = 0; k < 3; ++k)
                                    n[k] = (origin[k] + t * dir[k] - s.center[k]) / s.radius;
                            }
                        }
                        for (const auto& b : scene.boxes) {
                            double t0 = -std::numeric_limits<double>::infinity();
                            double t1 = std::numeric_limits<double>::infinity();
                            int axis = 0;
                            for (int k = 0; k < 3; ++k) {
                                const double lo = (b.center[k] - b.half_extent[k] - origin[k]) / dir[k];
                                const double hi = (b.center[k] + b.half_extent[k] - origin[k]) / dir[k];
                                const double near = std::min(lo, hi);
                                if (near > t0) {
                                    t0 = near;
                                    axis = k;
                                }
                                t1 = std::min(t1, std::max(lo, hi));
                            }
                            if (t0 > t1 || t0 <= 1e-9 || t0 >= best)
                                continue;
                            best = t0;
                            hit = true;
                            albedo = b.albedo;
                            n = {0, 0, 0};
                            n[axis] = dir[axis] > 0 ? -1.0 : 1.0;
                        }
                        if (!hit) {
                            for (int k = 0; k < 3; ++k)
                                acc[k] += background[k];
                            continue;
                        }
                        const double shade = scene.ambient + (1 - scene.ambient) * std::max(0.0, dot(n, light));
                        for (int k = 0; k < 3; ++k)
                            acc[k] += albedo[k] * shade;
                    }
                for (int k = 0; k < 3; ++k)
                    img[(static_cast<std::int64_t>(py) * cam.width + px) * 3 + k] =
                        static_cast<float>(acc[k] / (supersample * supersample));
            }
        return img;
    }

    gridfit::PointCloud surface_points(const SyntheticScene& scene, int count, nc::Rng& rng) {
        gridfit::PointCloud cloud;
        // Weights are surface areas divided by 4 pi.
        auto box_weight = [](const Box& b) {
            const auto& h = b.half_extent;
            return 2.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]) / M_PI;
        };
        double total = 0;
        for (const auto& s : scene.spheres)
            total += s.radius * s.radius;
        for (const auto& b : scene.boxes)
            total += box_weight(b);
        for (const auto& s : scene.spheres) {
            const int n = static_cast<int>(std::lround(count * s.radius * s.radius / total));
            for (int i = 0; i < n; ++i) {
                Vec3 d{rng.normal(), rng.normal(), rng.normal()};
                d = normalized(d);
                cloud.points.push_back(
                    {s.center[0] + s.radius * d[0], s.center[1] + s.radius * d[1], s.center[2] + s.radius * d[2]});
                cloud.colors.push_back(s.albedo);
            }
        }
        for (const auto& b : scene.boxes) {
            const auto& h = b.half_extent;
            const int n = static_cast<int>(std::lround(count * box_weight(b) / total));
            // Face pairs normal to x, y, z with areas proportional to the other two extents.
            const double areas[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};
            for (int i = 0; i < n; ++i) {
                double u = rng.uniform(0, areas[0] + areas[1] + areas[2]);
                int axis = 0;
                while (axis < 2 && u >= areas[axis])
                    u -= areas[axis++];
                Vec3 p{};
                for (int k = 0; k < 3; ++k)
                    p[k] = b.center[k] + rng.uniform(-h[k], h[k]);
                p[axis] = b.center[axis] + (rng.uniform() < 0.5 ? -h[axis] : h[axis]);
                cloud.points.push_back(p);
                cloud.colors.push_back(b.albedo);
            }
        }
        return cloud;
    }

    void write_dataset(const std::filesystem::path& dir, const SyntheticScene& scene,
                       const std::vector<splat::Camera>& cameras, int points, nc::Rng& rng) {
        std::filesystem::create_directories(dir / "images");
        std::vector<splat::CameraFrame> frames;
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "images/%03zu.png", i);
            splat::write_png(dir / name, ray_trace(scene, cameras[i]));
            frames.push_back({cameras[i], name});
        }
        splat::save_camera_set(dir / "cameras.json", frames);
        gridfit::save_point_cloud(dir / "points.ply", surface_points(scene, points, rng));
    }

} // namespace l3dg::cli
