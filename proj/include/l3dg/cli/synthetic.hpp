#pragma once

#include "l3dg/gridfit/io.hpp"
#include "l3dg/numcore/random.hpp"
#include "l3dg/splat/camera.hpp"

#include <filesystem>

namespace l3dg::cli {

    struct Sphere {
        std::array<double, 3> center;
        double radius;
        std::array<double, 3> albedo;
    };

    /// Axis-aligned box.
    struct Box {
        std::array<double, 3> center;
        std::array<double, 3> half_extent;
        std::array<double, 3> albedo;
    };

    /// Diffuse spheres and boxes under one directional light.
    struct SyntheticScene {
        std::vector<Sphere> spheres;
        std::vector<Box> boxes;
        std::array<double, 3> light_dir{0.4, 0.8, 0.45}; // direction towards the light, normalised at use
        double ambient = 0.35;
    };

    SyntheticScene three_sphere_scene();

    /// `count` spheres with random centres, radii and colours inside [-0.6, 0.6]^3.
    SyntheticScene random_sphere_scene(nc::Rng& rng, int count);

    /// `count` cameras on two rings around the origin, all looking at it.
    std::vector<splat::Camera> orbit_cameras(int count, int size, double distance = 3.0, double fov_deg = 40.0);

    /// Ray-traced image with `supersample`^2 jittered-free samples per pixel.
    nc::Tensor<float> ray_trace(const SyntheticScene& scene, const splat::Camera& cam, int supersample = 3,
                                const std::array<double, 3>& background = {1, 1, 1});

    /// Area-uniform samples on the shape surfaces, coloured by albedo.
    gridfit::PointCloud surface_points(const SyntheticScene& scene, int count, nc::Rng& rng);

    /// images/NNN.png, cameras.json and points.ply under `dir`.
    void write_dataset(const std::filesystem::path& dir, const SyntheticScene& scene,
                       const std::vector<splat::Camera>& cameras, int points, nc::Rng& rng);

} // namespace l3dg::cli
