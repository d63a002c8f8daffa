#pragma once

#include "l3dg/gridfit/grid.hpp"

#include <filesystem>
#include <stdexcept>

namespace l3dg::gridfit {

    class GridIoError : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Binary little-endian PLY, one vertex per primitive: int kx, ky, kz then
    /// double delta (3), log_scale (3), rotation (4), sh (12), opacity_logit.
    /// A JSON sidecar `<path>.json` holds resolution, voxel_size and the
    /// normalisation transform.
    void save_grid(const std::filesystem::path& path, const SparseGaussianGrid& grid);
    SparseGaussianGrid load_grid(const std::filesystem::path& path);

    struct PointCloud {
        std::vector<std::array<double, 3>> points;
        std::vector<std::array<double, 3>> colors; // [0, 1], may be empty
    };

    /// ASCII PLY with x, y, z and optional uchar red, green, blue.
    void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud);
    PointCloud load_point_cloud(const std::filesystem::path& path);

} // namespace l3dg::gridfit
