#pragma once

#include "l3dg/gridfit/grid.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace l3dg::geo {

    using Point = std::array<double, 3>;
    using PointSet = std::vector<Point>;

    class MetricError : public std::invalid_argument {
    public:
        using std::invalid_argument::invalid_argument;
    };

    /// Binary occupancy over the unit cube; cell (x, y, z) is centred at
    /// ((x + 0.5) / R, (y + 0.5) / R, (z + 0.5) / R).
    struct VoxelOccupancy {
        int resolution = 0;
        std::vector<std::uint8_t> cells; // index (x * R + y) * R + z

        static VoxelOccupancy empty(int resolution);
        std::size_t index(int x, int y, int z) const {
            return (static_cast<std::size_t>(x) * resolution + y) * resolution + z;
        }
        bool at(int x, int y, int z) const { return cells[index(x, y, z)] != 0; }
        std::size_t count() const;
    };

    struct VoxelizeConfig {
        int resolution = 64;
        double opacity_floor = 0.005; // primitives below this opacity are ignored
        double max_mahalanobis = 3.0;
    };

    /// Cells whose centre lies within `max_mahalanobis` of some primitive with
    /// opacity >= `opacity_floor`. Positions are in the grid's unit cube.
    VoxelOccupancy voxelize(const gridfit::SparseGaussianGrid& grid, const VoxelizeConfig& cfg = {});

    struct Mesh {
        std::vector<Point> vertices;
        std::vector<std::array<std::int32_t, 3>> faces; // counter-clockwise seen from outside

        bool empty() const { return faces.empty(); }
    };

    /// Iso-surface at 0.5 of the binary field sampled at cell centres, with the
    /// outside of the grid treated as empty; vertices sit at edge midpoints and
    /// are shared between adjacent cubes.
    Mesh marching_cubes(const VoxelOccupancy& occ);

    double mesh_area(const Mesh& m);
    /// Signed volume by the divergence theorem; positive for outward faces.
    double mesh_volume(const Mesh& m);

    /// `count` points uniform over the surface area.
    PointSet sample_surface(const Mesh& m, std::size_t count, std::uint64_t seed);

    void write_obj(const std::filesystem::path& path, const Mesh& m);

} // namespace l3dg::geo
