#include "l3dg/geomeval/geometry.hpp"

#include "mc_tables.hpp"

#include "l3dg/numcore/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

namespace l3dg::geo {

    VoxelOccupancy VoxelOccupancy::empty(int resolution) {
        if (resolution < 1)
            throw std::invalid_argument("voxel occupancy needs a positive resolution");
        VoxelOccupancy o;
        o.resolution = resolution;
        o.cells.assign(static_cast<std::size_t>(resolution) * resolution * resolution, 0);
        return o;
    }

    std::size_t VoxelOccupancy::count() const {
        return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
    }

    namespace {
        using M3 = std::array<std::array<double, 3>, 3>;

        M3 rotation(const std::array<double, 4>& q) {
            const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
            const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
            return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
                     {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
                     {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
        }

        Point sub(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
        Point cross(const Point& a, const Point& b) {
            return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
        }
        double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

        // Cube corners and edges in table order.
        constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1},
                                       {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
        constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                      {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
    } // namespace

    VoxelOccupancy voxelize(const gridfit::SparseGaussianGrid& grid, const VoxelizeConfig& cfg) {
        auto occ = VoxelOccupancy::empty(cfg.resolution);
        const int r = cfg.resolution;
        const double limit = cfg.max_mahalanobis * cfg.max_mahalanobis;
        for (const auto& [v, g] : grid.cells) {
            if (g.opacity() < cfg.opacity_floor)
                continue;
            const auto mu = grid.center(v, g);
            const auto rot = rotation(g.rotation);
            std::array<double, 3> inv{}, s{};
            for (int k = 0; k < 3; ++k) {
                s[k] = std::exp(g.log_scale[k]);
                inv[k] = 1.0 / (s[k] * s[k]);
            }
            const double reach = cfg.max_mahalanobis * std::max({s[0], s[1], s[2]});
            std::array<int, 3> lo{}, hi{};
            for (int k = 0; k < 3; ++k) {
                lo[k] = std::max(0, static_cast<int>(std::floor((mu[k] - reach) * r - 0.5)));
                hi[k] = std::min(r - 1, static_cast<int>(std::ceil((mu[k] + reach) * r - 0.5)));
            }
            for (int x = lo[0]; x <= hi[0]; ++x)
                for (int y = lo[1]; y <= hi[1]; ++y)
                    for (int z = lo[2]; z <= hi[2]; ++z) {
                        const Point d{(x + 0.5) / r - mu[0], (y + 0.5) / r - mu[1], (z + 0.5) / r - mu[2]};
                        double m = 0;
                        for (int k = 0; k < 3; ++k) {
                            // Component along the k-th principal axis (column k of R).
                            const double a = rot[0][k] * d[0] + rot[1][k] * d[1] + rot[2][k] * d[2];
                            m += a * a * inv[k];
                        }
                        if (m <= limit)
                            occ.cells[occ.index(x, y, z)] = 1;
                    }
        }
        return occ;
    }

    Mesh marching_cubes(const VoxelOccupancy& occ) {
        Mesh mesh;
        const int r = occ.resolution;
        auto value = [&](int x, int y, int z) {
            return x >= 0 && y >= 0 && z >= 0 && x < r && y < r && z < r && occ.at(x, y, z);
        };
        // Edge vertices keyed by (lower lattice point, axis); lattice spans [-1, r].
        const std::int64_t span = r + 2;
        std::unordered_map<std::int64_t, std::int32_t> ids;
        auto vertex = [&](const int* a, const int* b) {
            const int* lo = std::lexicographical_compare(a, a + 3, b, b + 3) ? a : b;
            const int axis = a[0] != b[0] ? 0 : a[1] != b[1] ? 1 : 2;
            const std::int64_t key = (((lo[0] + 1) * span + (lo[1] + 1)) * span + (lo[2] + 1)) * 3 + axis;
            const auto [it, fresh] = ids.try_emplace(key, static_cast<std::int32_t>(mesh.vertices.size()));
            if (fresh)
                mesh.vertices.push_back({(a[0] + b[0] + 1.0) / (2.0 * r), (a[1] + b[1] + 1.0) / (2.0 * r),
                                         (a[2] + b[2] + 1.0) / (2.0 * r)});
            return it->second;
        };
        for (int x = -1; x < r; ++x)
            for (int y = -1; y < r; ++y)
                for (int z = -1; z < r; ++z) {
                    int corner[8][3];
                    int index = 0;
                    for (int c = 0; c < 8; ++c) {
                        corner[c][0] = x + kCorner[c][0];
                        corner[c][1] = y + kCorner[c][1];
                        corner[c][2] = z + kCorner[c][2];
                        if (!value(corner[c][0], corner[c][1], corner[c][2]))
                            index |= 1 << c;
                    }
                    if (index == 0 || index == 255)
                        continue;
                    const auto& row = detail::kTriTable[index];
                    for (int t = 0; row[t] != -1; t += 3) {
                        std::array<std::int32_t, 3> f;
                        for (int k = 0; k < 3; ++k) {
                            const auto& e = kEdge[row[t + k]];
                            f[k] = vertex(corner[e[0]], corner[e[1]]);
                        }
                        // Table winding faces the low side (occupied here); reverse it.
                        std::swap(f[1], f[2]);
                        const auto n = cross(sub(mesh.vertices[f[1]], mesh.vertices[f[0]]),
                                             sub(mesh.vertices[f[2]], mesh.vertices[f[0]]));
                        if (dot(n, n) > 0)
                            mesh.faces.push_back(f);
                    }
                }
        return mesh;
    }

    double mesh_area(const Mesh& m) {
        double a = 0;
        for (const auto& f : m.faces) {
            const auto n = cross(sub(m.vertices[f[1]], m.vertices[f[0]]), sub(m.vertices[f[2]], m.vertices[f[0]]));
            a += 0.5 * std::sqrt(dot(n, n));
        }
        return a;
    }

    double mesh_volume(const Mesh& m) {
        double v = 0;
        for (const auto& f : m.faces)
            v += dot(m.vertices[f[0]], cross(m.vertices[f[1]], m.vertices[f[2]])) / 6.0;
        return v;
    }

    PointSet sample_surface(const Mesh& m, std::size_t count, std::uint64_t seed) {
        if (m.empty())
            throw MetricError("cannot sample the surface of an empty mesh");
        std::vector<double> cdf(m.faces.size());
        for (std::size_t i = 0; i < m.faces.size(); ++i) {
            const auto& f = m.faces[i];
            const auto n = cross(sub(m.vertices[f[1]], m.vertices[f[0]]), sub(m.vertices[f[2]], m.vertices[f[0]]));
            cdf[i] = std::sqrt(dot(n, n)) + (i ? cdf[i - 1] : 0.0);
        }
        nc::Rng rng(seed);
        PointSet out;
        out.reserve(count);
        for (std::size_t s = 0; s < count; ++s) {
            const double u = rng.uniform(0, cdf.back());
            const auto i = std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(),
                                                 cdf.size() - 1);
            const auto& f = m.faces[i];
            double a = rng.uniform(), b = rng.uniform();
            if (a + b > 1) {
                a = 1 - a;
                b = 1 - b;
            }
            Point p;
            for (int k = 0; k < 3; ++k)
                p[k] = m.vertices[f[0]][k] + a * (m.vertices[f[1]][k] - m.vertices[f[0]][k]) +
                       b * (m.vertices[f[2]][k] - m.vertices[f[0]][k]);
            out.push_back(p);
        }
        return out;
    }

    void write_obj(const std::filesystem::path& path, const Mesh& m) {
        std::ofstream out(path);
        if (!out)
            throw std::runtime_error("cannot write " + path.string());
        out.precision(9);
        for (const auto& v : m.vertices)
            out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
        for (const auto& f : m.faces)
            out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }

} // namespace l3dg::geo
