#pragma once

#include "l3dg/geomeval/geometry.hpp"

#include <json.hpp>
#include <optional>
#include <vector>

namespace l3dg::geo {

    /// mean_x min_y |x - y|^2 + mean_y min_x |x - y|^2.
    double chamfer(const PointSet& x, const PointSet& y);

    struct CovMmd {
        double cov = 0;
        double mmd = 0;
        std::vector<std::vector<double>> cd; // [generated][reference]
        std::vector<std::int64_t> nearest;   // reference matched by each generated set
    };

    /// COV: fraction of reference sets that are the nearest (lowest index on
    /// ties) of some generated set. MMD: mean over references of the smallest
    /// distance to any generated set.
    CovMmd cov_mmd(const std::vector<PointSet>& generated, const std::vector<PointSet>& reference);
    /// Same from a precomputed [generated][reference] distance matrix.
    CovMmd cov_mmd_from_matrix(std::vector<std::vector<double>> cd);

    /// Distribution metrics over image features from a caller-supplied
    /// extractor; no extractor ships by default.
    /// Frechet distance between Gaussian fits of two feature sets [n, d].
    double frechet_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);
    /// Unbiased squared MMD with the cubic polynomial kernel (x.y / d + 1)^3.
    double kernel_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);

    struct EvalConfig {
        VoxelizeConfig voxel;
        std::size_t surface_points = 2048;
        std::uint64_t seed = 0;
    };

    nlohmann::json eval_config_to_json(const EvalConfig& c);
    EvalConfig eval_config_from_json(const nlohmann::json& j);

    /// Voxelize, mesh and sample one scene.
    PointSet scene_points(const gridfit::SparseGaussianGrid& grid, const EvalConfig& cfg, std::uint64_t stream);

    /// {cov, mmd, per_pair_cd, config}; distribution metrics appear when given.
    nlohmann::json report(const CovMmd& r, const EvalConfig& cfg, std::optional<double> fid = std::nullopt,
                          std::optional<double> kid = std::nullopt);

} // namespace l3dg::geo
