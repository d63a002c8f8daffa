#include "l3dg/geomeval/metrics.hpp"

#include "l3dg/numcore/random.hpp"

#include <Eigen/Dense>
#include <limits>
#include <set>

namespace l3dg::geo {

    using Json = nlohmann::json;

    namespace {
        double directed(const PointSet& from, const PointSet& to) {
            double total = 0;
#pragma omp parallel for reduction(+ : total) schedule(static)
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(from.size()); ++i) {
                double best = std::numeric_limits<double>::infinity();
                const auto& p = from[i];
                for (const auto& q : to) {
                    const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
                    best = std::min(best, dx * dx + dy * dy + dz * dz);
                }
                total += best;
            }
            return total / static_cast<double>(from.size());
        }

        Eigen::MatrixXd as_matrix(const std::vector<std::vector<double>>& rows) {
            if (rows.empty())
                throw MetricError("feature set is empty");
            Eigen::MatrixXd m(rows.size(), rows.front().size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != rows.front().size())
                    throw MetricError("feature vectors differ in length");
                for (std::size_t j = 0; j < rows[i].size(); ++j)
                    m(i, j) = rows[i][j];
            }
            return m;
        }

        Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
            return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                   es.eigenvectors().transpose();
        }
    } // namespace

    double chamfer(const PointSet& x, const PointSet& y) {
        if (x.empty() || y.empty())
            throw MetricError("chamfer distance needs two nonempty point sets");
        return directed(x, y) + directed(y, x);
    }

    CovMmd cov_mmd_from_matrix(std::vector<std::vector<double>> cd) {
        if (cd.empty() || cd.front().empty())
            throw MetricError("coverage needs nonempty generated and reference lists");
        CovMmd r;
        const auto refs = cd.front().size();
        std::set<std::int64_t> matched;
        for (const auto& row : cd) {
            if (row.size() != refs)
                throw MetricError("distance matrix rows differ in length");
            const auto best = std::min_element(row.begin(), row.end()) - row.begin();
            r.nearest.push_back(best);
            matched.insert(best);
        }
        r.cov = static_cast<double>(matched.size()) / static_cast<double>(refs);
        for (std::size_t j = 0; j < refs; ++j) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& row : cd)
                best = std::min(best, row[j]);
            r.mmd += best;
        }
        r.mmd /= static_cast<double>(refs);
        r.cd = std::move(cd);
        return r;
    }

    CovMmd cov_mmd(const std::vector<PointSet>& generated, const std::vector<PointSet>& reference) {
        if (generated.empty() || reference.empty())
            throw MetricError("coverage needs nonempty generated and reference lists");
        std::vector<std::vector<double>> cd(generated.size(), std::vector<double>(reference.size()));
        for (std::size_t i = 0; i < generated.size(); ++i)
            for (std::size_t j = 0; j < reference.size(); ++j)
                cd[i][j] = chamfer(generated[i], reference[j]);
        return cov_mmd_from_matrix(std::move(cd));
    }

    double frechet_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
        const auto x = as_matrix(a), y = as_matrix(b);
        if (x.cols() != y.cols())
            throw MetricError("feature sets differ in dimension");
        if (x.rows() < 2 || y.rows() < 2)
            throw MetricError("frechet distance needs at least two samples per set");
        const Eigen::RowVectorXd mx = x.colwise().mean(), my = y.colwise().mean();
        const Eigen::MatrixXd cx = (x.rowwise() - mx).transpose() * (x.rowwise() - mx) / double(x.rows() - 1);
        const Eigen::MatrixXd cy = (y.rowwise() - my).transpose() * (y.rowwise() - my) / double(y.rows() - 1);
        // tr sqrt(cx cy) = tr sqrt(sqrt(cx) cy sqrt(cx)), the inner product being symmetric PSD.
        const Eigen::MatrixXd s = sqrt_psd(cx);
        const Eigen::MatrixXd inner = s * cy * s;
        const double cross = sqrt_psd(0.5 * (inner + inner.transpose())).trace();
        return (mx - my).squaredNorm() + cx.trace() + cy.trace() - 2 * cross;
    }

    double kernel_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
        const auto x = as_matrix(a), y = as_matrix(b);
        if (x.cols() != y.cols())
            throw MetricError("feature sets differ in dimension");
        if (x.rows() < 2 || y.rows() < 2)
            throw MetricError("kernel distance needs at least two samples per set");
        const double d = static_cast<double>(x.cols());
        auto k = [d](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
            return ((p * q.transpose()).array() / d + 1.0).cube().matrix();
        };
        const Eigen::MatrixXd kxx = k(x, x), kyy = k(y, y), kxy = k(x, y);
        const double m = static_cast<double>(x.rows()), n = static_cast<double>(y.rows());
        return (kxx.sum() - kxx.trace()) / (m * (m - 1)) + (kyy.sum() - kyy.trace()) / (n * (n - 1)) -
               2 * kxy.sum() / (m * n);
    }

    Json eval_config_to_json(const EvalConfig& c) {
        return {{"resolution", c.voxel.resolution},
                {"opacity_floor", c.voxel.opacity_floor},
                {"max_mahalanobis", c.voxel.max_mahalanobis},
                {"surface_points", c.surface_points},
                {"chamfer", "squared"},
                {"seed", c.seed}};
    }

    EvalConfig eval_config_from_json(const Json& j) {
        static const std::set<std::string> keys{"resolution", "opacity_floor", "max_mahalanobis",
                                                "surface_points", "chamfer", "seed"};
        if (!j.is_object())
            throw std::invalid_argument("eval config: expected a JSON object");
        for (const auto& [k, v] : j.items())
            if (!keys.count(k))
                throw std::invalid_argument("eval config: unknown key '" + k + "'");
        if (j.value("chamfer", "squared") != "squared")
            throw std::invalid_argument("eval config: only the squared chamfer convention is implemented");
        EvalConfig c;
        c.voxel.resolution = j.value("resolution", c.voxel.resolution);
        c.voxel.opacity_floor = j.value("opacity_floor", c.voxel.opacity_floor);
        c.voxel.max_mahalanobis = j.value("max_mahalanobis", c.voxel.max_mahalanobis);
        c.surface_points = j.value("surface_points", c.surface_points);
        c.seed = j.value("seed", c.seed);
        if (c.voxel.resolution < 1 || c.surface_points < 1 || !(c.voxel.max_mahalanobis > 0))
            throw std::invalid_argument("eval config: resolution, surface_points and max_mahalanobis must be positive");
        return c;
    }

    PointSet scene_points(const gridfit::SparseGaussianGrid& grid, const EvalConfig& cfg, std::uint64_t stream) {
        const auto mesh = marching_cubes(voxelize(grid, cfg.voxel));
        if (mesh.empty())
            return {};
        return sample_surface(mesh, cfg.surface_points, nc::derive_seed(cfg.seed, "surface." + std::to_string(stream)));
    }

    Json report(const CovMmd& r, const EvalConfig& cfg, std::optional<double> fid, std::optional<double> kid) {
        Json j{{"cov", r.cov}, {"mmd", r.mmd}, {"per_pair_cd", r.cd}, {"nearest", r.nearest},
               {"config", eval_config_to_json(cfg)}};
        if (fid)
            j["fid"] = *fid;
        if (kid)
            j["kid"] = *kid;
        return j;
    }

} // namespace l3dg::geo
