#include "doctest.h"

#include "l3dg/cli/synthetic.hpp"
#include "l3dg/gridfit/fit.hpp"
#include "l3dg/gridfit/io.hpp"

#include <filesystem>
#include <set>

using namespace l3dg;
using gridfit::Voxel;

namespace {

    gridfit::SparseGaussianGrid one_primitive(int res, Voxel v, std::array<double, 3> delta) {
        auto g = gridfit::SparseGaussianGrid::empty(res);
        splat::GaussianPrimitive p;
        p.delta = delta;
        p.opacity_logit = 2.0;
        g.cells[v] = p;
        return g;
    }

} // namespace

TEST_CASE("displacement reparametrisation") {
    const double d = 0.008;
    const auto zero = gridfit::psi({0, 0, 0}, d);
    CHECK(zero == std::array<double, 3>{0, 0, 0});
    const auto far = gridfit::psi({50, -50, 3}, d);
    CHECK(far[0] == doctest::Approx(0.012).epsilon(1e-12));
    CHECK(far[1] == doctest::Approx(-0.012).epsilon(1e-12));
    nc::Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const std::array<double, 3> x{rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-8, 8)};
        const auto a = gridfit::psi(x, d);
        const auto b = gridfit::psi({-x[0], -x[1], -x[2]}, d);
        for (int k = 0; k < 3; ++k) {
            CHECK(a[k] == -b[k]);
            CHECK(std::abs(a[k]) <= 1.5 * d);
        }
    }
}

TEST_CASE("points are assigned to unique voxels") {
    SUBCASE("point at a voxel centre") {
        auto g = gridfit::assign_to_grid({{5.5 / 16, 9.5 / 16, 1.5 / 16}}, {{1, 0, 0}}, 16);
        REQUIRE(g.size() == 1);
        const auto& [v, p] = *g.cells.begin();
        CHECK(v == Voxel{5, 9, 1});
        for (double x : p.delta)
            CHECK(std::abs(x) < 1e-12);
        CHECK(splat::kShC0 * p.sh[0] + 0.5 == doctest::Approx(1.0));
    }
    SUBCASE("two points in one voxel average") {
        auto g = gridfit::assign_to_grid({{0.51, 0.51, 0.51}, {0.55, 0.55, 0.55}}, {{1, 0, 0}, {0, 0, 1}}, 8);
        REQUIRE(g.size() == 1);
        const auto& [v, p] = *g.cells.begin();
        const auto mu = g.center(v, p);
        CHECK(mu[0] == doctest::Approx(0.53).epsilon(1e-9));
        CHECK(splat::kShC0 * p.sh[0] + 0.5 == doctest::Approx(0.5));
        CHECK(splat::kShC0 * p.sh[2] + 0.5 == doctest::Approx(0.5));
    }
    SUBCASE("occupied voxel count equals distinct quantised cells") {
        nc::Rng rng(7);
        std::vector<std::array<double, 3>> pts;
        std::set<std::array<int, 3>> cells;
        for (int i = 0; i < 100; ++i) {
            pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
            cells.insert({static_cast<int>(pts.back()[0] * 6), static_cast<int>(pts.back()[1] * 6),
                          static_cast<int>(pts.back()[2] * 6)});
        }
        CHECK(gridfit::assign_to_grid(pts, {}, 6).size() == cells.size());
    }
    CHECK_THROWS_AS(gridfit::assign_to_grid({}, {}, 8), gridfit::GridError);
}

TEST_CASE("densification spawns into drifted-into inactive voxels") {
    const int res = 16;
    const double d = 1.0 / res;
    // delta = 2 moves the centre by 1.5 tanh(2) d ~ 1.45 d, into the +x neighbour.
    auto grid = one_primitive(res, {4, 4, 4}, {2.0, 0, 0});
    grid.cells.at({4, 4, 4}).sh[0] = 0.7;

    SUBCASE("gradient below threshold leaves the grid unchanged") {
        auto out = gridfit::densify_step(grid, {{{4, 4, 4}, 0.0005}});
        CHECK(out.size() == 1);
    }
    SUBCASE("drift with a large gradient creates one primitive") {
        auto out = gridfit::densify_step(grid, {{{4, 4, 4}, 0.01}});
        REQUIRE(out.size() == 2);
        REQUIRE(out.cells.contains({5, 4, 4}));
        const auto& p = out.cells.at({5, 4, 4});
        CHECK(p.delta == std::array<double, 3>{0, 0, 0});
        for (double s : p.log_scale)
            CHECK(std::exp(s) == doctest::Approx(d));
        CHECK(p.rotation == std::array<double, 4>{1, 0, 0, 0});
        CHECK(p.opacity() == doctest::Approx(0.1));
        CHECK(p.sh[0] == 0.7);
        // The original primitive is bit-identical.
        CHECK(out.cells.at({4, 4, 4}).pack() == grid.cells.at({4, 4, 4}).pack());
    }
    SUBCASE("competitors for one voxel share averaged appearance") {
        grid.cells[{6, 4, 4}] = grid.cells.at({4, 4, 4});
        grid.cells.at({6, 4, 4}).delta = {-2.0, 0, 0};
        grid.cells.at({6, 4, 4}).sh[0] = 0.1;
        grid.cells.at({6, 4, 4}).sh[5] = 0.4;
        auto out = gridfit::densify_step(grid, {{{4, 4, 4}, 0.01}, {{6, 4, 4}, 0.01}});
        REQUIRE(out.size() == 3);
        const auto& p = out.cells.at({5, 4, 4});
        CHECK(p.sh[0] == doctest::Approx(0.4));
        CHECK(p.sh[5] == doctest::Approx(0.2));
    }
    SUBCASE("occupied or out-of-grid targets are skipped") {
        grid.cells[{5, 4, 4}] = splat::GaussianPrimitive{};
        CHECK(gridfit::densify_step(grid, {{{4, 4, 4}, 0.01}}).size() == 2);
        auto edge = one_primitive(res, {15, 4, 4}, {2.0, 0, 0});
        CHECK(gridfit::densify_step(edge, {{{15, 4, 4}, 0.01}}).size() == 1);
    }
}

TEST_CASE("pruning removes transparent primitives") {
    auto grid = one_primitive(8, {1, 1, 1}, {0, 0, 0});
    grid.cells[{2, 2, 2}].opacity_logit = std::log(0.001 / 0.999);
    grid.cells[{3, 3, 3}].opacity_logit = std::log(0.006 / 0.994);
    auto once = gridfit::prune_step(grid, 0.005);
    CHECK(once.size() == 2);
    CHECK_FALSE(once.cells.contains({2, 2, 2}));
    auto twice = gridfit::prune_step(once, 0.005);
    CHECK(twice.size() == once.size());
    CHECK(gridfit::prune_step(twice, 0.0001).size() == 2);
}

TEST_CASE("grid and point cloud files round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "l3dg_grid_io";
    std::filesystem::create_directories(dir);
    nc::Rng rng(2);
    std::vector<std::array<double, 3>> pts;
    for (int i = 0; i < 50; ++i)
        pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    auto grid = gridfit::assign_to_grid(pts, {}, 10, gridfit::Normalization{2.0, {0.1, 0.2, 0.3}});
    grid.cells.begin()->second.rotation = {0.3, -0.2, 0.1, 0.9};
    gridfit::save_grid(dir / "g.ply", grid);
    auto back = gridfit::load_grid(dir / "g.ply");
    CHECK(back.resolution == 10);
    CHECK(back.voxel_size == grid.voxel_size);
    CHECK(back.normalization.scale == 2.0);
    CHECK(back.normalization.offset == grid.normalization.offset);
    REQUIRE(back.size() == grid.size());
    for (const auto& [v, p] : grid.cells)
        CHECK(back.cells.at(v).pack() == p.pack());

    gridfit::PointCloud cloud{{{0.1, 0.2, 0.3}, {-1, 2, 5}}, {{1, 0, 0.5}, {0, 1, 0}}};
    gridfit::save_point_cloud(dir / "p.ply", cloud);
    auto pc = gridfit::load_point_cloud(dir / "p.ply");
    REQUIRE(pc.points.size() == 2);
    CHECK(pc.points[1][2] == doctest::Approx(5.0));
    CHECK(pc.colors[0][2] == doctest::Approx(128.0 / 255.0));
    std::filesystem::remove_all(dir);
}

TEST_CASE("a scene rendered from itself is a fixed point of fitting") {
    auto grid = one_primitive(8, {4, 4, 4}, {0.1, -0.2, 0.0});
    auto& p = grid.cells.at({4, 4, 4});
    p.log_scale = {std::log(0.1), std::log(0.1), std::log(0.1)};
    for (int ch = 0; ch < 3; ++ch)
        p.sh[ch] = splat::sh_dc_for_color(1.0);
    p.opacity_logit = 3.0;
    std::vector<gridfit::TrainingView> views;
    for (const auto& cam : cli::orbit_cameras(4, 24, 2.5))
        views.push_back({cam, gridfit::render_grid(grid, cam, {{0, 0, 0}})});
    gridfit::FitConfig cfg;
    cfg.iterations = 40;
    cfg.background = {0, 0, 0};
    auto r = gridfit::fit<float>(grid, views, cfg);
    INFO("first losses " << r.losses[0] << " " << r.losses[1]);
    CHECK(r.losses.back() < 1e-6);
    REQUIRE(r.grid.size() == 1);
    const auto before = grid.cells.at({4, 4, 4}).pack(), after = r.grid.cells.at({4, 4, 4}).pack();
    for (int k = 0; k < splat::field::count; ++k)
        CHECK(std::abs(after[k] - before[k]) < 1e-6);
}

TEST_CASE("centres stay inside their voxel neighbourhood during fitting") {
    auto scene = cli::three_sphere_scene();
    std::vector<gridfit::TrainingView> views;
    for (const auto& cam : cli::orbit_cameras(4, 24))
        views.push_back({cam, cli::ray_trace(scene, cam, 1)});
    nc::Rng rng(5);
    auto cloud = cli::surface_points(scene, 2000, rng);
    auto norm = gridfit::fit_normalization(cloud.points, 0.05);
    for (auto& x : cloud.points)
        x = norm.apply(x);
    auto grid = gridfit::assign_to_grid(cloud.points, cloud.colors, 16, norm);
    gridfit::FitConfig cfg;
    cfg.iterations = 200;
    cfg.densify.interval = 20;
    cfg.lr.delta = 0.1;
    auto r = gridfit::fit<float>(grid, views, cfg);
    for (const auto& [v, g] : r.grid.cells) {
        CHECK(r.grid.in_bounds(v));
        const auto c = r.grid.voxel_center(v), mu = r.grid.center(v, g);
        for (int k = 0; k < 3; ++k)
            CHECK(std::abs(mu[k] - c[k]) <= 1.5 * r.grid.voxel_size);
    }
    CHECK(r.losses.back() < r.losses.front());
}

TEST_CASE("disabling densification leaves at least as many pixels uncovered") {
    auto scene = cli::three_sphere_scene();
    std::vector<gridfit::TrainingView> views;
    for (const auto& cam : cli::orbit_cameras(8, 32))
        views.push_back({cam, cli::ray_trace(scene, cam, 1)});
    nc::Rng rng(9);
    auto cloud = cli::surface_points(scene, 150, rng);
    auto norm = gridfit::fit_normalization(cloud.points, 0.05);
    for (auto& x : cloud.points)
        x = norm.apply(x);
    auto grid = gridfit::assign_to_grid(cloud.points, cloud.colors, 24, norm);
    gridfit::FitConfig cfg;
    cfg.iterations = 600;
    cfg.densify.interval = 50;
    cfg.lr.delta = 0.05;
    cfg.seed = 4;
    auto with = gridfit::fit<float>(grid, views, cfg);
    cfg.densify_enabled = false;
    auto without = gridfit::fit<float>(grid, views, cfg);
    const auto a = gridfit::uncovered_pixels(with.grid, views), b = gridfit::uncovered_pixels(without.grid, views);
    INFO("uncovered with densify " << a << ", without " << b << "; primitives " << with.grid.size() << " vs "
                                   << without.grid.size());
    CHECK(b >= a);
}
