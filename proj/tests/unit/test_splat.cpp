#include "doctest.h"
#include "gradcheck.hpp"
#include "splat_fixtures.hpp"

#include "l3dg/numcore/ops.hpp"
#include "l3dg/splat/image.hpp"
#include "l3dg/splat/loss.hpp"
#include "l3dg/splat/render.hpp"

#include <json.hpp>

#include <filesystem>

using namespace l3dg;
using nc::Tensor;
using nc::Var;
using splat::field::count;

namespace {

    splat::Camera axis_camera(int w = 16, int h = 16, double f = 20) {
        splat::Camera cam;
        cam.width = w;
        cam.height = h;
        cam.fx = cam.fy = f;
        cam.cx = 0.5 * w;
        cam.cy = 0.5 * h;
        return cam;
    }

    // One primitive per entry of `centres`, isotropic scale, constant colour.
    splat::SplatScene<double> flat_scene(const std::vector<std::array<double, 3>>& centres,
                                         const std::vector<std::array<double, 3>>& colors,
                                         const std::vector<double>& opacity_logits, double scale) {
        const auto n = static_cast<std::int64_t>(centres.size());
        splat::SplatScene<double> s;
        s.max_offset = 0.0;
        s.anchors = Tensor<double>({n, 3});
        Tensor<double> params({n, count});
        for (std::int64_t i = 0; i < n; ++i) {
            splat::GaussianPrimitive g;
            g.log_scale = {std::log(scale), std::log(scale), std::log(scale)};
            for (int ch = 0; ch < 3; ++ch)
                g.sh[ch] = splat::sh_dc_for_color(colors[i][ch]);
            g.opacity_logit = opacity_logits[i];
            const auto row = g.pack();
            std::copy(row.begin(), row.end(), params.ptr() + i * count);
            for (int k = 0; k < 3; ++k)
                s.anchors[i * 3 + k] = centres[i][k];
        }
        s.params = Var<double>::parameter(std::move(params));
        return s;
    }

    double logit(double p) { return std::log(p / (1 - p)); }

} // namespace

TEST_CASE("isotropic Gaussian on the optical axis projects to (f sigma / z)^2 I") {
    const auto cam = axis_camera(16, 16, 30);
    const double sigma = 0.2, z = 3.0;
    auto p = splat::project_gaussian({0, 0, z}, {{{sigma * sigma, 0, 0}, {0, sigma * sigma, 0}, {0, 0, sigma * sigma}}},
                                     cam);
    REQUIRE(p.has_value());
    const double expect = std::pow(30 * sigma / z, 2);
    CHECK(p->cov[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(p->cov[2] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(p->cov[1]) < 1e-12);
    CHECK(p->mean[0] == doctest::Approx(8.0));
    CHECK(p->depth == doctest::Approx(z));
}

TEST_CASE("projection culls points behind the camera and scales with focal length") {
    const auto cam = axis_camera();
    std::array<std::array<double, 3>, 3> id{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    CHECK_FALSE(splat::project_gaussian({0, 0, -1}, id, cam).has_value());
    auto cam2 = cam;
    cam2.fx *= 2;
    cam2.fy *= 2;
    auto a = splat::project_gaussian({0.3, -0.2, 2}, id, cam);
    auto b = splat::project_gaussian({0.3, -0.2, 2}, id, cam2);
    CHECK(b->mean[0] - cam.cx == doctest::Approx(2 * (a->mean[0] - cam.cx)));
    CHECK(b->mean[1] - cam.cy == doctest::Approx(2 * (a->mean[1] - cam.cy)));
}

TEST_CASE("kernel evaluation") {
    CHECK(*splat::eval_kernel({3, 4}, {3, 4}, {2, 0.5, 1}) == 1.0);
    CHECK(*splat::eval_kernel({1, 1}, {0, 0}, {1, 0, 1}) == doctest::Approx(std::exp(-1.0)));
    CHECK(*splat::eval_kernel({2, 0}, {0, 0}, {4, 0, 1}) == doctest::Approx(std::exp(-0.5)));
    CHECK_FALSE(splat::eval_kernel({0, 0}, {0, 0}, {1, 1, 1}).has_value());
}

TEST_CASE("spherical harmonic colour") {
    std::array<double, 12> sh{};
    sh[0] = 0.4;
    sh[1] = -0.2;
    sh[2] = 1.0;
    const auto a = splat::sh_color(sh, {1, 0, 0});
    const auto b = splat::sh_color(sh, {0, 0.6, 0.8});
    for (int ch = 0; ch < 3; ++ch)
        CHECK(a[ch] == doctest::Approx(b[ch]));

    // Degree-1 part flips sign with the direction.
    std::array<double, 12> odd{};
    odd[3] = 0.3;  // -y basis, red
    odd[7] = -0.2; // z basis, green
    odd[11] = 0.1; // -x basis, blue
    const std::array<double, 3> d{0.48, 0.6, 0.64};
    const auto p = splat::sh_color(odd, d);
    const auto m = splat::sh_color(odd, {-d[0], -d[1], -d[2]});
    for (int ch = 0; ch < 3; ++ch)
        CHECK(p[ch] - 0.5 == doctest::Approx(-(m[ch] - 0.5)));
    CHECK(p[0] == doctest::Approx(0.5 - splat::kShC1 * 0.6 * 0.3));
    CHECK(p[1] == doctest::Approx(0.5 + splat::kShC1 * 0.64 * -0.2));
    CHECK(p[2] == doctest::Approx(0.5 - splat::kShC1 * 0.48 * 0.1));

    std::array<double, 12> dark{};
    dark[0] = -5;
    CHECK(splat::sh_color(dark, {0, 0, 1})[0] == 0.0);
    CHECK_THROWS(splat::sh_color(dark, {0, 0, 2}));
}

TEST_CASE("empty scene renders the background") {
    splat::SplatScene<double> empty;
    splat::RenderSettings st;
    st.background = {0.2, 0.4, 0.6};
    auto r = splat::render(empty, axis_camera(5, 3), st);
    REQUIRE(r.image.shape() == nc::Shape{3, 5, 3});
    for (std::int64_t i = 0; i < r.image.numel(); ++i)
        CHECK(r.image.value()[i] == st.background[i % 3]);
}

TEST_CASE("opaque Gaussian centred on a pixel shows its own colour") {
    // Pixel (8, 8) has its centre at (8.5, 8.5); put the primitive there.
    auto cam = axis_camera();
    cam.cx = 8.5;
    cam.cy = 8.5;
    auto s = flat_scene({{0, 0, 2}}, {{0.9, 0.3, 0.1}}, {40.0}, 0.1);
    auto r = splat::render(s, cam);
    const auto& img = r.image.value();
    const std::int64_t pix = 8 * 16 + 8;
    CHECK(img[pix * 3 + 0] == doctest::Approx(0.9).epsilon(1e-9));
    CHECK(img[pix * 3 + 1] == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(img[pix * 3 + 2] == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("two overlapping Gaussians match the hand-evaluated blend") {
    auto cam = axis_camera();
    const std::array<double, 3> c1{0.9, 0.1, 0.2}, c2{0.1, 0.8, 0.3};
    const double a1 = 0.6, a2 = 0.7, scale = 0.15;
    auto s = flat_scene({{0.02, 0, 2}, {-0.03, 0.01, 3}}, {c1, c2}, {logit(a1), logit(a2)}, scale);
    splat::RenderSettings st;
    st.background = {0.5, 0.5, 0.5};
    auto r = splat::render(s, cam, st);

    const int px = 8, py = 8;
    auto kernel = [&](std::array<double, 3> mu) {
        const double v = scale * scale;
        auto p = *splat::project_gaussian(mu, {{{v, 0, 0}, {0, v, 0}, {0, 0, v}}}, cam);
        p.cov[0] += 0.3;
        p.cov[2] += 0.3;
        return *splat::eval_kernel({px + 0.5, py + 0.5}, p.mean, p.cov);
    };
    const double w1 = a1 * kernel({0.02, 0, 2}), w2 = a2 * kernel({-0.03, 0.01, 3});
    for (int ch = 0; ch < 3; ++ch) {
        const double expect = c1[ch] * w1 + c2[ch] * w2 * (1 - w1) + 0.5 * (1 - w1) * (1 - w2);
        CHECK(r.image.value()[(py * 16 + px) * 3 + ch] == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(r.accumulated_alpha[py * 16 + px] == doctest::Approx(1 - (1 - w1) * (1 - w2)));
}

TEST_CASE("blending weights and residual transmittance sum to one") {
    nc::Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        auto s = testing::random_scene<double>(rng, 5);
        auto blends = splat::blend_weights(s, testing::small_camera(rng, 12));
        for (const auto& b : blends) {
            double total = b.residual;
            for (double w : b.weights)
                total += w;
            CHECK(std::abs(total - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("raising one opacity pulls pixels toward that primitive's colour") {
    auto cam = axis_camera();
    auto s = flat_scene({{0.0, 0, 2}, {0.05, 0, 3}}, {{1, 0, 0}, {0, 0, 1}}, {logit(0.3), logit(0.5)}, 0.2);
    auto before = splat::render(s, cam).image.value();
    s.params.value_mut()[splat::field::opacity] = logit(0.6);
    auto after = splat::render(s, cam).image.value();
    for (std::int64_t p = 0; p < 256; ++p) {
        // Red channel rises (or stays), blue channel falls (or stays).
        CHECK(after[p * 3 + 0] >= before[p * 3 + 0] - 1e-15);
        CHECK(after[p * 3 + 2] <= before[p * 3 + 2] + 1e-15);
    }
}

TEST_CASE("render gradients match finite differences") {
    nc::Rng rng(21);
    for (int trial = 0; trial < 4; ++trial) {
        auto scene = testing::random_scene<double>(rng, 1 + trial);
        const auto cam = testing::small_camera(rng);
        Var<double> weights(rng.uniform_tensor<double>({8, 8, 3}, -1, 1));
        std::vector<Var<double>> params{scene.params};
        auto r = testing::grad_check(params, [&] { return nc::sum(nc::mul(splat::render(scene, cam).image, weights)); });
        INFO("max rel error " << r.max_rel_error);
        CHECK(r.pass_fraction() >= 0.99);
    }
}

TEST_CASE("structural similarity") {
    nc::Rng rng(8);
    auto img = rng.uniform_tensor<double>({9, 7, 3}, 0, 1);
    CHECK(splat::ssim(Var<double>(img), img).value().item() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(splat::loss_3dg(Var<double>(img), img, 0.2).value().item() == doctest::Approx(0.0).epsilon(1e-12));

    // Constant images a, b: SSIM = (2ab + C1) / (a^2 + b^2 + C1).
    const double a = 0.7, b = 0.2, c1 = 1e-4;
    Tensor<double> ia({6, 6, 3}, a), ib({6, 6, 3}, b);
    const double s = (2 * a * b + c1) / (a * a + b * b + c1);
    CHECK(splat::ssim(Var<double>(ia), ib).value().item() == doctest::Approx(s).epsilon(1e-12));
    Tensor<double> ic({6, 6, 3}, 0.75), id({6, 6, 3}, 0.25);
    const double s2 = (2 * 0.75 * 0.25 + c1) / (0.75 * 0.75 + 0.25 * 0.25 + c1);
    CHECK(splat::loss_3dg(Var<double>(ic), id, 0.2).value().item() ==
          doctest::Approx(0.8 * 0.5 + 0.2 * (1 - s2)).epsilon(1e-12));

    auto x = Var<double>::parameter(rng.uniform_tensor<double>({6, 5, 2}, 0, 1));
    auto y = rng.uniform_tensor<double>({6, 5, 2}, 0, 1);
    std::vector<Var<double>> params{x};
    auto r = testing::grad_check(params, [&] { return splat::loss_3dg(x, y, 0.2); });
    INFO("max rel error " << r.max_rel_error);
    CHECK(r.all_passed());
    CHECK_THROWS_AS(splat::loss_3dg(x, Tensor<double>({6, 6, 2}), 0.2), nc::ShapeError);
}

TEST_CASE("png and camera files round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "l3dg_splat_io";
    std::filesystem::create_directories(dir);
    nc::Rng rng(4);
    auto img = rng.uniform_tensor<float>({5, 7, 3}, 0, 1);
    splat::write_png(dir / "a.png", img);
    auto back = splat::read_png(dir / "a.png");
    REQUIRE(back.shape() == img.shape());
    for (std::int64_t i = 0; i < img.numel(); ++i)
        CHECK(std::abs(back[i] - img[i]) <= 0.5f / 255.0f + 1e-6f);

    auto cam = testing::small_camera(rng, 32);
    splat::save_camera_set(dir / "cameras.json", {{cam, "a.png"}});
    auto frames = splat::load_camera_set(dir / "cameras.json");
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].image == "a.png");
    CHECK(frames[0].camera.fx == cam.fx);
    CHECK(frames[0].camera.translation == cam.translation);

    auto j = splat::camera_to_json(cam);
    j["world_to_cam"][0] = 2.0;
    CHECK_THROWS_AS(splat::camera_from_json(j), splat::CameraError);
    std::filesystem::remove_all(dir);
}
