#include "doctest.h"

#include "l3dg/cli/pipeline.hpp"
#include "l3dg/splat/image.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace l3dg;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

    fs::path scratch(const std::string& name) {
        const auto dir = fs::temp_directory_path() / ("l3dg_test_cli_" + name);
        fs::remove_all(dir);
        fs::create_directories(dir);
        return dir;
    }

    std::string bytes(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }

    // Pipeline small enough for a unit test: 8^3 grid, 2^3 latent, 4 views of 16 px.
    std::vector<std::string> tiny() {
        return {"synthetic.cameras=4",
                "synthetic.image_size=16",
                "synthetic.points=2000",
                "synthetic.supersample=1",
                "fit.resolution=8",
                "fit.iterations=20",
                "vqvae.resolution=8",
                "vqvae.width=4",
                "vqvae.codebook.size=8",
                "vqvae.weights.renders=2",
                "vqvae_train.steps=3",
                "vqvae_train.target_views=2",
                "vqvae_train.image_size=16",
                "diffusion.unet.resolution=2",
                "diffusion.unet.base=8",
                "diffusion.unet.multipliers=[1]",
                "diffusion.unet.attention_resolutions=[]",
                "diffusion.timesteps=20",
                "diffusion_train.steps=3",
                "diffusion_train.batch=1",
                "eval.resolution=16",
                "eval.surface_points=256"};
    }

    cli::Run make_run(const fs::path& out, std::vector<std::string> sets = tiny()) {
        cli::Run r;
        r.resolved = cli::resolve_config(std::nullopt, "", sets);
        r.cfg = cli::parse_config(r.resolved);
        r.out = out;
        r.echo = false;
        return r;
    }

    gridfit::SparseGaussianGrid blob(int res, gridfit::Voxel v) {
        auto g = gridfit::SparseGaussianGrid::empty(res);
        splat::GaussianPrimitive p;
        p.log_scale = {std::log(0.08), std::log(0.08), std::log(0.08)};
        p.opacity_logit = 3.0;
        g.cells[v] = p;
        return g;
    }

} // namespace

TEST_CASE("make-synthetic writes one image and camera per view") {
    const auto dir = scratch("make");
    auto sets = tiny();
    sets.push_back(R"(synthetic.shapes=[{"type":"sphere","center":[0,0,0],"radius":0.4,"color":[1,0,0]}])");
    sets.push_back("synthetic.cameras=8");
    cli::make_synthetic(make_run(dir / "a", sets));
    const auto frames = splat::load_camera_set(dir / "a" / "cameras.json");
    CHECK(frames.size() == 8);
    std::size_t pngs = 0;
    for (const auto& e : fs::directory_iterator(dir / "a" / "images"))
        pngs += e.path().extension() == ".png";
    CHECK(pngs == 8);
    // The sphere covers the image centre in red.
    const auto img = splat::read_png(dir / "a" / frames[0].image);
    const std::int64_t c = (8 * 16 + 8) * 3;
    CHECK(img[c] > 0.3f);
    CHECK(img[c + 1] < 0.05f);
    CHECK(fs::exists(dir / "a" / "config.json"));
    CHECK(fs::exists(dir / "a" / "run.json"));

    cli::make_synthetic(make_run(dir / "b", sets));
    CHECK(bytes(dir / "a" / "points.ply") == bytes(dir / "b" / "points.ply"));
    CHECK(bytes(dir / "a" / "images" / "003.png") == bytes(dir / "b" / "images" / "003.png"));
}

TEST_CASE("boxes render and are sampled on their faces") {
    const auto dir = scratch("box");
    auto sets = tiny();
    sets.push_back(R"(synthetic.shapes=[{"type":"box","center":[0,0,0],"half_extent":[0.3,0.2,0.25],"color":[0,0,1]}])");
    cli::make_synthetic(make_run(dir, sets));
    const auto cloud = gridfit::load_point_cloud(dir / "points.ply");
    CHECK(cloud.points.size() == 2000);
    const std::array<double, 3> h{0.3, 0.2, 0.25};
    for (const auto& p : cloud.points) {
        bool on_face = false;
        for (int k = 0; k < 3; ++k) {
            CHECK(std::abs(p[k]) <= h[k] + 1e-12);
            on_face = on_face || std::abs(std::abs(p[k]) - h[k]) < 1e-12;
        }
        CHECK(on_face);
    }
    const auto img = splat::read_png(dir / "images" / "000.png");
    const std::int64_t c = (8 * 16 + 8) * 3;
    CHECK(img[c + 2] > 0.3f);
    CHECK(img[c] < 0.05f);
}

TEST_CASE("config layering and validation") {
    const auto dir = scratch("config");
    std::ofstream(dir / "c.json") << R"({"fit": {"iterations": 5}, "seed": 3})";
    const auto file = std::optional<fs::path>(dir / "c.json");
    CHECK(cli::resolve_config(file, "", {})["fit"]["iterations"] == 5);
    CHECK(cli::resolve_config(file, "fit.iterations=6", {})["fit"]["iterations"] == 6);
    CHECK(cli::resolve_config(file, "fit.iterations=6", {"fit.iterations=7"})["fit"]["iterations"] == 7);
    CHECK(cli::resolve_config(file, "fit.iterations=6;seed=9", {})["seed"] == 9);
    CHECK(cli::resolve_config(file, "", {})["seed"] == 3);
    // Unset keys keep their defaults.
    CHECK(cli::resolve_config(file, "", {})["fit"]["lambda_3dg"] == cli::default_config()["fit"]["lambda_3dg"]);

    CHECK_THROWS_AS(cli::resolve_config(std::nullopt, "", {"fit.iterationz=3"}), cli::ConfigError);
    CHECK_THROWS_AS(cli::resolve_config(std::nullopt, "bogus=1", {}), cli::ConfigError);
    CHECK_THROWS_AS(cli::resolve_config(std::nullopt, "", {"fit.seed=1"}), cli::ConfigError);
    CHECK_THROWS_AS(cli::resolve_config(std::nullopt, "", {"precision=f16"}), cli::ConfigError);
    CHECK_THROWS_AS(cli::resolve_config(std::nullopt, "", {"fit.iterations=\"many\""}), cli::ConfigError);
    CHECK_THROWS_AS(cli::resolve_config(std::nullopt, "", {"noequals"}), cli::ConfigError);
    CHECK_THROWS_AS(cli::resolve_config(std::nullopt, "", {"vqvae.resolution=16"}), cli::ConfigError);
    CHECK_THROWS_AS(cli::resolve_config(std::nullopt, "", {R"(synthetic.shapes=[{"type":"cone"}])"}),
                    cli::ConfigError);
    std::ofstream(dir / "bad.json") << R"({"vqvae": {"codebook": {"sise": 3}}})";
    CHECK_THROWS_AS(cli::resolve_config(dir / "bad.json", "", {}), cli::ConfigError);
    CHECK_THROWS_AS(cli::resolve_config(dir / "missing.json", "", {}), cli::ConfigError);

    // Unquoted strings fall back to string values.
    CHECK(cli::resolve_config(std::nullopt, "", {"precision=f64"})["precision"] == "f64");
    CHECK(cli::parse_config(cli::resolve_config(std::nullopt, "", {"precision=f64"})).f64);
}

TEST_CASE("missing upstream artifacts name the absent file and its producer") {
    const auto dir = scratch("missing");
    auto expect = [](auto&& f, const std::string& needle) {
        try {
            f();
            FAIL("expected an artifact error");
        } catch (const cli::ArtifactError& e) {
            const std::string what = e.what();
            INFO(what);
            CHECK(what.find(needle) != std::string::npos);
        }
    };
    const auto run = make_run(dir / "out");
    expect([&] { cli::fit(run, dir / "nodata"); }, "cameras.json");
    expect([&] { cli::train_vqvae(run, {dir / "nogrid.ply"}); }, "l3dg fit");
    expect([&] { cli::sample(run, dir / "novq", dir / "nodiff", 1); }, "l3dg train-vqvae");
    expect([&] { cli::render(run, dir / "nogrid.ply"); }, "nogrid.ply");
}

TEST_CASE("tiny pipeline end to end is reproducible") {
    const auto dir = scratch("pipeline");
    cli::make_synthetic(make_run(dir / "data"));
    cli::fit(make_run(dir / "fit"), dir / "data");
    REQUIRE(fs::exists(dir / "fit" / "grid.ply"));
    const auto fit_log = bytes(dir / "fit" / "log.jsonl");
    std::istringstream lines(fit_log);
    int parsed = 0;
    for (std::string line; std::getline(lines, line); ++parsed) {
        const auto j = Json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.contains("loss"));
        CHECK(j.contains("elapsed_s"));
    }
    CHECK(parsed > 0);

    cli::fit(make_run(dir / "fit2"), dir / "data");
    CHECK(bytes(dir / "fit" / "grid.ply") == bytes(dir / "fit2" / "grid.ply"));

    cli::train_vqvae(make_run(dir / "vq"), {dir / "fit"});
    CHECK(fs::exists(dir / "vq" / "manifest.json"));
    CHECK(fs::exists(dir / "vq" / "metrics.json"));
    cli::train_diffusion(make_run(dir / "diff"), dir / "vq", {dir / "fit" / "grid.ply"});
    CHECK(fs::exists(dir / "diff" / "manifest.json"));

    auto sets = tiny();
    sets.push_back("seed=7");
    cli::sample(make_run(dir / "s1", sets), dir / "vq", dir / "diff", 2);
    cli::sample(make_run(dir / "s2", sets), dir / "vq", dir / "diff", 2);
    for (const char* f : {"sample_000.ply", "sample_001.ply"}) {
        REQUIRE(fs::exists(dir / "s1" / f));
        CHECK(bytes(dir / "s1" / f) == bytes(dir / "s2" / f));
    }
    CHECK(bytes(dir / "s1" / "config.json") == bytes(dir / "s2" / "config.json"));

    cli::render(make_run(dir / "render"), dir / "fit" / "grid.ply");
    CHECK(splat::load_camera_set(dir / "render" / "cameras.json").size() == 8);

    // Diffusion lattice must match the VQ-VAE latent.
    auto wrong = tiny();
    wrong.push_back("fit.resolution=16");
    wrong.push_back("vqvae.resolution=16");
    wrong.push_back("diffusion.unet.resolution=4");
    CHECK_THROWS_AS(cli::train_diffusion(make_run(dir / "diff_bad", wrong), dir / "vq", {dir / "fit"}),
                    cli::ConfigError);
}

TEST_CASE("eval of a set against itself") {
    const auto dir = scratch("eval");
    fs::create_directories(dir / "set");
    gridfit::save_grid(dir / "set" / "a.ply", blob(16, {4, 4, 4}));
    gridfit::save_grid(dir / "set" / "b.ply", blob(16, {11, 10, 12}));
    auto sets = tiny();
    sets.push_back("eval.export_meshes=true");
    cli::eval(make_run(dir / "out", sets), {dir / "set"}, {dir / "set"});
    std::ifstream in(dir / "out" / "report.json");
    const auto report = Json::parse(in);
    CHECK(report["cov"] == 1.0);
    CHECK(report["mmd"] == 0.0);
    CHECK(report["per_pair_cd"][0][1].get<double>() > 0);
    CHECK(report["config"]["chamfer"] == "squared");
    CHECK(fs::exists(dir / "out" / "meshes" / "generated_000.obj"));

    // A generated scene without surface matches nothing.
    gridfit::save_grid(dir / "empty.ply", gridfit::SparseGaussianGrid::empty(16));
    cli::eval(make_run(dir / "out2"), {dir / "empty.ply", dir / "set" / "a.ply"}, {dir / "set"});
    std::ifstream in2(dir / "out2" / "report.json");
    const auto r2 = Json::parse(in2);
    CHECK(r2["cov"] == 0.5);
}
