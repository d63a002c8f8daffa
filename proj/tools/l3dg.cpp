#include "l3dg/cli/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>

namespace fs = std::filesystem;
using namespace l3dg;

int main(int argc, char** argv) {
    CLI::App app{"Latent 3D Gaussian diffusion pipeline"};
    app.require_subcommand(1);

    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> precision;
    std::optional<int> threads;
    std::vector<std::string> sets;
    fs::path out;

    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "root seed");
        cmd->add_option("--out", out, "output directory")->required();
        cmd->add_option("--precision", precision, "network precision")->check(CLI::IsMember({"f32", "f64"}));
        cmd->add_option("--threads", threads, "worker threads")->check(CLI::NonNegativeNumber);
        cmd->add_option("--set", sets, "config override key.path=value (repeatable)");
    };

    auto* make = app.add_subcommand("make-synthetic", "ray-trace a synthetic dataset");
    common(make);

    fs::path data;
    auto* fit = app.add_subcommand("fit", "fit a sparse Gaussian grid to a posed dataset");
    common(fit);
    fit->add_option("--data", data, "dataset directory")->required();

    std::vector<fs::path> grids;
    auto* tvq = app.add_subcommand("train-vqvae", "train the VQ-VAE on fitted grids");
    common(tvq);
    tvq->add_option("--grids", grids, "grid PLY files or directories")->required();

    fs::path vqvae;
    auto* tdiff = app.add_subcommand("train-diffusion", "train the latent denoiser");
    common(tdiff);
    tdiff->add_option("--vqvae", vqvae, "VQ-VAE checkpoint directory")->required();
    tdiff->add_option("--grids", grids, "grid PLY files or directories")->required();

    fs::path diffusion;
    int count = 1;
    auto* smp = app.add_subcommand("sample", "generate scenes");
    common(smp);
    smp->add_option("--vqvae", vqvae, "VQ-VAE checkpoint directory")->required();
    smp->add_option("--diffusion", diffusion, "diffusion checkpoint directory")->required();
    smp->add_option("--count", count, "number of scenes")->check(CLI::PositiveNumber);

    fs::path grid;
    auto* rnd = app.add_subcommand("render", "render orbit views of a grid");
    common(rnd);
    rnd->add_option("--grid", grid, "grid PLY file")->required();

    std::vector<fs::path> generated, reference;
    auto* ev = app.add_subcommand("eval", "COV and MMD of generated against reference scenes");
    common(ev);
    ev->add_option("--generated", generated, "grid PLY files or directories")->required();
    ev->add_option("--reference", reference, "grid PLY files or directories")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (seed)
            sets.push_back("seed=" + std::to_string(*seed));
        if (precision)
            sets.push_back("precision=\"" + *precision + "\"");
        if (threads)
            sets.push_back("threads=" + std::to_string(*threads));
        const char* env = std::getenv("L3DG_SET");
        cli::Run run;
        run.resolved = cli::resolve_config(config, env ? env : "", sets);
        run.cfg = cli::parse_config(run.resolved);
        run.out = out;

        if (make->parsed())
            cli::make_synthetic(run);
        else if (fit->parsed())
            cli::fit(run, data);
        else if (tvq->parsed())
            cli::train_vqvae(run, grids);
        else if (tdiff->parsed())
            cli::train_diffusion(run, vqvae, grids);
        else if (smp->parsed())
            cli::sample(run, vqvae, diffusion, count);
        else if (rnd->parsed())
            cli::render(run, grid);
        else if (ev->parsed())
            cli::eval(run, generated, reference);
    } catch (const cli::ConfigError& e) {
        std::fprintf(stderr, "l3dg: config error: %s\n", e.what());
        return 2;
    } catch (const cli::ArtifactError& e) {
        std::fprintf(stderr, "l3dg: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "l3dg: %s\n", e.what());
        return 1;
    }
    return 0;
}
