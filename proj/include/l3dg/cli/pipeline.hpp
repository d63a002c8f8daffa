#pragma once

#include "l3dg/cli/scenes.hpp"
#include "l3dg/diffusion/model.hpp"
#include "l3dg/geomeval/metrics.hpp"
#include "l3dg/vqvae/model.hpp"

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace l3dg::cli {

    /// Invalid configuration: unknown key, bad value or malformed override.
    class ConfigError : public std::invalid_argument {
    public:
        using std::invalid_argument::invalid_argument;
    };

    /// An upstream artifact a command needs is absent or unreadable.
    class ArtifactError : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    constexpr const char* kVersion = "0.1.0";

    /// Every key the pipeline accepts, at its default value.
    nlohmann::json default_config();

    /// Overlays `patch` onto `base` in place. Objects merge recursively; any key
    /// absent from `base` is rejected with its dotted path.
    void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& path = "");

    /// Applies one `dotted.path=value` assignment; the value is parsed as JSON
    /// and taken as a string when that fails.
    void apply_assignment(nlohmann::json& cfg, const std::string& assignment);

    /// Defaults < file < `env` (semicolon-separated assignments) < `assignments`.
    nlohmann::json resolve_config(const std::optional<std::filesystem::path>& file, const std::string& env,
                                  const std::vector<std::string>& assignments);

    struct SampleSettings {
        bool clip = true;
        double threshold = 0.0; // occupancy channel cut
        int batch = 1;          // chains denoised together
    };

    struct RenderConfig {
        int views = 8;
        int image_size = 128;
        std::array<double, 3> background{1, 1, 1};
    };

    /// Typed view of a resolved config. Module seeds are derived from `seed`.
    struct PipelineConfig {
        std::uint64_t seed = 0;
        bool f64 = false;
        int threads = 0; // 0 keeps the runtime default
        SyntheticScene scene;
        int cameras = 16;
        int image_size = 64;
        int points = 20000;
        int supersample = 3;
        SceneFitConfig fit;
        bool bbox_normalization = false;
        double bbox_margin = 0.05;
        gridfit::Normalization normalization;
        double init_opacity = 0.1;
        vq::VqvaeConfig vqvae;
        vq::TrainConfig vqvae_train;
        diff::DiffusionConfig diffusion;
        diff::DiffusionTrainConfig diffusion_train;
        SampleSettings sample;
        RenderConfig render;
        geo::EvalConfig eval;
        bool export_meshes = false;
    };

    /// Validates every section; throws ConfigError naming the offending key.
    PipelineConfig parse_config(const nlohmann::json& resolved);

    /// Commands. Each writes config.json (the resolved config) and run.json
    /// into `out` next to its artifacts; training commands also write log.jsonl.
    struct Run {
        nlohmann::json resolved;
        PipelineConfig cfg;
        std::filesystem::path out;
        bool echo = true; // mirror log lines on stdout
    };

    void make_synthetic(const Run& run);
    void fit(const Run& run, const std::filesystem::path& data);
    void train_vqvae(const Run& run, const std::vector<std::filesystem::path>& grids);
    void train_diffusion(const Run& run, const std::filesystem::path& vqvae,
                         const std::vector<std::filesystem::path>& grids);
    /// sample_NNN.ply for `count` chains seeded from the root seed.
    void sample(const Run& run, const std::filesystem::path& vqvae, const std::filesystem::path& diffusion, int count);
    void render(const Run& run, const std::filesystem::path& grid);
    /// report.json with COV, MMD and the per-pair chamfer matrix.
    void eval(const Run& run, const std::vector<std::filesystem::path>& generated,
              const std::vector<std::filesystem::path>& reference);

    /// `.ply` files directly inside each directory argument, sorted; file
    /// arguments are kept in order.
    std::vector<std::filesystem::path> expand_grids(const std::vector<std::filesystem::path>& args);

} // namespace l3dg::cli
