#include "l3dg/cli/pipeline.hpp"

#include "l3dg/numcore/checkpoint.hpp"
#include "l3dg/numcore/parallel.hpp"
#include "l3dg/splat/image.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace l3dg::cli {

    using Json = nlohmann::json;
    namespace fs = std::filesystem;

    namespace {
        Json shape_to_json(const Sphere& s) {
            return {{"type", "sphere"}, {"center", s.center}, {"radius", s.radius}, {"color", s.albedo}};
        }

        // Drops the module-level seed; the pipeline derives it from the root seed.
        Json without_seed(Json j) {
            j.erase("seed");
            return j;
        }

        template <typename F>
        auto section(const Json& j, const char* name, F&& parse) {
            try {
                return parse(j.at(name));
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& e) {
                throw ConfigError(std::string(name) + ": " + e.what());
            }
        }

        void check_unit_color(const std::array<double, 3>& c, const std::string& where) {
            for (double v : c)
                if (!(v >= 0 && v <= 1))
                    throw ConfigError(where + ": colour components must lie in [0, 1]");
        }

        SyntheticScene parse_shapes(const Json& shapes) {
            if (!shapes.is_array() || shapes.empty())
                throw ConfigError("synthetic.shapes: expected a nonempty list");
            SyntheticScene scene;
            for (std::size_t i = 0; i < shapes.size(); ++i) {
                const auto& s = shapes[i];
                const std::string where = "synthetic.shapes[" + std::to_string(i) + "]";
                if (!s.is_object())
                    throw ConfigError(where + ": expected an object");
                const auto type = s.value("type", "");
                if (type == "sphere") {
                    for (const auto& [k, v] : s.items())
                        if (k != "type" && k != "center" && k != "radius" && k != "color")
                            throw ConfigError(where + ": unknown key '" + k + "'");
                    Sphere sp{s.at("center").get<std::array<double, 3>>(), s.at("radius").get<double>(),
                              s.at("color").get<std::array<double, 3>>()};
                    if (!(sp.radius > 0))
                        throw ConfigError(where + ": radius must be positive");
                    check_unit_color(sp.albedo, where);
                    scene.spheres.push_back(sp);
                } else if (type == "box") {
                    for (const auto& [k, v] : s.items())
                        if (k != "type" && k != "center" && k != "half_extent" && k != "color")
                            throw ConfigError(where + ": unknown key '" + k + "'");
                    Box b{s.at("center").get<std::array<double, 3>>(), s.at("half_extent").get<std::array<double, 3>>(),
                          s.at("color").get<std::array<double, 3>>()};
                    for (double h : b.half_extent)
                        if (!(h > 0))
                            throw ConfigError(where + ": half extents must be positive");
                    check_unit_color(b.albedo, where);
                    scene.boxes.push_back(b);
                } else {
                    throw ConfigError(where + ": type must be 'sphere' or 'box'");
                }
            }
            return scene;
        }

        void write_json(const fs::path& path, const Json& j) {
            std::ofstream out(path);
            if (!out)
                throw std::runtime_error("cannot write " + path.string());
            out << j.dump(2) << "\n";
        }

        void require(const fs::path& path, const std::string& what, const std::string& producer) {
            if (!fs::exists(path))
                throw ArtifactError("missing " + what + " '" + path.string() + "'; produce it with `l3dg " + producer +
                                    "`");
        }

        /// Starts a command: output directory, resolved config, run record, threads.
        void begin(const Run& run, const std::string& command, const Json& inputs) {
            fs::create_directories(run.out);
            write_json(run.out / "config.json", run.resolved);
            write_json(run.out / "run.json",
                       {{"command", command}, {"version", kVersion}, {"seed", run.cfg.seed}, {"inputs", inputs}});
            if (run.cfg.threads > 0)
                nc::set_num_threads(run.cfg.threads);
        }

        /// JSON-lines metrics log with wall-clock seconds since creation.
        class Log {
        public:
            Log(const fs::path& path, bool echo) : out_(path), echo_(echo), t0_(std::chrono::steady_clock::now()) {
                if (!out_)
                    throw std::runtime_error("cannot write " + path.string());
            }

            void write(Json j) {
                j["elapsed_s"] = seconds();
                const auto line = j.dump();
                out_ << line << "\n";
                out_.flush();
                if (echo_)
                    std::printf("%s\n", line.c_str());
            }

            double seconds() const {
                return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
            }

        private:
            std::ofstream out_;
            bool echo_;
            std::chrono::steady_clock::time_point t0_;
        };

        std::vector<gridfit::SparseGaussianGrid> load_grids(const std::vector<fs::path>& paths) {
            if (paths.empty())
                throw ArtifactError("no fitted grids given; produce them with `l3dg fit`");
            std::vector<gridfit::SparseGaussianGrid> grids;
            for (const auto& p : paths) {
                require(p, "fitted grid", "fit");
                try {
                    grids.push_back(gridfit::load_grid(p));
                } catch (const gridfit::GridIoError& e) {
                    throw ArtifactError("unreadable fitted grid '" + p.string() + "': " + e.what());
                }
            }
            return grids;
        }

        Json path_list(const std::vector<fs::path>& paths) {
            Json j = Json::array();
            for (const auto& p : paths)
                j.push_back(p.string());
            return j;
        }

        template <typename T>
        vq::Vqvae<T> load_vqvae(const fs::path& dir) {
            require(dir / "manifest.json", "VQ-VAE checkpoint", "train-vqvae");
            try {
                return vq::Vqvae<T>::load(dir);
            } catch (const nc::CheckpointError& e) {
                throw ArtifactError(e.what());
            }
        }

        template <typename T>
        void train_vqvae_impl(const Run& run, const std::vector<gridfit::SparseGaussianGrid>& grids) {
            auto mc = run.cfg.vqvae;
            mc.seed = nc::derive_seed(run.cfg.seed, "vqvae.init");
            auto tc = run.cfg.vqvae_train;
            tc.seed = nc::derive_seed(run.cfg.seed, "vqvae.train");
            for (const auto& g : grids)
                if (g.resolution != mc.resolution)
                    throw ConfigError("vqvae.resolution is " + std::to_string(mc.resolution) +
                                      " but an input grid has resolution " + std::to_string(g.resolution));
            vq::Vqvae<T> model(mc);
            const vq::RandomPyramid<T> phi(nc::derive_seed(run.cfg.seed, "vqvae.perceptual"));
            Log log(run.out / "log.jsonl", run.echo);
            vq::train<T>(model, grids, tc, phi, [&](const vq::TrainProgress& p) {
                log.write({{"step", p.step},
                           {"total", p.total},
                           {"commit", p.commit},
                           {"rgb", p.rgb},
                           {"perc", p.perc},
                           {"occ", p.occ},
                           {"missing", p.missing},
                           {"used_codes", p.used_codes}});
            });
            model.save(run.out);
            // Round-trip fidelity against renders of the inputs.
            const auto cams = vq::unit_cube_cameras(tc.target_views, tc.image_size);
            Json scenes = Json::array();
            for (const auto& g : grids) {
                std::vector<gridfit::TrainingView> views;
                for (auto& t : vq::target_views(g, cams))
                    views.push_back({t.camera, std::move(t.image)});
                auto unit = g;
                unit.normalization = {};
                const auto rec = model.reconstruct(unit);
                scenes.push_back({{"primitives", g.size()},
                                  {"reconstructed", rec.size()},
                                  {"psnr", gridfit::mean_psnr(rec, views)}});
            }
            write_json(run.out / "metrics.json", {{"roundtrip", scenes}, {"elapsed_s", log.seconds()}});
        }

        template <typename T>
        void train_diffusion_impl(const Run& run, const fs::path& vqvae_dir,
                                  const std::vector<gridfit::SparseGaussianGrid>& grids) {
            auto vqm = load_vqvae<T>(vqvae_dir);
            auto dc = run.cfg.diffusion;
            dc.unet.seed = nc::derive_seed(run.cfg.seed, "diffusion.init");
            const int n = vqm.config().resolution / 4;
            if (dc.unet.resolution != n)
                throw ConfigError("diffusion.unet.resolution is " + std::to_string(dc.unet.resolution) +
                                  " but the VQ-VAE latent lattice is " + std::to_string(n) + "^3");
            std::vector<sparse::SparseTensor<T>> latents;
            for (const auto& g : grids)
                latents.push_back(vqm.latent(g));
            const auto stats = diff::compute_stats(latents);
            diff::LatentDiffusion<T> model(dc, stats);
            std::vector<nc::Tensor<T>> dense;
            for (const auto& z : latents)
                dense.push_back(diff::densify_latent(z, stats));
            auto tc = run.cfg.diffusion_train;
            tc.seed = nc::derive_seed(run.cfg.seed, "diffusion.train");
            Log log(run.out / "log.jsonl", run.echo);
            diff::train_diffusion<T>(model, dense, tc, [&](const diff::DiffusionProgress& p) {
                log.write({{"step", p.step}, {"loss", p.loss}});
            });
            model.save(run.out);
            write_json(run.out / "metrics.json", {{"latents", latents.size()}, {"elapsed_s", log.seconds()}});
        }

        template <typename T>
        void sample_impl(const Run& run, const fs::path& vqvae_dir, const fs::path& diffusion_dir, int count) {
            auto vqm = load_vqvae<T>(vqvae_dir);
            require(diffusion_dir / "manifest.json", "diffusion checkpoint", "train-diffusion");
            std::optional<diff::LatentDiffusion<T>> model;
            try {
                model.emplace(diff::LatentDiffusion<T>::load(diffusion_dir));
            } catch (const nc::CheckpointError& e) {
                throw ArtifactError(e.what());
            }
            if (model->config().unet.resolution != vqm.config().resolution / 4)
                throw ArtifactError("diffusion checkpoint '" + diffusion_dir.string() +
                                    "' does not match the latent lattice of VQ-VAE '" + vqvae_dir.string() + "'");
            std::vector<std::uint64_t> seeds;
            for (int i = 0; i < count; ++i)
                seeds.push_back(nc::derive_seed(run.cfg.seed, "sample." + std::to_string(i)));
            const auto& s = run.cfg.sample;
            Log log(run.out / "log.jsonl", run.echo);
            const auto grids = model->sample(seeds, s.batch, s.clip);
            Json entries = Json::array();
            for (int i = 0; i < count; ++i) {
                const auto z = diff::sparsify_latent<T>(grids[i], model->stats(), 4, &vqm.codebook(), s.threshold);
                const auto scene = vqm.decode_grid(z);
                char name[32];
                std::snprintf(name, sizeof(name), "sample_%03d.ply", i);
                gridfit::save_grid(run.out / name, scene);
                entries.push_back({{"file", name}, {"latent_sites", z.size()}, {"primitives", scene.size()}});
                log.write({{"sample", i}, {"latent_sites", z.size()}, {"primitives", scene.size()}});
            }
            write_json(run.out / "metrics.json", {{"samples", entries}});
        }
    } // namespace

    Json default_config() {
        const SceneFitConfig sf;
        vq::VqvaeConfig vc;
        vc.resolution = sf.resolution;
        vc.width = 16;
        vc.codebook.size = 256;
        diff::DiffusionConfig dc;
        dc.unet.resolution = vc.resolution / 4;
        dc.unet.multipliers = {1, 2, 4};
        auto diffusion = diff::diffusion_config_to_json(dc);
        diffusion["unet"].erase("seed");
        const SampleSettings ss;
        const RenderConfig rc;
        Json shapes = Json::array();
        for (const auto& s : three_sphere_scene().spheres)
            shapes.push_back(shape_to_json(s));
        const SyntheticScene light;
        const gridfit::InitConfig init;
        const auto norm = synthetic_normalization();
        auto eval = without_seed(geo::eval_config_to_json({}));
        eval["export_meshes"] = false;
        auto fit = without_seed(gridfit::fit_config_to_json(sf.fit));
        fit["resolution"] = sf.resolution;
        fit["init_opacity"] = init.opacity;
        fit["normalization"] = {{"mode", "fixed"}, {"scale", norm.scale}, {"offset", norm.offset}, {"margin", init.margin}};
        return {{"seed", 0},
                {"precision", "f32"},
                {"threads", 0},
                {"synthetic",
                 {{"shapes", shapes},
                  {"cameras", sf.views},
                  {"image_size", sf.image_size},
                  {"points", sf.init_points},
                  {"supersample", 3},
                  {"light_dir", light.light_dir},
                  {"ambient", light.ambient}}},
                {"fit", fit},
                {"vqvae", without_seed(vq::config_to_json(vc))},
                {"vqvae_train", without_seed(vq::train_config_to_json({}))},
                {"diffusion", diffusion},
                {"diffusion_train", without_seed(diff::diffusion_train_to_json({}))},
                {"sample", {{"clip", ss.clip}, {"threshold", ss.threshold}, {"batch", ss.batch}}},
                {"render", {{"views", rc.views}, {"image_size", rc.image_size}, {"background", rc.background}}},
                {"eval", eval}};
    }

    void merge_config(Json& base, const Json& patch, const std::string& path) {
        if (!patch.is_object())
            throw ConfigError((path.empty() ? std::string("config") : path) + ": expected a JSON object");
        for (const auto& [k, v] : patch.items()) {
            const auto here = path.empty() ? k : path + "." + k;
            if (!base.is_object() || !base.contains(k))
                throw ConfigError("unknown config key '" + here + "'");
            auto& slot = base[k];
            // Objects merge key by key; arrays and scalars are replaced whole.
            if (slot.is_object() && v.is_object())
                merge_config(slot, v, here);
            else
                slot = v;
        }
    }

    void apply_assignment(Json& cfg, const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
        const auto key = assignment.substr(0, eq);
        const auto text = assignment.substr(eq + 1);
        Json value;
        try {
            value = Json::parse(text);
        } catch (const Json::exception&) {
            value = text;
        }
        // Build the nested patch {a: {b: value}} and merge it.
        Json patch = value;
        std::vector<std::string> parts;
        std::stringstream ss(key);
        for (std::string part; std::getline(ss, part, '.');) {
            if (part.empty())
                throw ConfigError("override key '" + key + "' has an empty component");
            parts.push_back(part);
        }
        for (auto it = parts.rbegin(); it != parts.rend(); ++it)
            patch = Json{{*it, patch}};
        merge_config(cfg, patch);
    }

    Json resolve_config(const std::optional<fs::path>& file, const std::string& env,
                        const std::vector<std::string>& assignments) {
        auto cfg = default_config();
        if (file) {
            std::ifstream in(*file);
            if (!in)
                throw ConfigError("cannot read config file '" + file->string() + "'");
            Json j;
            try {
                j = Json::parse(in);
            } catch (const Json::exception& e) {
                throw ConfigError("config file '" + file->string() + "' is not valid JSON: " + e.what());
            }
            merge_config(cfg, j);
        }
        std::stringstream es(env);
        for (std::string a; std::getline(es, a, ';');)
            if (!a.empty())
                apply_assignment(cfg, a);
        for (const auto& a : assignments)
            apply_assignment(cfg, a);
        parse_config(cfg);
        return cfg;
    }

    PipelineConfig parse_config(const Json& j) {
        PipelineConfig c;
        try {
            c.seed = j.at("seed").get<std::uint64_t>();
            const auto precision = j.at("precision").get<std::string>();
            if (precision != "f32" && precision != "f64")
                throw ConfigError("precision must be 'f32' or 'f64'");
            c.f64 = precision == "f64";
            c.threads = j.at("threads").get<int>();
            if (c.threads < 0)
                throw ConfigError("threads must be nonnegative");

            const auto& s = j.at("synthetic");
            c.scene = parse_shapes(s.at("shapes"));
            c.scene.light_dir = s.at("light_dir").get<std::array<double, 3>>();
            c.scene.ambient = s.at("ambient").get<double>();
            c.cameras = s.at("cameras").get<int>();
            c.image_size = s.at("image_size").get<int>();
            c.points = s.at("points").get<int>();
            c.supersample = s.at("supersample").get<int>();
            if (c.cameras < 1 || c.image_size < 1 || c.points < 1 || c.supersample < 1)
                throw ConfigError("synthetic: cameras, image_size, points and supersample must be positive");
            if (!(c.scene.ambient >= 0 && c.scene.ambient <= 1))
                throw ConfigError("synthetic.ambient must lie in [0, 1]");

            auto fit = j.at("fit");
            c.fit.resolution = fit.at("resolution").get<int>();
            c.init_opacity = fit.at("init_opacity").get<double>();
            const auto& norm = fit.at("normalization");
            const auto mode = norm.at("mode").get<std::string>();
            if (mode != "fixed" && mode != "bbox")
                throw ConfigError("fit.normalization.mode must be 'fixed' or 'bbox'");
            c.bbox_normalization = mode == "bbox";
            c.normalization.scale = norm.at("scale").get<double>();
            c.normalization.offset = norm.at("offset").get<std::array<double, 3>>();
            c.bbox_margin = norm.at("margin").get<double>();
            if (c.fit.resolution < 1 || !(c.init_opacity > 0 && c.init_opacity < 1) || !(c.normalization.scale > 0) ||
                !(c.bbox_margin >= 0 && c.bbox_margin < 0.5))
                throw ConfigError("fit: resolution, init_opacity, normalization scale or margin out of range");
            for (const char* k : {"resolution", "init_opacity", "normalization"})
                fit.erase(k);
            c.fit.fit = section(Json{{"fit", fit}}, "fit", gridfit::fit_config_from_json);
            c.fit.views = c.cameras;
            c.fit.image_size = c.image_size;
            c.fit.init_points = c.points;

            c.vqvae = section(j, "vqvae", vq::config_from_json);
            if (c.vqvae.resolution != c.fit.resolution)
                throw ConfigError("vqvae.resolution must equal fit.resolution");
            c.vqvae_train = section(j, "vqvae_train", vq::train_config_from_json);
            c.diffusion = section(j, "diffusion", diff::diffusion_config_from_json);
            if (c.diffusion.unet.resolution * 4 != c.vqvae.resolution)
                throw ConfigError("diffusion.unet.resolution must be vqvae.resolution / 4");
            c.diffusion_train = section(j, "diffusion_train", diff::diffusion_train_from_json);

            const auto& sm = j.at("sample");
            c.sample.clip = sm.at("clip").get<bool>();
            c.sample.threshold = sm.at("threshold").get<double>();
            c.sample.batch = sm.at("batch").get<int>();
            if (c.sample.batch < 1)
                throw ConfigError("sample.batch must be positive");

            const auto& r = j.at("render");
            c.render.views = r.at("views").get<int>();
            c.render.image_size = r.at("image_size").get<int>();
            c.render.background = r.at("background").get<std::array<double, 3>>();
            if (c.render.views < 1 || c.render.image_size < 1)
                throw ConfigError("render: views and image_size must be positive");

            auto ev = j.at("eval");
            c.export_meshes = ev.at("export_meshes").get<bool>();
            ev.erase("export_meshes");
            c.eval = section(Json{{"eval", ev}}, "eval", geo::eval_config_from_json);
            c.eval.seed = nc::derive_seed(c.seed, "eval");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("invalid config: ") + e.what());
        }
        return c;
    }

    std::vector<fs::path> expand_grids(const std::vector<fs::path>& args) {
        std::vector<fs::path> out;
        for (const auto& a : args) {
            if (fs::is_directory(a)) {
                std::vector<fs::path> found;
                for (const auto& e : fs::directory_iterator(a))
                    if (e.is_regular_file() && e.path().extension() == ".ply")
                        found.push_back(e.path());
                if (found.empty())
                    throw ArtifactError("directory '" + a.string() + "' holds no .ply grids");
                std::sort(found.begin(), found.end());
                out.insert(out.end(), found.begin(), found.end());
            } else {
                out.push_back(a);
            }
        }
        return out;
    }

    void make_synthetic(const Run& run) {
        begin(run, "make-synthetic", Json::object());
        const auto& c = run.cfg;
        nc::Rng rng(nc::derive_seed(c.seed, "synthetic.points"));
        fs::create_directories(run.out / "images");
        std::vector<splat::CameraFrame> frames;
        const auto cams = orbit_cameras(c.cameras, c.image_size);
        for (std::size_t i = 0; i < cams.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "images/%03zu.png", i);
            splat::write_png(run.out / name, ray_trace(c.scene, cams[i], c.supersample));
            frames.push_back({cams[i], name});
        }
        splat::save_camera_set(run.out / "cameras.json", frames);
        gridfit::save_point_cloud(run.out / "points.ply", surface_points(c.scene, c.points, rng));
    }

    void fit(const Run& run, const fs::path& data) {
        begin(run, "fit", {{"data", data.string()}});
        const auto& c = run.cfg;
        require(data / "cameras.json", "camera file", "make-synthetic");
        require(data / "points.ply", "initial point cloud", "make-synthetic");
        std::vector<gridfit::TrainingView> views;
        for (const auto& f : splat::load_camera_set(data / "cameras.json")) {
            require(data / f.image, "training image", "make-synthetic");
            views.push_back({f.camera, splat::read_png(data / f.image)});
        }
        auto cloud = gridfit::load_point_cloud(data / "points.ply");
        const auto norm = c.bbox_normalization ? gridfit::fit_normalization(cloud.points, c.bbox_margin) : c.normalization;
        for (auto& p : cloud.points)
            p = norm.apply(p);
        if (cloud.colors.empty())
            cloud.colors.assign(cloud.points.size(), {0.5, 0.5, 0.5});
        gridfit::InitConfig init;
        init.opacity = c.init_opacity;
        init.margin = c.bbox_margin;
        auto grid = gridfit::assign_to_grid(cloud.points, cloud.colors, c.fit.resolution, norm, init);
        auto fc = c.fit.fit;
        fc.seed = nc::derive_seed(c.seed, "fit");
        Log log(run.out / "log.jsonl", run.echo);
        auto progress = [&](const gridfit::FitProgress& p) {
            if (p.iteration % 50 == 0 || p.structural_step || p.iteration == fc.iterations)
                log.write({{"step", p.iteration}, {"loss", p.loss}, {"primitives", p.primitives}});
        };
        auto result = c.f64 ? gridfit::fit<double>(std::move(grid), views, fc, progress)
                            : gridfit::fit<float>(std::move(grid), views, fc, progress);
        gridfit::save_grid(run.out / "grid.ply", result.grid);
        write_json(run.out / "metrics.json", {{"psnr", gridfit::mean_psnr(result.grid, views, fc.background)},
                                              {"primitives", result.grid.size()},
                                              {"any_visible", result.any_visible},
                                              {"elapsed_s", log.seconds()}});
    }

    void train_vqvae(const Run& run, const std::vector<fs::path>& grid_paths) {
        const auto paths = expand_grids(grid_paths);
        begin(run, "train-vqvae", {{"grids", path_list(paths)}});
        const auto grids = load_grids(paths);
        if (run.cfg.f64)
            train_vqvae_impl<double>(run, grids);
        else
            train_vqvae_impl<float>(run, grids);
    }

    void train_diffusion(const Run& run, const fs::path& vqvae, const std::vector<fs::path>& grid_paths) {
        const auto paths = expand_grids(grid_paths);
        begin(run, "train-diffusion", {{"vqvae", vqvae.string()}, {"grids", path_list(paths)}});
        const auto grids = load_grids(paths);
        if (run.cfg.f64)
            train_diffusion_impl<double>(run, vqvae, grids);
        else
            train_diffusion_impl<float>(run, vqvae, grids);
    }

    void sample(const Run& run, const fs::path& vqvae, const fs::path& diffusion, int count) {
        if (count < 1)
            throw ConfigError("sample count must be positive");
        begin(run, "sample", {{"vqvae", vqvae.string()}, {"diffusion", diffusion.string()}, {"count", count}});
        if (run.cfg.f64)
            sample_impl<double>(run, vqvae, diffusion, count);
        else
            sample_impl<float>(run, vqvae, diffusion, count);
    }

    void render(const Run& run, const fs::path& grid_path) {
        begin(run, "render", {{"grid", grid_path.string()}});
        auto grid = load_grids({grid_path}).front();
        grid.normalization = {};
        splat::RenderSettings settings;
        settings.background = run.cfg.render.background;
        const auto views =
            vq::target_views(grid, vq::unit_cube_cameras(run.cfg.render.views, run.cfg.render.image_size), settings);
        std::vector<splat::CameraFrame> frames;
        for (std::size_t i = 0; i < views.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "view_%03zu.png", i);
            splat::write_png(run.out / name, views[i].image);
            frames.push_back({views[i].camera, name});
        }
        splat::save_camera_set(run.out / "cameras.json", frames);
    }

    void eval(const Run& run, const std::vector<fs::path>& generated_args, const std::vector<fs::path>& reference_args) {
        const auto gen_paths = expand_grids(generated_args), ref_paths = expand_grids(reference_args);
        begin(run, "eval", {{"generated", path_list(gen_paths)}, {"reference", path_list(ref_paths)}});
        const auto& cfg = run.cfg.eval;
        auto points = [&](const std::vector<fs::path>& paths, const std::string& tag) {
            std::vector<geo::PointSet> out;
            const auto grids = load_grids(paths);
            for (std::size_t i = 0; i < grids.size(); ++i) {
                if (run.cfg.export_meshes) {
                    fs::create_directories(run.out / "meshes");
                    char name[48];
                    std::snprintf(name, sizeof(name), "%s_%03zu.obj", tag.c_str(), i);
                    geo::write_obj(run.out / "meshes" / name, geo::marching_cubes(geo::voxelize(grids[i], cfg.voxel)));
                }
                out.push_back(geo::scene_points(grids[i], cfg, 0));
            }
            return out;
        };
        const auto gen = points(gen_paths, "generated");
        const auto ref = points(ref_paths, "reference");
        for (std::size_t j = 0; j < ref.size(); ++j)
            if (ref[j].empty())
                throw ArtifactError("reference grid '" + ref_paths[j].string() + "' has an empty surface");
        // Generated scenes without a surface are infinitely far from every reference.
        std::vector<std::vector<double>> cd(gen.size(), std::vector<double>(ref.size()));
        for (std::size_t i = 0; i < gen.size(); ++i)
            for (std::size_t j = 0; j < ref.size(); ++j)
                cd[i][j] = gen[i].empty() ? std::numeric_limits<double>::infinity() : geo::chamfer(gen[i], ref[j]);
        auto report = geo::report(geo::cov_mmd_from_matrix(std::move(cd)), cfg);
        report["generated"] = path_list(gen_paths);
        report["reference"] = path_list(ref_paths);
        write_json(run.out / "report.json", report);
        if (run.echo)
            std::printf("{\"cov\": %.6g, \"mmd\": %.6g}\n", report["cov"].get<double>(), report["mmd"].get<double>());
    }

} // namespace l3dg::cli
