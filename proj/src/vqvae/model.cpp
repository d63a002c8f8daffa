#include "l3dg/vqvae/model.hpp"

#include "l3dg/numcore/adam.hpp"
#include "l3dg/numcore/checkpoint.hpp"
#include "l3dg/numcore/ops.hpp"
#include "l3dg/splat/gaussian.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace l3dg::vq {

    namespace {

        using Json = nlohmann::json;

        void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
            if (!j.is_object())
                throw std::invalid_argument(where + ": expected a JSON object");
            std::set<std::string> allowed(keys.begin(), keys.end());
            for (const auto& [k, v] : j.items())
                if (!allowed.count(k))
                    throw std::invalid_argument(where + ": unknown key '" + k + "'");
        }

        template <typename T>
        nc::Tensor<T> cast(const nc::Tensor<float>& t) {
            if constexpr (std::is_same_v<T, float>) {
                return t;
            } else {
                nc::Tensor<T> out(t.shape());
                for (std::int64_t i = 0; i < t.numel(); ++i)
                    out[i] = static_cast<T>(t[i]);
                return out;
            }
        }

    } // namespace

    Json config_to_json(const VqvaeConfig& c) {
        return {{"resolution", c.resolution},
                {"width", c.width},
                {"codebook", {{"size", c.codebook.size}, {"decay", c.codebook.decay}, {"dead_after", c.codebook.dead_after}}},
                {"weights",
                 {{"commit", c.weights.commit}, {"rgb", c.weights.rgb}, {"perc", c.weights.perc}, {"renders", c.weights.renders}}},
                {"prune_threshold", c.prune_threshold},
                {"seed", c.seed}};
    }

    VqvaeConfig config_from_json(const Json& j) {
        reject_unknown(j, {"resolution", "width", "codebook", "weights", "prune_threshold", "seed"}, "vqvae config");
        VqvaeConfig c;
        c.resolution = j.value("resolution", c.resolution);
        c.width = j.value("width", c.width);
        if (j.contains("codebook")) {
            const auto& cb = j["codebook"];
            reject_unknown(cb, {"size", "decay", "dead_after"}, "vqvae codebook config");
            c.codebook.size = cb.value("size", c.codebook.size);
            c.codebook.decay = cb.value("decay", c.codebook.decay);
            c.codebook.dead_after = cb.value("dead_after", c.codebook.dead_after);
        }
        if (j.contains("weights")) {
            const auto& w = j["weights"];
            reject_unknown(w, {"commit", "rgb", "perc", "renders"}, "vqvae loss weights");
            c.weights.commit = w.value("commit", c.weights.commit);
            c.weights.rgb = w.value("rgb", c.weights.rgb);
            c.weights.perc = w.value("perc", c.weights.perc);
            c.weights.renders = w.value("renders", c.weights.renders);
        }
        c.prune_threshold = j.value("prune_threshold", c.prune_threshold);
        c.seed = j.value("seed", c.seed);
        if (c.resolution <= 0 || c.resolution % 4)
            throw std::invalid_argument("vqvae config: resolution must be a positive multiple of 4");
        if (c.width <= 0)
            throw std::invalid_argument("vqvae config: width must be positive");
        if (c.weights.commit < 0 || c.weights.rgb < 0 || c.weights.perc < 0 || c.weights.renders <= 0)
            throw std::invalid_argument("vqvae config: loss weights must be nonnegative and renders positive");
        return c;
    }

    Json train_config_to_json(const TrainConfig& c) {
        return {{"steps", c.steps},
                {"lr", c.lr},
                {"final_lr_fraction", c.final_lr_fraction},
                {"batch", c.batch},
                {"target_views", c.target_views},
                {"image_size", c.image_size},
                {"seed", c.seed}};
    }

    TrainConfig train_config_from_json(const Json& j) {
        reject_unknown(j, {"steps", "lr", "final_lr_fraction", "batch", "target_views", "image_size", "seed"},
                       "vqvae training config");
        TrainConfig c;
        c.steps = j.value("steps", c.steps);
        c.lr = j.value("lr", c.lr);
        c.final_lr_fraction = j.value("final_lr_fraction", c.final_lr_fraction);
        c.batch = j.value("batch", c.batch);
        c.target_views = j.value("target_views", c.target_views);
        c.image_size = j.value("image_size", c.image_size);
        c.seed = j.value("seed", c.seed);
        if (c.steps < 0 || c.batch < 1 || !(c.lr > 0) || c.target_views < 1 || c.image_size < 1 ||
            !(c.final_lr_fraction > 0 && c.final_lr_fraction <= 1))
            throw std::invalid_argument("vqvae training config: steps >= 0, batch, target_views, image_size >= 1, "
                                        "lr > 0 and final_lr_fraction in (0, 1] required");
        return c;
    }

    template <typename T>
    ResBlock<T> ResBlock<T>::create(nc::ParamStore<T>& store, const std::string& name, std::int64_t cin,
                                    std::int64_t cout, nc::Rng& rng) {
        ResBlock b;
        b.conv1 = sparse::ConvLayer<T>::create(store, name + ".conv1", cin, cout, rng, false);
        b.norm1 = sparse::NormLayer<T>::create(store, name + ".norm1", cout);
        b.conv2 = sparse::ConvLayer<T>::create(store, name + ".conv2", cout, cout, rng, false);
        b.norm2 = sparse::NormLayer<T>::create(store, name + ".norm2", cout);
        if (cin != cout)
            b.skip = sparse::LinearLayer<T>::create(store, name + ".skip", cin, cout, rng);
        return b;
    }

    template <typename T>
    sparse::SparseTensor<T> ResBlock<T>::operator()(const sparse::SparseTensor<T>& x) const {
        auto h = sparse::relu(sparse::batch_norm(sparse::sparse_conv(x, conv1, 1), norm1));
        h = sparse::batch_norm(sparse::sparse_conv(h, conv2, 1), norm2);
        return sparse::relu(sparse::add(h, skip ? sparse::linear(x, *skip) : x));
    }

    template <typename T>
    ConvBlock<T> ConvBlock<T>::create(nc::ParamStore<T>& store, const std::string& name, std::int64_t cin,
                                      std::int64_t cout, Kind kind, nc::Rng& rng) {
        ConvBlock b;
        b.kind = kind;
        b.conv = sparse::ConvLayer<T>::create(store, name + ".conv", cin, cout, rng, false);
        b.norm = sparse::NormLayer<T>::create(store, name + ".norm", cout);
        return b;
    }

    template <typename T>
    sparse::SparseTensor<T> ConvBlock<T>::operator()(const sparse::SparseTensor<T>& x) const {
        sparse::SparseTensor<T> y;
        switch (kind) {
        case Kind::same: y = sparse::sparse_conv(x, conv, 1); break;
        case Kind::down: y = sparse::sparse_conv(x, conv, 2); break;
        case Kind::up: y = sparse::generative_transpose_conv(x, conv); break;
        }
        return sparse::relu(sparse::batch_norm(y, norm));
    }

    template <typename T>
    Vqvae<T>::Vqvae(VqvaeConfig cfg) : cfg_(cfg), codebook_(cfg.codebook) {
        if (cfg.resolution <= 0 || cfg.resolution % 4)
            throw std::invalid_argument("vqvae: grid resolution must be divisible by 4");
        nc::Rng rng(nc::derive_seed(cfg.seed, "vqvae.init"));
        const auto c = cfg.width;
        using K = typename ConvBlock<T>::Kind;
        enc_stem_ = ConvBlock<T>::create(store_, "enc.stem", splat::field::count, c, K::same, rng);
        std::int64_t w = c;
        for (int s = 0; s < 2; ++s) {
            const auto p = "enc.down" + std::to_string(s);
            enc_res_.push_back(ResBlock<T>::create(store_, p + ".res0", w, 2 * w, rng));
            enc_res_.push_back(ResBlock<T>::create(store_, p + ".res1", 2 * w, 2 * w, rng));
            enc_down_.push_back(ConvBlock<T>::create(store_, p + ".conv", 2 * w, 2 * w, K::down, rng));
            w *= 2;
        }
        enc_res_.push_back(ResBlock<T>::create(store_, "enc.bottleneck", w, w, rng));
        to_latent_ = sparse::ConvLayer<T>::create(store_, "enc.to_latent", w, kCodeDim, rng);

        dec_stem_ = ConvBlock<T>::create(store_, "dec.stem", kCodeDim, w, K::same, rng);
        for (int s = 0; s < 2; ++s) {
            const auto p = "dec.up" + std::to_string(s);
            dec_res_.push_back(ResBlock<T>::create(store_, p + ".res0", w, w / 2, rng));
            dec_res_.push_back(ResBlock<T>::create(store_, p + ".res1", w / 2, w / 2, rng));
            dec_up_.push_back(ConvBlock<T>::create(store_, p + ".conv", w / 2, w / 2, K::up, rng));
            classifiers_.push_back(sparse::LinearLayer<T>::create(store_, p + ".occupancy", w / 2, 1, rng));
            w /= 2;
        }
        dec_res_.push_back(ResBlock<T>::create(store_, "dec.tail0", w, w, rng));
        dec_res_.push_back(ResBlock<T>::create(store_, "dec.tail1", w, w, rng));
        to_params_ = sparse::ConvLayer<T>::create(store_, "dec.to_params", w, splat::field::count, rng);
        // Small output weights around a neutral primitive: voxel-sized, axis-aligned, grey, alpha 0.5.
        auto& ow = to_params_.weight.value_mut();
        for (std::int64_t i = 0; i < ow.numel(); ++i)
            ow[i] *= T(0.1);
        auto& ob = to_params_.bias.value_mut();
        for (int k = 0; k < 3; ++k)
            ob[splat::field::log_scale + k] = static_cast<T>(std::log(1.0 / cfg.resolution));
        ob[splat::field::rotation] = T(1);
    }

    template <typename T>
    sparse::SparseTensor<T> Vqvae<T>::pack(const std::vector<const gridfit::SparseGaussianGrid*>& grids) const {
        std::vector<sparse::Coord> coords;
        std::vector<T> feats;
        for (std::size_t b = 0; b < grids.size(); ++b) {
            const auto& g = *grids[b];
            if (g.resolution != cfg_.resolution)
                throw gridfit::GridError("vqvae expects resolution " + std::to_string(cfg_.resolution) + ", got " +
                                         std::to_string(g.resolution));
            for (const auto& [v, p] : g.cells) {
                coords.push_back({static_cast<std::int32_t>(b), v.x, v.y, v.z});
                const auto row = p.pack();
                feats.insert(feats.end(), row.begin(), row.end());
            }
        }
        // Map order (x, y, z) per batch entry equals the coordinate-set order.
        auto set = sparse::make_coords(std::move(coords), 1, cfg_.resolution);
        return {set, nc::Var<T>(nc::Tensor<T>({set->size(), splat::field::count}, std::move(feats)))};
    }

    template <typename T>
    sparse::SparseTensor<T> Vqvae<T>::encode(const sparse::SparseTensor<T>& theta) const {
        if (theta.stride() != 1 || theta.channels() != splat::field::count)
            throw nc::ShapeError("encode expects stride-1 coordinates with 23 parameters");
        if (theta.size() == 0)
            return {theta.coords->downsampled()->downsampled(), nc::Var<T>(nc::Tensor<T>({0, kCodeDim}))};
        auto x = enc_stem_(theta);
        for (int s = 0; s < 2; ++s) {
            x = enc_res_[2 * s](x);
            x = enc_res_[2 * s + 1](x);
            x = enc_down_[s](x);
        }
        x = enc_res_[4](x);
        return sparse::sparse_conv(x, to_latent_, 1);
    }

    template <typename T>
    DecodeOutput<T> Vqvae<T>::decode(const sparse::SparseTensor<T>& z_q, const sparse::CoordSet* targets) const {
        if (z_q.channels() != kCodeDim || z_q.stride() != 4)
            throw nc::ShapeError("decode expects a 4-channel latent at stride 4");
        DecodeOutput<T> out;
        auto empty = [&](const sparse::CoordSetPtr& like) {
            out.params = {sparse::make_coords({}, 1, like->resolution()),
                          nc::Var<T>(nc::Tensor<T>({0, splat::field::count}))};
            return out;
        };
        if (z_q.size() == 0)
            return empty(z_q.coords);
        sparse::CoordSetPtr level_targets[2];
        if (targets) {
            level_targets[1] = std::make_shared<const sparse::CoordSet>(targets->coords(), 1, targets->resolution());
            level_targets[0] = level_targets[1]->downsampled();
        }
        auto x = dec_stem_(z_q);
        for (int s = 0; s < 2; ++s) {
            x = dec_res_[2 * s](x);
            x = dec_res_[2 * s + 1](x);
            x = dec_up_[s](x);
            auto pr = sparse::occupancy_prune(x, classifiers_[s], targets ? level_targets[s].get() : nullptr,
                                              cfg_.prune_threshold);
            x = pr.pruned;
            out.prunes.push_back(std::move(pr));
            if (x.size() == 0)
                return empty(x.coords);
        }
        x = dec_res_[4](x);
        x = dec_res_[5](x);
        out.params = sparse::sparse_conv(x, to_params_, 1);
        return out;
    }

    template <typename T>
    ForwardOutput<T> Vqvae<T>::forward(const sparse::SparseTensor<T>& theta, bool training, nc::Rng* rng) {
        ForwardOutput<T> out;
        out.z_e = encode(theta);
        if (!codebook_.initialized()) {
            if (!rng)
                throw std::logic_error("vqvae: codebook initialisation needs a random generator");
            codebook_.init_from(out.z_e.features.value(), *rng);
        }
        out.quantized = codebook_.quantize(out.z_e.features, training, rng);
        sparse::SparseTensor<T> z_q{out.z_e.coords, out.quantized.z_q};
        out.decoded = decode(z_q, training ? theta.coords.get() : nullptr);
        return out;
    }

    template <typename T>
    sparse::SparseTensor<T> Vqvae<T>::latent(const gridfit::SparseGaussianGrid& grid) {
        nc::NoGradGuard guard;
        const auto z_e = encode(pack({&grid}));
        const auto q = codebook_.quantize(z_e.features, false);
        return {z_e.coords, nc::Var<T>(q.z_q.value())};
    }

    template <typename T>
    gridfit::SparseGaussianGrid Vqvae<T>::decode_grid(const sparse::SparseTensor<T>& z_q) const {
        nc::NoGradGuard guard;
        const auto out = decode(z_q);
        auto grid = gridfit::SparseGaussianGrid::empty(cfg_.resolution);
        const auto& p = out.params;
        const auto& f = p.features.value();
        for (std::int64_t i = 0; i < p.size(); ++i) {
            const auto& c = (*p.coords)[i];
            if (c.b != 0)
                continue;
            grid.cells[{c.x, c.y, c.z}] = splat::GaussianPrimitive::unpack<T>(
                std::span<const T>(f.data().data() + i * splat::field::count, splat::field::count));
        }
        return grid;
    }

    template <typename T>
    gridfit::SparseGaussianGrid Vqvae<T>::reconstruct(const gridfit::SparseGaussianGrid& grid) {
        auto out = decode_grid(latent(grid));
        out.normalization = grid.normalization;
        return out;
    }

    template <typename T>
    std::vector<splat::SplatScene<T>> Vqvae<T>::scenes(const sparse::SparseTensor<T>& params, int batch_size) const {
        std::vector<std::vector<std::int64_t>> rows(batch_size);
        for (std::int64_t i = 0; i < params.size(); ++i)
            rows.at((*params.coords)[i].b).push_back(i);
        const double d = 1.0 / cfg_.resolution;
        std::vector<splat::SplatScene<T>> out;
        for (int b = 0; b < batch_size; ++b) {
            splat::SplatScene<T> s;
            s.max_offset = 1.5 * d;
            const auto n = static_cast<std::int64_t>(rows[b].size());
            s.anchors = nc::Tensor<T>({n, 3});
            for (std::int64_t i = 0; i < n; ++i) {
                const auto& c = (*params.coords)[rows[b][i]];
                s.anchors[i * 3 + 0] = static_cast<T>((c.x + 0.5) * d);
                s.anchors[i * 3 + 1] = static_cast<T>((c.y + 0.5) * d);
                s.anchors[i * 3 + 2] = static_cast<T>((c.z + 0.5) * d);
            }
            s.params = nc::gather_rows(params.features, std::span<const std::int64_t>(rows[b]));
            out.push_back(std::move(s));
        }
        return out;
    }

    template <typename T>
    Json Vqvae<T>::manifest() const {
        std::int64_t used = 0;
        for (auto u : codebook_.usage())
            used += u > 0;
        Json channels = Json::array();
        for (std::int64_t w = cfg_.width, s = 0; s < 3; ++s, w *= 2)
            channels.push_back(w);
        return {{"format", "l3dg-vqvae"},
                {"precision", std::is_same_v<T, float> ? "f32" : "f64"},
                {"config", config_to_json(cfg_)},
                {"channels", channels},
                {"strides", {1, 2, 4}},
                {"latent_channels", kCodeDim},
                {"parameters", store_.count()},
                {"codebook_usage", {{"steps", codebook_.steps()}, {"used_entries", used}, {"counts", codebook_.usage()}}}};
    }

    template <typename T>
    void Vqvae<T>::save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        auto state = store_.state();
        codebook_.save(state, "codebook.");
        nc::save_checkpoint(dir / "model.l3dg", state);
        std::ofstream(dir / "manifest.json") << manifest().dump(2) << "\n";
    }

    template <typename T>
    Vqvae<T> Vqvae<T>::load(const std::filesystem::path& dir) {
        std::ifstream in(dir / "manifest.json");
        if (!in)
            throw nc::CheckpointError("missing VQ-VAE manifest " + (dir / "manifest.json").string());
        Json m;
        try {
            m = Json::parse(in);
        } catch (const Json::exception& e) {
            throw nc::CheckpointError("unreadable VQ-VAE manifest: " + std::string(e.what()));
        }
        if (m.value("format", "") != "l3dg-vqvae")
            throw nc::CheckpointError("not a VQ-VAE manifest: " + (dir / "manifest.json").string());
        Vqvae model(config_from_json(m.at("config")));
        const auto state = nc::load_checkpoint<T>(dir / "model.l3dg");
        model.store_.load(state);
        model.codebook_.load(state, "codebook.");
        return model;
    }

    template <typename T>
    LossBreakdown<T> compression_loss(const Vqvae<T>& model, const ForwardOutput<T>& out,
                                      const std::vector<std::vector<const TargetView*>>& views,
                                      const LossWeights& weights, const FeatureExtractor<T>& phi,
                                      const splat::RenderSettings& settings) {
        const int batch = static_cast<int>(views.size());
        LossBreakdown<T> r;
        nc::Var<T> rgb, perc, occ;
        const auto scenes = model.scenes(out.decoded.params, batch);
        std::int64_t count = 0;
        for (int b = 0; b < batch; ++b) {
            if (views[b].empty())
                throw std::invalid_argument("compression_loss: no target cameras for batch entry " + std::to_string(b));
            for (const auto* v : views[b]) {
                const auto img = splat::render(scenes[b], v->camera, settings).image;
                const auto target = cast<T>(v->image);
                auto l1 = nc::l1_loss(img, nc::Var<T>(target));
                auto pl = perceptual_loss(phi, img, target);
                rgb = rgb.defined() ? nc::add(rgb, l1) : l1;
                perc = perc.defined() ? nc::add(perc, pl) : pl;
                ++count;
            }
        }
        rgb = nc::scale(rgb, T(1) / static_cast<T>(count));
        perc = nc::scale(perc, T(1) / static_cast<T>(count));
        for (const auto& p : out.decoded.prunes) {
            if (!p.bce.defined())
                continue;
            occ = occ.defined() ? nc::add(occ, p.bce) : p.bce;
            r.missing += p.missing;
        }
        auto total = nc::add(nc::scale(out.quantized.commit, static_cast<T>(weights.commit)),
                             nc::add(nc::scale(rgb, static_cast<T>(weights.rgb)),
                                     nc::scale(perc, static_cast<T>(weights.perc))));
        if (occ.defined())
            total = nc::add(total, occ);
        r.total = total;
        r.commit = out.quantized.commit.value().item();
        r.rgb = rgb.value().item();
        r.perc = perc.value().item();
        r.occ = occ.defined() ? occ.value().item() : 0.0;
        return r;
    }

    std::vector<splat::Camera> unit_cube_cameras(int count, int size, double distance, double fov_deg) {
        std::vector<splat::Camera> cams;
        const double golden = M_PI * (3.0 - std::sqrt(5.0));
        for (int i = 0; i < count; ++i) {
            // Fibonacci lattice restricted to |y| <= 0.8 keeps the up vector well conditioned.
            const double y = 0.8 - 1.6 * (i + 0.5) / count;
            const double r = std::sqrt(1.0 - y * y);
            const double a = golden * i;
            const std::array<double, 3> eye{0.5 + distance * r * std::cos(a), 0.5 + distance * y,
                                            0.5 + distance * r * std::sin(a)};
            cams.push_back(splat::Camera::look_at(eye, {0.5, 0.5, 0.5}, {0, 1, 0}, fov_deg * M_PI / 180.0, size, size));
        }
        return cams;
    }

    std::vector<TargetView> target_views(const gridfit::SparseGaussianGrid& grid,
                                         const std::vector<splat::Camera>& cams,
                                         const splat::RenderSettings& settings) {
        nc::NoGradGuard guard;
        const auto scene = gridfit::to_scene<float>(grid);
        std::vector<TargetView> out;
        for (const auto& c : cams)
            out.push_back({c, splat::render(scene, c, settings).image.value()});
        return out;
    }

    template <typename T>
    void train(Vqvae<T>& model, const std::vector<gridfit::SparseGaussianGrid>& grids, const TrainConfig& cfg,
               const FeatureExtractor<T>& phi, const std::function<void(const TrainProgress&)>& on_progress) {
        if (grids.empty())
            throw std::invalid_argument("train_vqvae: empty training set");
        nc::Rng rng(nc::derive_seed(cfg.seed, "vqvae.train"));
        const auto cams = unit_cube_cameras(cfg.target_views, cfg.image_size);
        std::vector<std::vector<TargetView>> targets;
        for (const auto& g : grids)
            targets.push_back(target_views(g, cams));
        nc::Adam<T> opt(model.params().vars(), {.lr = cfg.lr});
        const int batch = std::min<int>(cfg.batch, static_cast<int>(grids.size()));
        const int m = std::min(model.config().weights.renders, cfg.target_views);
        std::vector<std::size_t> order(grids.size());
        std::iota(order.begin(), order.end(), 0);
        std::size_t cursor = order.size();
        for (int step = 1; step <= cfg.steps; ++step) {
            const double progress = cfg.steps > 1 ? (step - 1.0) / (cfg.steps - 1.0) : 0.0;
            opt.state().hyper.lr = cfg.lr * (cfg.final_lr_fraction + (1 - cfg.final_lr_fraction) * 0.5 *
                                                                          (1 + std::cos(M_PI * progress)));
            std::vector<const gridfit::SparseGaussianGrid*> picked;
            std::vector<std::vector<const TargetView*>> views;
            for (int b = 0; b < batch; ++b) {
                if (cursor == order.size()) {
                    std::shuffle(order.begin(), order.end(), rng.engine());
                    cursor = 0;
                }
                const auto gi = order[cursor++];
                picked.push_back(&grids[gi]);
                std::vector<std::size_t> vi(cams.size());
                std::iota(vi.begin(), vi.end(), 0);
                std::shuffle(vi.begin(), vi.end(), rng.engine());
                std::vector<const TargetView*> vs;
                for (int k = 0; k < m; ++k)
                    vs.push_back(&targets[gi][vi[k]]);
                views.push_back(std::move(vs));
            }
            const auto theta = model.pack(picked);
            const auto out = model.forward(theta, true, &rng);
            const auto loss = compression_loss(model, out, views, model.config().weights, phi);
            opt.zero_grad();
            nc::backward(loss.total);
            opt.step();
            if (on_progress) {
                TrainProgress p;
                p.step = step;
                p.total = loss.total.value().item();
                p.commit = loss.commit;
                p.rgb = loss.rgb;
                p.perc = loss.perc;
                p.occ = loss.occ;
                p.missing = loss.missing;
                for (auto u : model.codebook().usage())
                    p.used_codes += u > 0;
                on_progress(p);
            }
        }
    }

#define L3DG_INSTANTIATE_VQ(T)                                                                                      \
    template struct ResBlock<T>;                                                                                    \
    template struct ConvBlock<T>;                                                                                   \
    template class Vqvae<T>;                                                                                        \
    template LossBreakdown<T> compression_loss(const Vqvae<T>&, const ForwardOutput<T>&,                           \
                                               const std::vector<std::vector<const TargetView*>>&,                  \
                                               const LossWeights&, const FeatureExtractor<T>&,                      \
                                               const splat::RenderSettings&);                                       \
    template void train(Vqvae<T>&, const std::vector<gridfit::SparseGaussianGrid>&, const TrainConfig&,            \
                        const FeatureExtractor<T>&, const std::function<void(const TrainProgress&)>&);

    L3DG_INSTANTIATE_VQ(float)
    L3DG_INSTANTIATE_VQ(double)

} // namespace l3dg::vq
