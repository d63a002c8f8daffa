#include "l3dg/diffusion/unet.hpp"

#include "l3dg/numcore/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace l3dg::diff {

    using Json = nlohmann::json;

    Json unet_config_to_json(const UNet3DConfig& c) {
        return {{"resolution", c.resolution},
                {"channels", c.channels},
                {"base", c.base},
                {"multipliers", c.multipliers},
                {"attention_resolutions", c.attention_resolutions},
                {"head_channels", c.head_channels},
                {"res_blocks", c.res_blocks},
                {"groups", c.groups},
                {"seed", c.seed}};
    }

    UNet3DConfig unet_config_from_json(const Json& j) {
        static const std::set<std::string> keys{"resolution", "channels",     "base",   "multipliers", "attention_resolutions",
                                                "head_channels", "res_blocks", "groups", "seed"};
        if (!j.is_object())
            throw std::invalid_argument("unet config: expected a JSON object");
        for (const auto& [k, v] : j.items())
            if (!keys.count(k))
                throw std::invalid_argument("unet config: unknown key '" + k + "'");
        UNet3DConfig c;
        c.resolution = j.value("resolution", c.resolution);
        c.channels = j.value("channels", c.channels);
        c.base = j.value("base", c.base);
        c.multipliers = j.value("multipliers", c.multipliers);
        c.attention_resolutions = j.value("attention_resolutions", c.attention_resolutions);
        c.head_channels = j.value("head_channels", c.head_channels);
        c.res_blocks = j.value("res_blocks", c.res_blocks);
        c.groups = j.value("groups", c.groups);
        c.seed = j.value("seed", c.seed);
        return c;
    }

    template <typename T>
    nc::Tensor<T> timestep_features(const std::vector<int>& t, std::int64_t dim) {
        const auto b = static_cast<std::int64_t>(t.size());
        const auto half = dim / 2;
        nc::Tensor<T> out({b, dim});
        for (std::int64_t i = 0; i < b; ++i)
            for (std::int64_t k = 0; k < half; ++k) {
                const double f = std::exp(-std::log(10000.0) * k / half);
                out[i * dim + k] = static_cast<T>(std::sin(t[i] * f));
                out[i * dim + half + k] = static_cast<T>(std::cos(t[i] * f));
            }
        return out;
    }

    namespace {
        std::int64_t fit_groups(std::int64_t want, std::int64_t c) {
            auto g = std::min(want, c);
            while (c % g)
                --g;
            return g;
        }
    } // namespace

    template <typename T>
    typename UNet3D<T>::Norm UNet3D<T>::make_norm(const std::string& name, std::int64_t c) {
        return {store_.add(name + ".gamma", nc::Tensor<T>({c}, T(1))), store_.add(name + ".beta", nc::Tensor<T>({c})),
                fit_groups(cfg_.groups, c)};
    }

    template <typename T>
    typename UNet3D<T>::Res UNet3D<T>::make_res(const std::string& name, std::int64_t cin, std::int64_t cout,
                                                nc::Rng& rng) {
        Res r;
        r.cin = cin;
        r.cout = cout;
        r.n1 = make_norm(name + ".norm1", cin);
        r.w1 = store_.add(name + ".conv1.weight", nc::fan_in_uniform<T>({27 * cin, cout}, 27 * cin, rng));
        r.b1 = store_.add(name + ".conv1.bias", nc::Tensor<T>({cout}));
        r.emb_w = store_.add(name + ".emb.weight", nc::fan_in_uniform<T>({time_dim_, cout}, time_dim_, rng));
        r.emb_b = store_.add(name + ".emb.bias", nc::Tensor<T>({cout}));
        r.n2 = make_norm(name + ".norm2", cout);
        // Zero-initialised residual branch: each block starts as its skip path.
        r.w2 = store_.add(name + ".conv2.weight", nc::Tensor<T>({27 * cout, cout}));
        r.b2 = store_.add(name + ".conv2.bias", nc::Tensor<T>({cout}));
        if (cin != cout)
            r.skip_w = store_.add(name + ".skip.weight", nc::fan_in_uniform<T>({cin, cout}, cin, rng));
        return r;
    }

    template <typename T>
    typename UNet3D<T>::Attn UNet3D<T>::make_attn(const std::string& name, std::int64_t c, nc::Rng& rng) {
        Attn a;
        a.heads = std::max<std::int64_t>(1, c / cfg_.head_channels);
        while (c % a.heads)
            --a.heads;
        a.norm = make_norm(name + ".norm", c);
        a.qkv_w = store_.add(name + ".qkv.weight", nc::fan_in_uniform<T>({c, 3 * c}, c, rng));
        a.qkv_b = store_.add(name + ".qkv.bias", nc::Tensor<T>({3 * c}));
        a.proj_w = store_.add(name + ".proj.weight", nc::Tensor<T>({c, c}));
        a.proj_b = store_.add(name + ".proj.bias", nc::Tensor<T>({c}));
        return a;
    }

    template <typename T>
    UNet3D<T>::UNet3D(UNet3DConfig cfg) : cfg_(std::move(cfg)) {
        const int levels = static_cast<int>(cfg_.multipliers.size());
        if (levels == 0 || cfg_.base <= 0 || cfg_.channels <= 0 || cfg_.res_blocks <= 0 || cfg_.head_channels <= 0)
            throw std::invalid_argument("unet config: empty or non-positive layout");
        if (cfg_.resolution % (1 << (levels - 1)))
            throw std::invalid_argument("unet config: resolution must be divisible by 2^(levels-1)");
        const auto res = level_resolutions();
        for (int a : cfg_.attention_resolutions)
            if (std::find(res.begin(), res.end(), a) == res.end())
                throw std::invalid_argument("unet config: attention resolution " + std::to_string(a) +
                                            " is not a level resolution");
        nc::Rng rng(nc::derive_seed(cfg_.seed, "unet.init"));
        time_dim_ = 4 * cfg_.base;
        temb_w1_ = store_.add("time.fc1.weight", nc::fan_in_uniform<T>({cfg_.base, time_dim_}, cfg_.base, rng));
        temb_b1_ = store_.add("time.fc1.bias", nc::Tensor<T>({time_dim_}));
        temb_w2_ = store_.add("time.fc2.weight", nc::fan_in_uniform<T>({time_dim_, time_dim_}, time_dim_, rng));
        temb_b2_ = store_.add("time.fc2.bias", nc::Tensor<T>({time_dim_}));
        in_w_ = store_.add("in.weight", nc::fan_in_uniform<T>({27 * cfg_.channels, cfg_.base}, 27 * cfg_.channels, rng));
        in_b_ = store_.add("in.bias", nc::Tensor<T>({cfg_.base}));

        std::vector<std::int64_t> skip_ch{cfg_.base};
        std::int64_t ch = cfg_.base;
        down_.resize(levels);
        for (int l = 0; l < levels; ++l) {
            const auto out = cfg_.base * cfg_.multipliers[l];
            for (int r = 0; r < cfg_.res_blocks; ++r) {
                const auto p = "down" + std::to_string(l) + "." + std::to_string(r);
                Block b{make_res(p + ".res", ch, out, rng), std::nullopt};
                if (cfg_.attention_resolutions.count(res[l]))
                    b.attn = make_attn(p + ".attn", out, rng);
                down_[l].push_back(std::move(b));
                ch = out;
                skip_ch.push_back(ch);
            }
            if (l + 1 < levels) {
                const auto p = "down" + std::to_string(l) + ".downsample";
                downsample_.emplace_back(store_.add(p + ".weight", nc::fan_in_uniform<T>({27 * ch, ch}, 27 * ch, rng)),
                                         store_.add(p + ".bias", nc::Tensor<T>({ch})));
                skip_ch.push_back(ch);
            }
        }
        {
            Block b{make_res("mid.0.res", ch, ch, rng), std::nullopt};
            if (cfg_.attention_resolutions.count(res.back()))
                b.attn = make_attn("mid.0.attn", ch, rng);
            mid_.push_back(std::move(b));
            mid_.push_back(Block{make_res("mid.1.res", ch, ch, rng), std::nullopt});
        }
        up_.resize(levels);
        for (int l = levels - 1; l >= 0; --l) {
            const auto out = cfg_.base * cfg_.multipliers[l];
            for (int r = 0; r <= cfg_.res_blocks; ++r) {
                const auto p = "up" + std::to_string(l) + "." + std::to_string(r);
                const auto sc = skip_ch.back();
                skip_ch.pop_back();
                Block b{make_res(p + ".res", ch + sc, out, rng), std::nullopt};
                if (cfg_.attention_resolutions.count(res[l]))
                    b.attn = make_attn(p + ".attn", out, rng);
                up_[l].push_back(std::move(b));
                ch = out;
            }
            if (l > 0) {
                const auto p = "up" + std::to_string(l) + ".upsample";
                upsample_.emplace_back(store_.add(p + ".weight", nc::fan_in_uniform<T>({27 * ch, ch}, 27 * ch, rng)),
                                       store_.add(p + ".bias", nc::Tensor<T>({ch})));
            }
        }
        out_norm_ = make_norm("out.norm", ch);
        out_w_ = store_.add("out.weight", nc::Tensor<T>({27 * ch, cfg_.channels}));
        out_b_ = store_.add("out.bias", nc::Tensor<T>({cfg_.channels}));
    }

    template <typename T>
    std::vector<int> UNet3D<T>::level_resolutions() const {
        std::vector<int> r;
        for (std::size_t l = 0; l < cfg_.multipliers.size(); ++l)
            r.push_back(cfg_.resolution >> l);
        return r;
    }

    template <typename T>
    std::vector<int> UNet3D<T>::attention_sites() const {
        std::vector<int> out;
        const auto res = level_resolutions();
        for (std::size_t l = 0; l < down_.size(); ++l)
            for (const auto& b : down_[l])
                if (b.attn)
                    out.push_back(res[l]);
        for (const auto& b : mid_)
            if (b.attn)
                out.push_back(res.back());
        for (std::size_t l = up_.size(); l-- > 0;)
            for (const auto& b : up_[l])
                if (b.attn)
                    out.push_back(res[l]);
        return out;
    }

    template <typename T>
    nc::Var<T> UNet3D<T>::apply_attention(std::size_t i, const nc::Var<T>& x, std::int64_t batch,
                                          std::int64_t n) const {
        std::vector<const Attn*> all;
        for (const auto& level : down_)
            for (const auto& b : level)
                if (b.attn)
                    all.push_back(&*b.attn);
        for (const auto& b : mid_)
            if (b.attn)
                all.push_back(&*b.attn);
        for (std::size_t l = up_.size(); l-- > 0;)
            for (const auto& b : up_[l])
                if (b.attn)
                    all.push_back(&*b.attn);
        return attn_forward(*all.at(i), x, batch, n);
    }

    template <typename T>
    nc::TablePtr UNet3D<T>::table(std::int64_t batch, std::int64_t n, int kind) const {
        std::lock_guard lock(*table_mutex_);
        auto& slot = tables_[{batch, n, kind}];
        if (!slot) {
            switch (kind) {
            case 0: slot = std::make_shared<const nc::NeighborTable>(nc::dense_conv3d_table(batch, n, n, n, 1)); break;
            case 1: slot = std::make_shared<const nc::NeighborTable>(nc::dense_conv3d_table(batch, n, n, n, 2)); break;
            default: slot = std::make_shared<const nc::NeighborTable>(nc::dense_upsample3d_table(batch, n, n, n)); break;
            }
        }
        return slot;
    }

    template <typename T>
    nc::Var<T> UNet3D<T>::conv(const nc::Var<T>& x, std::int64_t batch, std::int64_t n, const nc::Var<T>& w,
                               const nc::Var<T>& b, int stride) const {
        return nc::add_bias(nc::neighbor_conv(x, table(batch, n, stride == 1 ? 0 : 1), w), b);
    }

    template <typename T>
    nc::Var<T> UNet3D<T>::norm_act(const nc::Var<T>& x, std::int64_t batch, const Norm& nm, bool act) const {
        auto y = nc::group_norm(x, batch, nm.groups, nm.gamma, nm.beta);
        return act ? nc::silu(y) : y;
    }

    template <typename T>
    nc::Var<T> UNet3D<T>::res_forward(const Res& r, const nc::Var<T>& x, std::int64_t batch, std::int64_t n,
                                      const nc::Var<T>& emb) const {
        const auto sites = n * n * n;
        auto h = conv(norm_act(x, batch, r.n1, true), batch, n, r.w1, r.b1, 1);
        auto e = nc::linear(emb, r.emb_w, r.emb_b);
        h = nc::reshape(nc::add_per_batch(nc::reshape(h, {batch, sites, r.cout}), e), {batch * sites, r.cout});
        h = conv(norm_act(h, batch, r.n2, true), batch, n, r.w2, r.b2, 1);
        return nc::add(r.skip_w ? nc::linear(x, *r.skip_w) : x, h);
    }

    template <typename T>
    nc::Var<T> UNet3D<T>::attn_forward(const Attn& a, const nc::Var<T>& x, std::int64_t batch, std::int64_t n) const {
        const auto sites = n * n * n;
        const auto c = x.dim(1);
        auto qkv = nc::linear(norm_act(x, batch, a.norm, false), a.qkv_w, a.qkv_b);
        auto att = nc::self_attention(nc::reshape(qkv, {batch, sites, 3 * c}), a.heads);
        return nc::add(x, nc::linear(nc::reshape(att, {batch * sites, c}), a.proj_w, a.proj_b));
    }

    template <typename T>
    nc::Var<T> UNet3D<T>::forward(const nc::Var<T>& x, const std::vector<int>& t) const {
        const auto& s = x.shape();
        if (s.size() != 5 || s[1] != cfg_.resolution || s[2] != cfg_.resolution || s[3] != cfg_.resolution ||
            s[4] != cfg_.channels)
            throw nc::ShapeError("unet expects [B, " + std::to_string(cfg_.resolution) + "^3, " +
                                 std::to_string(cfg_.channels) + "], got " + nc::shape_str(s));
        const auto batch = s[0];
        if (static_cast<std::int64_t>(t.size()) != batch)
            throw nc::ShapeError("unet: one timestep per batch entry required");
        auto emb = nc::Var<T>(timestep_features<T>(t, cfg_.base));
        emb = nc::linear(nc::silu(nc::linear(emb, temb_w1_, temb_b1_)), temb_w2_, temb_b2_);
        const auto emb_act = nc::silu(emb);

        std::int64_t n = cfg_.resolution;
        auto h = conv(nc::reshape(x, {batch * n * n * n, cfg_.channels}), batch, n, in_w_, in_b_, 1);
        std::vector<nc::Var<T>> skips{h};
        const int levels = static_cast<int>(cfg_.multipliers.size());
        auto run = [&](const Block& b, const nc::Var<T>& in) {
            auto y = res_forward(b.res, in, batch, n, emb_act);
            return b.attn ? attn_forward(*b.attn, y, batch, n) : y;
        };
        for (int l = 0; l < levels; ++l) {
            for (const auto& b : down_[l]) {
                h = run(b, h);
                skips.push_back(h);
            }
            if (l + 1 < levels) {
                h = conv(h, batch, n, downsample_[l].first, downsample_[l].second, 2);
                n /= 2;
                skips.push_back(h);
            }
        }
        for (const auto& b : mid_)
            h = run(b, h);
        for (int l = levels - 1, u = 0; l >= 0; --l) {
            for (const auto& b : up_[l]) {
                h = nc::concat_channels<T>({h, skips.back()});
                skips.pop_back();
                h = run(b, h);
            }
            if (l > 0) {
                const auto tab = table(batch, n, 2);
                std::vector<std::int64_t> rows(tab->rows.begin(), tab->rows.end());
                h = nc::gather_rows(h, std::span<const std::int64_t>(rows));
                n *= 2;
                h = conv(h, batch, n, upsample_[u].first, upsample_[u].second, 1);
                ++u;
            }
        }
        h = conv(norm_act(h, batch, out_norm_, true), batch, n, out_w_, out_b_, 1);
        return nc::reshape(h, s);
    }

    template class UNet3D<float>;
    template class UNet3D<double>;
    template nc::Tensor<float> timestep_features(const std::vector<int>&, std::int64_t);
    template nc::Tensor<double> timestep_features(const std::vector<int>&, std::int64_t);

} // namespace l3dg::diff
