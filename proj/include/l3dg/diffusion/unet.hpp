#pragma once

#include "l3dg/numcore/neighbor_conv.hpp"
#include "l3dg/numcore/params.hpp"
#include "l3dg/numcore/random.hpp"

#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <vector>

namespace l3dg::diff {

    struct UNet3DConfig {
        int resolution = 32;                // spatial extent of the input grid
        std::int64_t channels = 5;          // input and output channels
        std::int64_t base = 32;             // channels at the first level
        std::vector<int> multipliers{1, 2, 4, 4};
        std::set<int> attention_resolutions{8, 4};
        std::int64_t head_channels = 64;
        int res_blocks = 1;                 // per level
        std::int64_t groups = 8;            // group-norm groups (clamped to divide the width)
        std::uint64_t seed = 0;
    };

    nlohmann::json unet_config_to_json(const UNet3DConfig& c);
    UNet3DConfig unet_config_from_json(const nlohmann::json& j);

    /// 3D UNet with timestep conditioning on channel-last [B, n, n, n, C]
    /// grids. Self-attention runs at the configured resolutions without
    /// positional encodings.
    template <typename T>
    class UNet3D {
    public:
        explicit UNet3D(UNet3DConfig cfg);

        const UNet3DConfig& config() const { return cfg_; }
        nc::ParamStore<T>& params() { return store_; }
        const nc::ParamStore<T>& params() const { return store_; }

        /// `x`: [B, n, n, n, C]; `t`: one timestep per batch entry.
        nc::Var<T> forward(const nc::Var<T>& x, const std::vector<int>& t) const;

        /// Resolutions (spatial extents) visited by the encoder path.
        std::vector<int> level_resolutions() const;

        /// Attention blocks in construction order, applied to [B * n^3, C] rows.
        std::vector<int> attention_sites() const;
        nc::Var<T> apply_attention(std::size_t i, const nc::Var<T>& x, std::int64_t batch, std::int64_t n) const;

        struct Norm {
            nc::Var<T> gamma, beta;
            std::int64_t groups = 1;
        };
        struct Res {
            Norm n1, n2;
            nc::Var<T> w1, b1, w2, b2, emb_w, emb_b;
            std::optional<nc::Var<T>> skip_w;
            std::int64_t cin = 0, cout = 0;
        };
        struct Attn {
            Norm norm;
            nc::Var<T> qkv_w, qkv_b, proj_w, proj_b;
            std::int64_t heads = 1;
        };
        struct Block {
            Res res;
            std::optional<Attn> attn;
        };

    private:
        nc::TablePtr table(std::int64_t batch, std::int64_t n, int kind) const;
        nc::Var<T> conv(const nc::Var<T>& x, std::int64_t batch, std::int64_t n, const nc::Var<T>& w,
                        const nc::Var<T>& b, int stride) const;
        nc::Var<T> norm_act(const nc::Var<T>& x, std::int64_t batch, const Norm& nm, bool act) const;
        nc::Var<T> res_forward(const Res& r, const nc::Var<T>& x, std::int64_t batch, std::int64_t n,
                               const nc::Var<T>& emb) const;
        nc::Var<T> attn_forward(const Attn& a, const nc::Var<T>& x, std::int64_t batch, std::int64_t n) const;

        Norm make_norm(const std::string& name, std::int64_t c);
        Res make_res(const std::string& name, std::int64_t cin, std::int64_t cout, nc::Rng& rng);
        Attn make_attn(const std::string& name, std::int64_t c, nc::Rng& rng);

        UNet3DConfig cfg_;
        nc::ParamStore<T> store_;
        std::int64_t time_dim_ = 0;
        nc::Var<T> temb_w1_, temb_b1_, temb_w2_, temb_b2_;
        nc::Var<T> in_w_, in_b_;
        std::vector<std::vector<Block>> down_;  // per level
        std::vector<std::pair<nc::Var<T>, nc::Var<T>>> downsample_; // stride-2 convs between levels
        std::vector<Block> mid_;
        std::vector<std::vector<Block>> up_;    // per level, deepest first
        std::vector<std::pair<nc::Var<T>, nc::Var<T>>> upsample_;   // convs after nearest upsampling
        Norm out_norm_;
        nc::Var<T> out_w_, out_b_;

        std::unique_ptr<std::mutex> table_mutex_ = std::make_unique<std::mutex>();
        mutable std::map<std::tuple<std::int64_t, std::int64_t, int>, nc::TablePtr> tables_;
    };

    /// Sinusoidal timestep features [B, dim].
    template <typename T>
    nc::Tensor<T> timestep_features(const std::vector<int>& t, std::int64_t dim);

} // namespace l3dg::diff
