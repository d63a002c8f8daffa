#pragma once

#include "l3dg/gridfit/grid.hpp"
#include "l3dg/sparseconv/layers.hpp"
#include "l3dg/splat/camera.hpp"
#include "l3dg/splat/render.hpp"
#include "l3dg/vqvae/codebook.hpp"
#include "l3dg/vqvae/perceptual.hpp"

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <vector>

namespace l3dg::vq {

    struct LossWeights {
        double commit = 0.25;
        double rgb = 12.5;
        double perc = 0.1;
        int renders = 4; // M
    };

    struct VqvaeConfig {
        int resolution = 32;     // input grid resolution; the latent lattice is resolution / 4
        std::int64_t width = 128; // stem channels; doubled by each downsampling stage
        CodebookConfig codebook{};
        LossWeights weights{};
        double prune_threshold = 0.5;
        std::uint64_t seed = 0;
    };

    nlohmann::json config_to_json(const VqvaeConfig& cfg);
    VqvaeConfig config_from_json(const nlohmann::json& j);

    /// conv-norm-relu, conv-norm, plus (projected) skip, relu.
    template <typename T>
    struct ResBlock {
        sparse::ConvLayer<T> conv1, conv2;
        sparse::NormLayer<T> norm1, norm2;
        std::optional<sparse::LinearLayer<T>> skip;

        static ResBlock create(nc::ParamStore<T>& store, const std::string& name, std::int64_t cin, std::int64_t cout,
                               nc::Rng& rng);
        sparse::SparseTensor<T> operator()(const sparse::SparseTensor<T>& x) const;
    };

    /// conv (stride 1 or 2, or generative transpose) followed by norm and relu.
    template <typename T>
    struct ConvBlock {
        enum class Kind { same, down, up };
        Kind kind = Kind::same;
        sparse::ConvLayer<T> conv;
        sparse::NormLayer<T> norm;

        static ConvBlock create(nc::ParamStore<T>& store, const std::string& name, std::int64_t cin, std::int64_t cout,
                                Kind kind, nc::Rng& rng);
        sparse::SparseTensor<T> operator()(const sparse::SparseTensor<T>& x) const;
    };

    template <typename T>
    struct DecodeOutput {
        sparse::SparseTensor<T> params; // stride-1 coordinates, [N, 23] raw Gaussian parameters
        std::vector<sparse::PruneResult<T>> prunes;
    };

    template <typename T>
    struct ForwardOutput {
        sparse::SparseTensor<T> z_e;
        QuantizeResult<T> quantized;
        DecodeOutput<T> decoded;
    };

    template <typename T>
    struct LossBreakdown {
        nc::Var<T> total;
        double commit = 0, rgb = 0, perc = 0, occ = 0;
        std::int64_t missing = 0;
    };

    /// Target view of one training scene: camera in unit-cube space and its
    /// rendering of the input grid.
    struct TargetView {
        splat::Camera camera;
        nc::Tensor<float> image;
    };

    /// Sparse-convolutional VQ-VAE between grid-assigned Gaussians and a
    /// 4-channel latent at four times the voxel size.
    template <typename T>
    class Vqvae {
    public:
        explicit Vqvae(VqvaeConfig cfg);

        const VqvaeConfig& config() const { return cfg_; }
        nc::ParamStore<T>& params() { return store_; }
        const nc::ParamStore<T>& params() const { return store_; }
        Codebook<T>& codebook() { return codebook_; }
        const Codebook<T>& codebook() const { return codebook_; }

        /// Packs grids into one batched stride-1 sparse tensor with 23 features.
        sparse::SparseTensor<T> pack(const std::vector<const gridfit::SparseGaussianGrid*>& grids) const;

        sparse::SparseTensor<T> encode(const sparse::SparseTensor<T>& theta) const;
        /// Two generative upsampling stages, each pruned by its occupancy
        /// classifier. With `targets` (the stride-1 input coordinates) pruning is
        /// teacher-forced and BCE losses are produced.
        DecodeOutput<T> decode(const sparse::SparseTensor<T>& z_q, const sparse::CoordSet* targets = nullptr) const;

        ForwardOutput<T> forward(const sparse::SparseTensor<T>& theta, bool training, nc::Rng* rng);

        /// Full inference round trip of one grid (no EMA update, classifier pruning).
        gridfit::SparseGaussianGrid reconstruct(const gridfit::SparseGaussianGrid& grid);
        /// Quantized latent of one grid.
        sparse::SparseTensor<T> latent(const gridfit::SparseGaussianGrid& grid);
        /// Inference decode of batch entry 0 of `z_q` into a grid.
        gridfit::SparseGaussianGrid decode_grid(const sparse::SparseTensor<T>& z_q) const;

        /// Splits decoder output rows by batch index into renderable scenes.
        std::vector<splat::SplatScene<T>> scenes(const sparse::SparseTensor<T>& params, int batch_size) const;

        void save(const std::filesystem::path& dir) const;
        static Vqvae load(const std::filesystem::path& dir);
        nlohmann::json manifest() const;

    private:
        VqvaeConfig cfg_;
        nc::ParamStore<T> store_;
        Codebook<T> codebook_;

        ConvBlock<T> enc_stem_;
        std::vector<ResBlock<T>> enc_res_; // two per downsampling stage, then the bottleneck block
        std::vector<ConvBlock<T>> enc_down_;
        sparse::ConvLayer<T> to_latent_;

        ConvBlock<T> dec_stem_;
        std::vector<ResBlock<T>> dec_res_; // two per upsampling stage, then two tail blocks
        std::vector<ConvBlock<T>> dec_up_;
        std::vector<sparse::LinearLayer<T>> classifiers_;
        sparse::ConvLayer<T> to_params_;
    };

    /// Weighted compression loss for decoded scenes against target renders.
    /// `views[b]` holds the M target views of batch entry b.
    template <typename T>
    LossBreakdown<T> compression_loss(const Vqvae<T>& model, const ForwardOutput<T>& out,
                                      const std::vector<std::vector<const TargetView*>>& views,
                                      const LossWeights& weights, const FeatureExtractor<T>& phi,
                                      const splat::RenderSettings& settings = {});

    /// Cameras on a sphere around the unit-cube centre, in unit-cube space.
    std::vector<splat::Camera> unit_cube_cameras(int count, int size, double distance = 2.0, double fov_deg = 40.0);

    /// Target renderings of `grid` from `cams`.
    std::vector<TargetView> target_views(const gridfit::SparseGaussianGrid& grid,
                                         const std::vector<splat::Camera>& cams,
                                         const splat::RenderSettings& settings = {});

    struct TrainConfig {
        int steps = 2000;
        double lr = 1e-3;
        double final_lr_fraction = 0.05; // cosine decay from lr to lr * fraction over `steps`
        int batch = 1;
        int target_views = 24;
        int image_size = 64;
        std::uint64_t seed = 0;
    };

    nlohmann::json train_config_to_json(const TrainConfig& c);
    TrainConfig train_config_from_json(const nlohmann::json& j);

    struct TrainProgress {
        int step = 0;
        double total = 0, commit = 0, rgb = 0, perc = 0, occ = 0;
        std::int64_t missing = 0, used_codes = 0;
    };

    template <typename T>
    void train(Vqvae<T>& model, const std::vector<gridfit::SparseGaussianGrid>& grids, const TrainConfig& cfg,
               const FeatureExtractor<T>& phi, const std::function<void(const TrainProgress&)>& on_progress = {});

} // namespace l3dg::vq
