#pragma once

#include "l3dg/numcore/autodiff.hpp"
#include "l3dg/numcore/checkpoint.hpp"
#include "l3dg/numcore/random.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace l3dg::vq {

    constexpr std::int64_t kCodeDim = 4;

    struct CodebookConfig {
        std::int64_t size = 4096;
        double decay = 0.99;
        int dead_after = 200; // steps without assignment before an entry is re-seeded
    };

    template <typename T>
    struct QuantizeResult {
        nc::Var<T> z_q;     // [N, 4], straight-through towards z_e
        nc::Var<T> commit;  // mean over vectors of |z_e - sg(e)|^2
        std::vector<std::int32_t> indices;
    };

    /// K entries of dimension 4 trained by exponential moving averages.
    /// Invariant: cluster_size >= 0 and, for every entry with cluster_size > 0,
    /// entries = running_sum / cluster_size.
    template <typename T>
    class Codebook {
    public:
        explicit Codebook(CodebookConfig cfg = {});

        const CodebookConfig& config() const { return cfg_; }
        std::int64_t size() const { return cfg_.size; }
        bool initialized() const { return initialized_; }
        const nc::Tensor<T>& entries() const { return entries_; }
        const nc::Tensor<T>& cluster_size() const { return cluster_size_; }
        const nc::Tensor<T>& running_sum() const { return running_sum_; }
        const std::vector<std::int64_t>& usage() const { return usage_; }
        std::int64_t steps() const { return steps_; }

        /// Entries drawn uniformly (with replacement) from the rows of `z` [N, 4].
        void init_from(const nc::Tensor<T>& z, nc::Rng& rng);
        /// Overwrites the entries directly; clears EMA statistics.
        void set_entries(nc::Tensor<T> e);

        /// Index of the nearest entry in L2 (lowest index on ties).
        std::int32_t nearest(std::span<const T> v) const;

        /// Nearest-entry replacement with straight-through gradient. In
        /// training mode the EMA statistics and usage counters are updated;
        /// `rng` then re-seeds dead entries from rows of z_e.
        QuantizeResult<T> quantize(const nc::Var<T>& z_e, bool training, nc::Rng* rng = nullptr);

        /// One EMA step for the given assignments.
        void ema_update(const nc::Tensor<T>& z, std::span<const std::int32_t> indices, nc::Rng* rng);

        void save(nc::TensorMap<T>& out, const std::string& prefix) const;
        void load(const nc::TensorMap<T>& in, const std::string& prefix);

    private:
        CodebookConfig cfg_;
        bool initialized_ = false;
        nc::Tensor<T> entries_;      // [K, 4]
        nc::Tensor<T> cluster_size_; // [K]
        nc::Tensor<T> running_sum_;  // [K, 4]
        std::vector<std::int64_t> usage_;
        std::vector<std::int64_t> idle_;
        std::int64_t steps_ = 0;
    };

} // namespace l3dg::vq
