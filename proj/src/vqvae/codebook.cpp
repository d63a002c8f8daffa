#include "l3dg/vqvae/codebook.hpp"

#include <limits>
#include <stdexcept>

namespace l3dg::vq {

    template <typename T>
    Codebook<T>::Codebook(CodebookConfig cfg)
        : cfg_(cfg),
          entries_({cfg.size, kCodeDim}),
          cluster_size_({cfg.size}),
          running_sum_({cfg.size, kCodeDim}),
          usage_(cfg.size, 0),
          idle_(cfg.size, 0) {
        if (cfg.size <= 0)
            throw std::invalid_argument("codebook size must be positive");
        if (!(cfg.decay > 0 && cfg.decay < 1))
            throw std::invalid_argument("codebook decay must lie in (0, 1)");
    }

    template <typename T>
    void Codebook<T>::init_from(const nc::Tensor<T>& z, nc::Rng& rng) {
        const auto n = z.dim(0);
        if (n == 0)
            throw std::invalid_argument("codebook init needs at least one encoder output");
        for (std::int64_t k = 0; k < cfg_.size; ++k) {
            const auto r = rng.randint(0, n);
            for (std::int64_t j = 0; j < kCodeDim; ++j)
                entries_[k * kCodeDim + j] = z[r * kCodeDim + j];
        }
        cluster_size_ = nc::Tensor<T>({cfg_.size});
        running_sum_ = nc::Tensor<T>({cfg_.size, kCodeDim});
        initialized_ = true;
    }

    template <typename T>
    void Codebook<T>::set_entries(nc::Tensor<T> e) {
        if (e.shape() != nc::Shape{cfg_.size, kCodeDim})
            throw nc::ShapeError("codebook entries must be [K, 4]");
        entries_ = std::move(e);
        cluster_size_ = nc::Tensor<T>({cfg_.size});
        running_sum_ = nc::Tensor<T>({cfg_.size, kCodeDim});
        initialized_ = true;
    }

    template <typename T>
    std::int32_t Codebook<T>::nearest(std::span<const T> v) const {
        std::int32_t best = 0;
        T best_d = std::numeric_limits<T>::infinity();
        for (std::int64_t k = 0; k < cfg_.size; ++k) {
            T d = 0;
            for (std::int64_t j = 0; j < kCodeDim; ++j) {
                const T diff = v[j] - entries_[k * kCodeDim + j];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = static_cast<std::int32_t>(k);
            }
        }
        return best;
    }

    template <typename T>
    QuantizeResult<T> Codebook<T>::quantize(const nc::Var<T>& z_e, bool training, nc::Rng* rng) {
        const auto& z = z_e.value();
        if (z.rank() != 2 || z.dim(1) != kCodeDim)
            throw nc::ShapeError("quantize: expected [N, 4] features, got " + nc::shape_str(z.shape()));
        if (!initialized_)
            throw std::logic_error("quantize: codebook not initialised");
        const auto n = z.dim(0);
        QuantizeResult<T> r;
        r.indices.resize(n);
        nc::Tensor<T> q({n, kCodeDim});
        T commit = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            const auto k = nearest(std::span<const T>(z.data().data() + i * kCodeDim, kCodeDim));
            r.indices[i] = k;
            for (std::int64_t j = 0; j < kCodeDim; ++j) {
                q[i * kCodeDim + j] = entries_[k * kCodeDim + j];
                const T d = z[i * kCodeDim + j] - q[i * kCodeDim + j];
                commit += d * d;
            }
        }
        const T count = n > 0 ? static_cast<T>(n) : T(1);
        // Straight-through: the gradient reaching z_q is copied unchanged to z_e.
        r.z_q = nc::record<T>("quantize", q, {z_e}, [](nc::Node<T>& self) {
            if (auto* g = nc::parent_grad(self, 0))
                for (std::int64_t i = 0; i < g->numel(); ++i)
                    (*g)[i] += self.grad[i];
        });
        auto snapped = q;
        r.commit = nc::record<T>("commit", nc::Tensor<T>::scalar(commit / count), {z_e},
                                 [snapped, count](nc::Node<T>& self) {
                                     if (auto* g = nc::parent_grad(self, 0)) {
                                         const auto& zv = self.parents[0]->value;
                                         const T s = 2 * self.grad[0] / count;
                                         for (std::int64_t i = 0; i < g->numel(); ++i)
                                             (*g)[i] += s * (zv[i] - snapped[i]);
                                     }
                                 });
        if (training)
            ema_update(z, r.indices, rng);
        return r;
    }

    template <typename T>
    void Codebook<T>::ema_update(const nc::Tensor<T>& z, std::span<const std::int32_t> indices, nc::Rng* rng) {
        const T g = static_cast<T>(cfg_.decay), h = T(1) - g;
        std::vector<T> counts(cfg_.size, T(0));
        std::vector<T> sums(cfg_.size * kCodeDim, T(0));
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const auto k = indices[i];
            counts[k] += 1;
            for (std::int64_t j = 0; j < kCodeDim; ++j)
                sums[k * kCodeDim + j] += z[i * kCodeDim + j];
        }
        for (std::int64_t k = 0; k < cfg_.size; ++k) {
            cluster_size_[k] = g * cluster_size_[k] + h * counts[k];
            for (std::int64_t j = 0; j < kCodeDim; ++j)
                running_sum_[k * kCodeDim + j] = g * running_sum_[k * kCodeDim + j] + h * sums[k * kCodeDim + j];
            if (counts[k] > 0) {
                usage_[k] += static_cast<std::int64_t>(counts[k]);
                idle_[k] = 0;
            } else {
                ++idle_[k];
            }
            if (cluster_size_[k] > 0)
                for (std::int64_t j = 0; j < kCodeDim; ++j)
                    entries_[k * kCodeDim + j] = running_sum_[k * kCodeDim + j] / cluster_size_[k];
        }
        ++steps_;
        if (!rng || indices.empty())
            return;
        for (std::int64_t k = 0; k < cfg_.size; ++k) {
            if (idle_[k] < cfg_.dead_after)
                continue;
            const auto r = rng->randint(0, static_cast<std::int64_t>(indices.size()));
            // Keeping cluster_size preserves the EMA count total.
            for (std::int64_t j = 0; j < kCodeDim; ++j) {
                entries_[k * kCodeDim + j] = z[r * kCodeDim + j];
                running_sum_[k * kCodeDim + j] = z[r * kCodeDim + j] * cluster_size_[k];
            }
            idle_[k] = 0;
        }
    }

    template <typename T>
    void Codebook<T>::save(nc::TensorMap<T>& out, const std::string& prefix) const {
        out[prefix + "entries"] = entries_;
        out[prefix + "cluster_size"] = cluster_size_;
        out[prefix + "running_sum"] = running_sum_;
        nc::Tensor<T> usage({cfg_.size});
        for (std::int64_t k = 0; k < cfg_.size; ++k)
            usage[k] = static_cast<T>(usage_[k]);
        out[prefix + "usage"] = usage;
        nc::Tensor<T> idle({cfg_.size});
        for (std::int64_t k = 0; k < cfg_.size; ++k)
            idle[k] = static_cast<T>(idle_[k]);
        out[prefix + "idle"] = idle;
        out[prefix + "steps"] = nc::Tensor<T>({1}, static_cast<T>(steps_));
    }

    template <typename T>
    void Codebook<T>::load(const nc::TensorMap<T>& in, const std::string& prefix) {
        auto get = [&](const std::string& name, const nc::Shape& shape) -> const nc::Tensor<T>& {
            const auto it = in.find(prefix + name);
            if (it == in.end())
                throw nc::CheckpointError("checkpoint lacks " + prefix + name);
            if (it->second.shape() != shape)
                throw nc::CheckpointError(prefix + name + " has shape " + nc::shape_str(it->second.shape()));
            return it->second;
        };
        entries_ = get("entries", {cfg_.size, kCodeDim});
        cluster_size_ = get("cluster_size", {cfg_.size});
        running_sum_ = get("running_sum", {cfg_.size, kCodeDim});
        const auto& usage = get("usage", {cfg_.size});
        const auto& idle = get("idle", {cfg_.size});
        for (std::int64_t k = 0; k < cfg_.size; ++k) {
            usage_[k] = static_cast<std::int64_t>(usage[k]);
            idle_[k] = static_cast<std::int64_t>(idle[k]);
        }
        steps_ = static_cast<std::int64_t>(get("steps", {1})[0]);
        initialized_ = true;
    }

    template class Codebook<float>;
    template class Codebook<double>;

} // namespace l3dg::vq
