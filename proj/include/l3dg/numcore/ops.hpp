#pragma once

#include "l3dg/numcore/autodiff.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace l3dg::nc {

    // Element-wise arithmetic. Binary operands must share a shape.
    template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
    template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
    template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
    template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
    template <typename T> Var<T> neg(const Var<T>& a);
    template <typename T> Var<T> scale(const Var<T>& a, T s);
    template <typename T> Var<T> add_scalar(const Var<T>& a, T s);

    template <typename T> Var<T> exp(const Var<T>& a);
    template <typename T> Var<T> log(const Var<T>& a);
    template <typename T> Var<T> tanh(const Var<T>& a);
    template <typename T> Var<T> sigmoid(const Var<T>& a);
    template <typename T> Var<T> relu(const Var<T>& a);
    template <typename T> Var<T> silu(const Var<T>& a);
    template <typename T> Var<T> square(const Var<T>& a);
    template <typename T> Var<T> sqrt(const Var<T>& a);
    template <typename T> Var<T> abs(const Var<T>& a);

    template <typename T> Var<T> sum(const Var<T>& a);
    template <typename T> Var<T> mean(const Var<T>& a);

    template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);

    // Channel-last broadcasting: the trailing extent is the channel axis.
    template <typename T> Var<T> add_bias(const Var<T>& x, const Var<T>& bias);
    template <typename T> Var<T> mul_channels(const Var<T>& x, const Var<T>& scale);
    /// x: [B, ..., C], e: [B, C]; adds e[b] to every site of sample b.
    template <typename T> Var<T> add_per_batch(const Var<T>& x, const Var<T>& e);

    /// a: [M, K], b: [K, N].
    template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
    /// x: [..., K], w: [K, N], optional bias [N]. Leading extents are preserved.
    template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias = {});

    template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& parts);
    template <typename T> Var<T> slice_channels(const Var<T>& x, std::int64_t begin, std::int64_t end);

    /// Rows of a [N, C] view; index -1 yields a zero row. Output shape [M, C].
    template <typename T> Var<T> gather_rows(const Var<T>& x, std::span<const std::int64_t> rows);

    /// Group normalization over x viewed as [B, S, C] with per-channel affine.
    template <typename T>
    Var<T> group_norm(const Var<T>& x, std::int64_t batch, std::int64_t groups, const Var<T>& gamma,
                      const Var<T>& beta, T eps = T(1e-5));

    /// Multi-head scaled dot-product self-attention. qkv: [B, N, 3C] laid out
    /// as [q | k | v]; returns [B, N, C].
    template <typename T> Var<T> self_attention(const Var<T>& qkv, std::int64_t heads);

    // Losses (mean reductions).
    template <typename T> Var<T> l1_loss(const Var<T>& a, const Var<T>& b);
    template <typename T> Var<T> mse_loss(const Var<T>& a, const Var<T>& b);
    template <typename T> Var<T> bce_with_logits(const Var<T>& logits, std::span<const T> labels);

    template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
    template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
    template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
    template <typename T> Var<T> operator*(const Var<T>& a, T s) { return scale(a, s); }
    template <typename T> Var<T> operator*(T s, const Var<T>& a) { return scale(a, s); }
    template <typename T> Var<T> operator-(const Var<T>& a) { return neg(a); }

} // namespace l3dg::nc
