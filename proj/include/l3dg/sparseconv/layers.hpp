#pragma once

#include "l3dg/numcore/params.hpp"
#include "l3dg/numcore/random.hpp"
#include "l3dg/sparseconv/sparse_tensor.hpp"

#include <optional>
#include <string>

namespace l3dg::sparse {

    /// Kernel-size-3 convolution weights laid out [27 * Cin, Cout].
    template <typename T>
    struct ConvLayer {
        nc::Var<T> weight;
        nc::Var<T> bias; // may be undefined
        std::int64_t cin = 0, cout = 0;

        static ConvLayer create(nc::ParamStore<T>& store, const std::string& name, std::int64_t cin,
                                std::int64_t cout, nc::Rng& rng, bool with_bias = true);
    };

    /// Per-channel affine normalisation over all active coordinates.
    template <typename T>
    struct NormLayer {
        nc::Var<T> gamma, beta;

        static NormLayer create(nc::ParamStore<T>& store, const std::string& name, std::int64_t channels);
    };

    /// Linear occupancy classifier, one logit per coordinate.
    template <typename T>
    struct LinearLayer {
        nc::Var<T> weight; // [Cin, Cout]
        nc::Var<T> bias;   // [Cout]

        static LinearLayer create(nc::ParamStore<T>& store, const std::string& name, std::int64_t cin,
                                  std::int64_t cout, nc::Rng& rng);
    };

    /// Stride 1 keeps the coordinates; stride 2 maps them to floor(c / 2s) * 2s.
    template <typename T>
    SparseTensor<T> sparse_conv(const SparseTensor<T>& x, const ConvLayer<T>& layer, int stride = 1);

    /// Halves the stride and generates every in-bounds coordinate c + k * s/2.
    template <typename T>
    SparseTensor<T> generative_transpose_conv(const SparseTensor<T>& x, const ConvLayer<T>& layer);

    /// Normalisation with statistics of the current input (eps 1e-5).
    template <typename T>
    SparseTensor<T> batch_norm(const SparseTensor<T>& x, const NormLayer<T>& norm);

    template <typename T>
    SparseTensor<T> relu(const SparseTensor<T>& x);

    /// Feature-wise sum of two tensors on the same coordinate set.
    template <typename T>
    SparseTensor<T> add(const SparseTensor<T>& a, const SparseTensor<T>& b);

    template <typename T>
    SparseTensor<T> linear(const SparseTensor<T>& x, const LinearLayer<T>& layer);

    template <typename T>
    struct PruneResult {
        SparseTensor<T> pruned;
        nc::Var<T> logits; // [N], one per candidate
        nc::Var<T> bce;    // defined only when targets were given
        std::int64_t missing = 0; // target coordinates absent from the candidates
    };

    /// With targets: BCE over the candidates (label = membership) and pruning
    /// to the target coordinates. Without: keeps sigmoid(logit) > threshold.
    template <typename T>
    PruneResult<T> occupancy_prune(const SparseTensor<T>& x, const LinearLayer<T>& classifier,
                                   const CoordSet* targets = nullptr, double threshold = 0.5);

    /// Rows of `x` whose coordinates are kept, as a new tensor.
    template <typename T>
    SparseTensor<T> select(const SparseTensor<T>& x, const std::vector<std::int64_t>& rows);

} // namespace l3dg::sparse
