#include "l3dg/sparseconv/layers.hpp"

#include "l3dg/numcore/ops.hpp"

#include <cmath>

namespace l3dg::sparse {

    template <typename T>
    ConvLayer<T> ConvLayer<T>::create(nc::ParamStore<T>& store, const std::string& name, std::int64_t cin,
                                      std::int64_t cout, nc::Rng& rng, bool with_bias) {
        ConvLayer l;
        l.cin = cin;
        l.cout = cout;
        // He-style scale keeps activations O(1) through ReLU stacks.
        const double stddev = std::sqrt(2.0 / (27.0 * cin));
        l.weight = store.add(name + ".weight", rng.normal_tensor<T>({27 * cin, cout}, stddev));
        if (with_bias)
            l.bias = store.add(name + ".bias", nc::Tensor<T>({cout}));
        return l;
    }

    template <typename T>
    NormLayer<T> NormLayer<T>::create(nc::ParamStore<T>& store, const std::string& name, std::int64_t channels) {
        return {store.add(name + ".gamma", nc::Tensor<T>({channels}, T(1))),
                store.add(name + ".beta", nc::Tensor<T>({channels}))};
    }

    template <typename T>
    LinearLayer<T> LinearLayer<T>::create(nc::ParamStore<T>& store, const std::string& name, std::int64_t cin,
                                          std::int64_t cout, nc::Rng& rng) {
        return {store.add(name + ".weight", nc::fan_in_uniform<T>({cin, cout}, cin, rng)),
                store.add(name + ".bias", nc::Tensor<T>({cout}))};
    }

    namespace {
        template <typename T>
        void check_channels(const SparseTensor<T>& x, std::int64_t cin, const char* op) {
            if (x.channels() != cin)
                throw nc::ShapeError(std::string(op) + ": input has " + std::to_string(x.channels()) +
                                     " channels, layer expects " + std::to_string(cin));
        }

        template <typename T>
        nc::Var<T> with_bias(nc::Var<T> y, const ConvLayer<T>& layer) {
            return layer.bias.defined() ? nc::add_bias(y, layer.bias) : y;
        }
    } // namespace

    template <typename T>
    SparseTensor<T> sparse_conv(const SparseTensor<T>& x, const ConvLayer<T>& layer, int stride) {
        check_channels(x, layer.cin, "sparse_conv");
        if (stride == 1)
            return {x.coords, with_bias(nc::neighbor_conv(x.features, x.coords->same_table(), layer.weight), layer)};
        if (stride == 2)
            return {x.coords->downsampled(),
                    with_bias(nc::neighbor_conv(x.features, x.coords->down_table(), layer.weight), layer)};
        throw std::invalid_argument("sparse_conv: stride must be 1 or 2");
    }

    template <typename T>
    SparseTensor<T> generative_transpose_conv(const SparseTensor<T>& x, const ConvLayer<T>& layer) {
        check_channels(x, layer.cin, "generative_transpose_conv");
        return {x.coords->upsampled(),
                with_bias(nc::neighbor_conv(x.features, x.coords->up_table(), layer.weight), layer)};
    }

    template <typename T>
    SparseTensor<T> batch_norm(const SparseTensor<T>& x, const NormLayer<T>& norm) {
        const auto n = x.size(), c = x.channels();
        if (n == 0)
            return x;
        auto y = nc::group_norm(nc::reshape(x.features, {1, n, c}), 1, c, norm.gamma, norm.beta, T(1e-5));
        return {x.coords, nc::reshape(y, {n, c})};
    }

    template <typename T>
    SparseTensor<T> relu(const SparseTensor<T>& x) {
        return {x.coords, nc::relu(x.features)};
    }

    template <typename T>
    SparseTensor<T> add(const SparseTensor<T>& a, const SparseTensor<T>& b) {
        if (a.coords != b.coords && a.coords->coords() != b.coords->coords())
            throw nc::ShapeError("sparse add: coordinate sets differ");
        return {a.coords, nc::add(a.features, b.features)};
    }

    template <typename T>
    SparseTensor<T> linear(const SparseTensor<T>& x, const LinearLayer<T>& layer) {
        return {x.coords, nc::linear(x.features, layer.weight, layer.bias)};
    }

    template <typename T>
    SparseTensor<T> select(const SparseTensor<T>& x, const std::vector<std::int64_t>& rows) {
        std::vector<Coord> coords;
        coords.reserve(rows.size());
        for (auto r : rows)
            coords.push_back((*x.coords)[r]);
        // Rows are ascending, so the kept coordinates stay sorted and aligned.
        auto set = make_coords(std::move(coords), x.stride(), x.coords->resolution());
        return {set, nc::gather_rows(x.features, std::span<const std::int64_t>(rows))};
    }

    template <typename T>
    PruneResult<T> occupancy_prune(const SparseTensor<T>& x, const LinearLayer<T>& classifier,
                                   const CoordSet* targets, double threshold) {
        if (classifier.weight.dim(0) != x.channels() || classifier.weight.dim(1) != 1)
            throw nc::ShapeError("occupancy_prune: classifier must map the feature channels to one logit");
        PruneResult<T> r;
        const auto n = x.size();
        r.logits = nc::reshape(nc::linear(x.features, classifier.weight, classifier.bias), {n});
        std::vector<std::int64_t> keep;
        if (targets) {
            std::vector<T> labels(n);
            std::int64_t hits = 0;
            for (std::int64_t i = 0; i < n; ++i) {
                const bool occ = targets->find((*x.coords)[i]) >= 0;
                labels[i] = occ ? T(1) : T(0);
                if (occ) {
                    keep.push_back(i);
                    ++hits;
                }
            }
            r.missing = targets->size() - hits;
            r.bce = nc::bce_with_logits(r.logits, std::span<const T>(labels));
        } else {
            const auto& lv = r.logits.value();
            for (std::int64_t i = 0; i < n; ++i)
                if (1.0 / (1.0 + std::exp(-static_cast<double>(lv[i]))) > threshold)
                    keep.push_back(i);
        }
        r.pruned = select(x, keep);
        return r;
    }

#define L3DG_INSTANTIATE_SPARSE(T)                                                                                 \
    template struct ConvLayer<T>;                                                                                  \
    template struct NormLayer<T>;                                                                                  \
    template struct LinearLayer<T>;                                                                                \
    template SparseTensor<T> sparse_conv(const SparseTensor<T>&, const ConvLayer<T>&, int);                        \
    template SparseTensor<T> generative_transpose_conv(const SparseTensor<T>&, const ConvLayer<T>&);               \
    template SparseTensor<T> batch_norm(const SparseTensor<T>&, const NormLayer<T>&);                              \
    template SparseTensor<T> relu(const SparseTensor<T>&);                                                         \
    template SparseTensor<T> add(const SparseTensor<T>&, const SparseTensor<T>&);                                  \
    template SparseTensor<T> linear(const SparseTensor<T>&, const LinearLayer<T>&);                                \
    template SparseTensor<T> select(const SparseTensor<T>&, const std::vector<std::int64_t>&);                     \
    template PruneResult<T> occupancy_prune(const SparseTensor<T>&, const LinearLayer<T>&, const CoordSet*, double);

    L3DG_INSTANTIATE_SPARSE(float)
    L3DG_INSTANTIATE_SPARSE(double)

} // namespace l3dg::sparse
