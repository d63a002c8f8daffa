#include "doctest.h"
#include "gradcheck.hpp"
#include "sparse_oracle.hpp"

#include "l3dg/numcore/ops.hpp"
#include "l3dg/sparseconv/layers.hpp"

#include <cmath>
#include <map>
#include <set>

using namespace l3dg;
using sparse::Coord;
using testing::Dense;
using testing::as_map;
using testing::dense_conv;
using testing::dense_transpose;
using testing::max_diff;
using testing::random_sparse;

namespace {

    sparse::ConvLayer<float> make_conv(nc::ParamStore<float>& store, std::int64_t cin, std::int64_t cout,
                                       nc::Rng& rng) {
        auto l = sparse::ConvLayer<float>::create(store, "conv" + std::to_string(store.entries().size()), cin, cout,
                                                  rng, false);
        return l;
    }

} // namespace

TEST_CASE("single coordinate with a centre identity kernel") {
    nc::ParamStore<float> store;
    nc::Rng rng(1);
    auto conv = make_conv(store, 3, 3, rng);
    auto& w = conv.weight.value_mut();
    w = nc::Tensor<float>(w.shape());
    for (int c = 0; c < 3; ++c)
        w[(13 * 3 + c) * 3 + c] = 1.0f;
    sparse::SparseTensor<float> x{sparse::make_coords({{0, 3, 4, 5}}, 1, 8),
                                  nc::Var<float>(nc::Tensor<float>({1, 3}, {0.5f, -2.0f, 7.0f}))};
    const auto y = sparse::sparse_conv(x, conv, 1);
    REQUIRE(y.size() == 1);
    CHECK((*y.coords)[0] == Coord{0, 3, 4, 5});
    for (int c = 0; c < 3; ++c)
        CHECK(y.features.value()[c] == x.features.value()[c]);
}

TEST_CASE("stride-2 coordinates use floor division") {
    auto set = sparse::make_coords({{0, 0, 0, 0}, {0, 1, 1, 1}}, 1, 8);
    const auto down = set->downsampled();
    REQUIRE(down->size() == 1);
    CHECK((*down)[0] == Coord{0, 0, 0, 0});
    CHECK(down->stride() == 2);
    // Second level maps stride-2 sites 2 and 4 to 0 and 4.
    auto s2 = sparse::make_coords({{0, 2, 2, 2}, {0, 4, 6, 2}}, 2, 8);
    const auto d2 = s2->downsampled();
    CHECK(d2->coords() == std::vector<Coord>{{0, 0, 0, 0}, {0, 4, 4, 0}});
}

TEST_CASE("coordinate set validation") {
    CHECK_THROWS(sparse::make_coords({{0, 1, 0, 0}}, 2, 8));
    CHECK_THROWS(sparse::make_coords({{0, 8, 0, 0}}, 1, 8));
    auto dup = sparse::make_coords({{0, 1, 2, 3}, {0, 1, 2, 3}, {0, 0, 0, 0}}, 1, 8);
    CHECK(dup->size() == 2);
    CHECK(dup->find({0, 1, 2, 3}) == 1);
    CHECK(dup->find({0, 2, 2, 3}) == -1);
}

TEST_CASE("channel mismatch throws") {
    nc::ParamStore<float> store;
    nc::Rng rng(2);
    auto conv = make_conv(store, 4, 2, rng);
    auto x = random_sparse<float>(rng, 4, 1, 0.5, 3);
    CHECK_THROWS_AS(sparse::sparse_conv(x, conv, 1), nc::ShapeError);
    CHECK_THROWS(sparse::sparse_conv(random_sparse<float>(rng, 4, 1, 0.5, 4), conv, 3));
}

TEST_CASE("sparse convolution matches the dense oracle") {
    nc::Rng rng(11);
    double worst1 = 0, worst2 = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int res = 2 + static_cast<int>(rng.uniform() * 7); // 2..8
        const int stride = (trial % 3 == 0 && res >= 4) ? 2 : 1;
        const std::int64_t cin = 1 + trial % 4, cout = 1 + (trial / 4) % 4;
        const int batch = 1 + trial % 2;
        nc::ParamStore<float> store;
        auto conv = make_conv(store, cin, cout, rng);
        auto x = random_sparse<float>(rng, res, stride, 0.3, cin, false, batch);
        const auto in = as_map(x);

        const auto y1 = sparse::sparse_conv(x, conv, 1);
        CHECK(y1.coords->coords() == x.coords->coords());
        worst1 = std::max(worst1, max_diff(as_map(y1), dense_conv(in, res, stride, stride, conv.weight.value(), cin,
                                                                  cout, batch)));

        const auto y2 = sparse::sparse_conv(x, conv, 2);
        CHECK(y2.stride() == 2 * stride);
        for (const auto& c : y2.coords->coords()) {
            bool covered = false;
            for (const auto& p : x.coords->coords())
                covered |= p.b == c.b && p.x / (2 * stride) * 2 * stride == c.x &&
                           p.y / (2 * stride) * 2 * stride == c.y && p.z / (2 * stride) * 2 * stride == c.z;
            CHECK(covered);
        }
        worst2 = std::max(worst2, max_diff(as_map(y2), dense_conv(in, res, stride, 2 * stride,
                                                                  conv.weight.value(), cin, cout, batch)));
    }
    CHECK(worst1 < 1e-6);
    CHECK(worst2 < 1e-6);
}

TEST_CASE("generative transpose convolution") {
    nc::Rng rng(5);
    SUBCASE("interior site yields 27 candidates") {
        nc::ParamStore<float> store;
        auto conv = make_conv(store, 2, 2, rng);
        sparse::SparseTensor<float> x{sparse::make_coords({{0, 4, 4, 4}}, 2, 8),
                                      nc::Var<float>(rng.uniform_tensor<float>({1, 2}, -1, 1))};
        const auto y = sparse::generative_transpose_conv(x, conv);
        CHECK(y.size() == 27);
        CHECK(y.stride() == 1);
    }
    SUBCASE("corner site is clipped to the grid") {
        nc::ParamStore<float> store;
        auto conv = make_conv(store, 1, 1, rng);
        sparse::SparseTensor<float> x{sparse::make_coords({{0, 0, 0, 0}}, 2, 8),
                                      nc::Var<float>(nc::Tensor<float>({1, 1}, 1.0f))};
        CHECK(sparse::generative_transpose_conv(x, conv).size() == 8);
    }
    SUBCASE("odd stride is rejected") {
        nc::ParamStore<float> store;
        auto conv = make_conv(store, 1, 1, rng);
        auto x = random_sparse<float>(rng, 4, 1, 0.5, 1);
        CHECK_THROWS(sparse::generative_transpose_conv(x, conv));
    }
    SUBCASE("overlapping neighbourhoods sum once per coordinate") {
        nc::ParamStore<float> store;
        auto conv = make_conv(store, 1, 1, rng);
        auto& w = conv.weight.value_mut();
        for (std::int64_t i = 0; i < w.numel(); ++i)
            w[i] = 1.0f;
        sparse::SparseTensor<float> x{sparse::make_coords({{0, 2, 2, 2}, {0, 4, 2, 2}}, 2, 8),
                                      nc::Var<float>(nc::Tensor<float>({2, 1}, {1.0f, 10.0f}))};
        const auto y = sparse::generative_transpose_conv(x, conv);
        CHECK(y.size() == 2 * 27 - 9);
        const auto m = as_map(y);
        CHECK(m.at({0, 3, 2, 2})[0] == doctest::Approx(11.0));
        CHECK(m.at({0, 1, 2, 2})[0] == doctest::Approx(1.0));
        CHECK(m.at({0, 5, 3, 3})[0] == doctest::Approx(10.0));
    }
    SUBCASE("matches the dense scatter oracle") {
        double worst = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const int res = 2 * (1 + static_cast<int>(rng.uniform() * 4)); // 2..8, coarse lattice <= 4^3
            const std::int64_t cin = 1 + trial % 4, cout = 1 + (trial / 4) % 4;
            nc::ParamStore<float> store;
            auto conv = make_conv(store, cin, cout, rng);
            auto x = random_sparse<float>(rng, res, 2, 0.4, cin);
            const auto y = sparse::generative_transpose_conv(x, conv);
            const auto want = dense_transpose(as_map(x), res, 2, conv.weight.value(), cin, cout);
            CHECK(y.size() == static_cast<std::int64_t>(want.size()));
            worst = std::max(worst, max_diff(as_map(y), want));
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("sparse layers pass finite-difference checks") {
    nc::Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        nc::ParamStore<double> store;
        // Bias-free before the norm, whose output does not depend on a shift.
        auto conv = sparse::ConvLayer<double>::create(store, "c", 3, 4, rng, false);
        auto up = sparse::ConvLayer<double>::create(store, "u", 4, 2, rng);
        auto norm = sparse::NormLayer<double>::create(store, "n", 4);
        for (auto v : store.vars())
            if (v.shape().size() == 1)
                v.value_mut() = rng.uniform_tensor<double>(v.shape(), 0.5, 1.5);
        sparse::SparseTensor<double> x{sparse::make_coords({{0, 0, 0, 0}, {0, 2, 0, 2}, {0, 2, 2, 2}}, 2, 8),
                                       nc::Var<double>(rng.uniform_tensor<double>({3, 3}, -1, 1), true)};
        auto params = store.vars();
        params.push_back(x.features);
        auto loss = [&] {
            auto h = sparse::batch_norm(sparse::sparse_conv(x, conv, 1), norm);
            auto y = sparse::generative_transpose_conv(h, up);
            return nc::sum(nc::square(y.features));
        };
        const auto r = testing::grad_check(params, loss, 1e-6, 1e-3);
        CHECK(r.all_passed());
        MESSAGE("max rel error " << r.max_rel_error);
    }
}

TEST_CASE("batch norm uses statistics of the active coordinates") {
    nc::Rng rng(3);
    nc::ParamStore<double> store;
    auto norm = sparse::NormLayer<double>::create(store, "n", 2);
    auto x = random_sparse<double>(rng, 6, 1, 0.4, 2);
    const auto y = sparse::batch_norm(x, norm);
    const auto n = x.size();
    for (int c = 0; c < 2; ++c) {
        double m = 0, v = 0;
        for (std::int64_t i = 0; i < n; ++i)
            m += y.features.value()[i * 2 + c];
        m /= n;
        for (std::int64_t i = 0; i < n; ++i)
            v += std::pow(y.features.value()[i * 2 + c] - m, 2);
        v /= n;
        CHECK(std::abs(m) < 1e-12);
        CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("occupancy pruning") {
    nc::Rng rng(4);
    nc::ParamStore<double> store;
    auto cls = sparse::LinearLayer<double>::create(store, "cls", 3, 1, rng);
    auto x = random_sparse<double>(rng, 4, 1, 0.5, 3);

    SUBCASE("infinite logits keep everything") {
        cls.weight.value_mut() = nc::Tensor<double>({3, 1});
        cls.bias.value_mut() = nc::Tensor<double>({1}, INFINITY);
        const auto r = sparse::occupancy_prune(x, cls);
        CHECK(r.pruned.size() == x.size());
        CHECK(!r.bce.defined());
    }
    SUBCASE("perfect classifier on its own candidates") {
        cls.weight.value_mut() = nc::Tensor<double>({3, 1});
        cls.bias.value_mut() = nc::Tensor<double>({1}, 60.0);
        const auto r = sparse::occupancy_prune(x, cls, x.coords.get());
        CHECK(r.bce.value().item() < 1e-20);
        CHECK(r.missing == 0);
        CHECK(r.pruned.coords->coords() == x.coords->coords());
    }
    SUBCASE("inference set equals the independent sigmoid test") {
        auto ten = random_sparse<double>(rng, 8, 1, 0.1, 3);
        REQUIRE(ten.size() >= 10);
        std::vector<Coord> c10(ten.coords->coords().begin(), ten.coords->coords().begin() + 10);
        sparse::SparseTensor<double> t{sparse::make_coords(c10, 1, 8),
                                       nc::Var<double>(rng.uniform_tensor<double>({10, 3}, -2, 2))};
        const auto r = sparse::occupancy_prune(t, cls);
        std::set<Coord> want;
        for (int i = 0; i < 10; ++i) {
            double logit = cls.bias.value()[0];
            for (int j = 0; j < 3; ++j)
                logit += t.features.value()[i * 3 + j] * cls.weight.value()[j];
            if (1.0 / (1.0 + std::exp(-logit)) > 0.5)
                want.insert((*t.coords)[i]);
        }
        CHECK(std::set<Coord>(r.pruned.coords->coords().begin(), r.pruned.coords->coords().end()) == want);
        for (std::int64_t i = 0; i < r.pruned.size(); ++i) {
            const auto src = t.coords->find((*r.pruned.coords)[i]);
            for (int j = 0; j < 3; ++j)
                CHECK(r.pruned.features.value()[i * 3 + j] == t.features.value()[src * 3 + j]);
        }
    }
    SUBCASE("raising the threshold never adds coordinates") {
        std::set<Coord> prev(x.coords->coords().begin(), x.coords->coords().end());
        for (double th = 0.0; th <= 1.0; th += 0.05) {
            const auto r = sparse::occupancy_prune(x, cls, nullptr, th);
            std::set<Coord> cur(r.pruned.coords->coords().begin(), r.pruned.coords->coords().end());
            for (const auto& c : cur)
                CHECK(prev.count(c) == 1);
            prev = std::move(cur);
        }
    }
    SUBCASE("teacher forcing counts targets the decoder never generated") {
        std::vector<Coord> targets{(*x.coords)[0], {0, 3, 3, 3}};
        const bool had = x.coords->find({0, 3, 3, 3}) >= 0;
        const auto tset = sparse::make_coords(targets, 1, 4);
        const auto r = sparse::occupancy_prune(x, cls, tset.get());
        CHECK(r.missing == (had ? 0 : 1));
        CHECK(r.pruned.size() == (had ? 2 : 1));
        CHECK(r.bce.defined());
    }
}
