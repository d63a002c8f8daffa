#include "doctest.h"
#include "gradcheck.hpp"

#include "l3dg/numcore/adam.hpp"
#include "l3dg/numcore/checkpoint.hpp"
#include "l3dg/numcore/neighbor_conv.hpp"
#include "l3dg/numcore/ops.hpp"
#include "l3dg/numcore/random.hpp"

#include <filesystem>
#include <fstream>

using namespace l3dg;
using nc::Tensor;
using nc::Var;

namespace {
    Var<double> leaf(nc::Shape shape, nc::Rng& rng, double lo = -1.0, double hi = 1.0) {
        return Var<double>::parameter(rng.uniform_tensor<double>(std::move(shape), lo, hi));
    }

    // Weighted sum so every output coordinate carries a distinct sensitivity.
    Var<double> probe(const Var<double>& y, std::uint64_t seed) {
        nc::Rng rng(seed);
        Var<double> w(rng.uniform_tensor<double>(y.shape(), -1.0, 1.0));
        return nc::sum(nc::mul(y, w));
    }

    void check(std::vector<Var<double>> params, const std::function<Var<double>()>& f) {
        auto r = testing::grad_check(params, f);
        INFO("max rel error " << r.max_rel_error);
        CHECK(r.all_passed());
    }
} // namespace

TEST_CASE("backward of sum of squares") {
    Var<double> x = Var<double>::parameter(Tensor<double>({2}, {1.0, 2.0}));
    nc::backward(nc::sum(nc::square(x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("constant root leaves gradients at zero") {
    Var<double> x = Var<double>::parameter(Tensor<double>({3}, 1.0));
    Var<double> c(Tensor<double>::scalar(5.0));
    nc::backward(c);
    const auto grad = x.grad();
    for (auto g : grad.data())
        CHECK(g == 0.0);
}

TEST_CASE("repeated backward accumulates into leaves") {
    Var<double> x = Var<double>::parameter(Tensor<double>({2}, {1.0, 2.0}));
    auto root = nc::sum(nc::square(x));
    nc::backward(root);
    nc::backward(root);
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    CHECK(x.grad()[1] == doctest::Approx(8.0));
    x.zero_grad();
    nc::backward(root);
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("non-scalar root is rejected") {
    Var<double> x = Var<double>::parameter(Tensor<double>({2}, 1.0));
    CHECK_THROWS_AS(nc::backward(nc::square(x)), nc::ShapeError);
}

TEST_CASE("no-grad guard skips recording") {
    Var<double> x = Var<double>::parameter(Tensor<double>({2}, 1.0));
    nc::NoGradGuard guard;
    auto y = nc::square(x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("element-wise ops match finite differences") {
    nc::Rng rng(11);
    auto a = leaf({3, 4}, rng);
    auto b = leaf({3, 4}, rng, 0.5, 2.0);
    auto pos = leaf({3, 4}, rng, 0.2, 3.0);
    check({a, b}, [&] { return probe(nc::add(a, b), 1); });
    check({a, b}, [&] { return probe(nc::sub(a, b), 2); });
    check({a, b}, [&] { return probe(nc::mul(a, b), 3); });
    check({a, b}, [&] { return probe(nc::div(a, b), 4); });
    check({a}, [&] { return probe(nc::scale(nc::add_scalar(a, 0.3), -1.7), 5); });
    check({a}, [&] { return probe(nc::exp(a), 6); });
    check({pos}, [&] { return probe(nc::log(pos), 7); });
    check({pos}, [&] { return probe(nc::sqrt(pos), 8); });
    check({a}, [&] { return probe(nc::tanh(a), 9); });
    check({a}, [&] { return probe(nc::sigmoid(a), 10); });
    check({a}, [&] { return probe(nc::silu(a), 11); });
    check({a}, [&] { return probe(nc::square(a), 12); });
    check({pos}, [&] { return probe(nc::relu(pos), 13); });
    check({pos}, [&] { return probe(nc::abs(pos), 14); });
    check({a}, [&] { return nc::mean(nc::square(a)); });
}

TEST_CASE("structural ops match finite differences") {
    nc::Rng rng(12);
    auto x = leaf({2, 3, 4}, rng);
    auto bias = leaf({4}, rng);
    auto e = leaf({2, 4}, rng);
    auto w = leaf({4, 5}, rng);
    auto a = leaf({3, 4}, rng);
    check({x, bias}, [&] { return probe(nc::add_bias(x, bias), 1); });
    check({x, bias}, [&] { return probe(nc::mul_channels(x, bias), 2); });
    check({x, e}, [&] { return probe(nc::add_per_batch(x, e), 3); });
    check({a, w}, [&] { return probe(nc::matmul(a, w), 4); });
    check({x, w, leaf({5}, rng)}, [&] { return probe(nc::linear(x, w), 5); });
    check({x, a}, [&] {
        return probe(nc::concat_channels<double>({nc::reshape(x, {6, 4}), nc::reshape(nc::add(a, a), {6, 2})}), 6);
    });
    check({x}, [&] { return probe(nc::slice_channels(x, 1, 3), 7); });
    std::vector<std::int64_t> rows{3, -1, 0, 3, 5};
    check({x}, [&] { return probe(nc::gather_rows(nc::reshape(x, {6, 4}), rows), 8); });
}

TEST_CASE("normalisation and attention match finite differences") {
    nc::Rng rng(13);
    auto x = leaf({2, 5, 4}, rng);
    auto gamma = leaf({4}, rng, 0.5, 1.5);
    auto beta = leaf({4}, rng);
    check({x, gamma, beta}, [&] { return probe(nc::group_norm(x, 2, 2, gamma, beta), 1); });
    check({x, gamma, beta}, [&] { return probe(nc::group_norm(x, 1, 4, gamma, beta), 2); });
    auto qkv = leaf({2, 5, 12}, rng);
    check({qkv}, [&] { return probe(nc::self_attention(qkv, 2), 3); });
}

TEST_CASE("losses match finite differences") {
    nc::Rng rng(14);
    auto a = leaf({7}, rng);
    Var<double> b(rng.uniform_tensor<double>({7}, -1, 1));
    check({a}, [&] { return nc::l1_loss(a, b); });
    check({a}, [&] { return nc::mse_loss(a, b); });
    std::vector<double> labels{1, 0, 0, 1, 1, 0, 1};
    check({a}, [&] { return nc::bce_with_logits(a, std::span<const double>(labels)); });
}

TEST_CASE("neighbor convolution and pooling match finite differences") {
    nc::Rng rng(15);
    auto table = std::make_shared<nc::NeighborTable>(nc::dense_conv3d_table(1, 3, 3, 2, 1));
    auto x = leaf({18, 2}, rng);
    auto w = leaf({27 * 2, 3}, rng);
    check({x, w}, [&] { return probe(nc::neighbor_conv(x, table, w), 1); });
    auto down = std::make_shared<nc::NeighborTable>(nc::dense_conv3d_table(1, 3, 3, 2, 2));
    check({x, w}, [&] { return probe(nc::neighbor_conv(x, down, w), 2); });
    auto pool = nc::image_pool2x2_table(4, 4);
    auto img = leaf({16, 2}, rng);
    check({img}, [&] { return probe(nc::max_pool_rows(img, pool), 3); });
}

TEST_CASE("adam step edge cases") {
    nc::AdamHyper h;
    h.lr = 0.1;

    SUBCASE("zero gradient leaves parameters unchanged") {
        Var<double> p = Var<double>::parameter(Tensor<double>({2}, {0.3, -0.7}));
        nc::Adam<double> opt({p}, h);
        for (int i = 0; i < 5; ++i)
            opt.step();
        CHECK(p.value()[0] == 0.3);
        CHECK(p.value()[1] == -0.7);
    }
    SUBCASE("constant gradient moves against its sign") {
        Tensor<double> p({1}, 0.0);
        Tensor<double> g({1}, 2.0);
        nc::AdamState<double> st;
        st.hyper = h;
        Tensor<double>* ps[] = {&p};
        const Tensor<double>* gs[] = {&g};
        for (int i = 0; i < 50; ++i)
            nc::adam_step<double>(ps, gs, st);
        CHECK(p[0] < -1.0);
        CHECK(st.step == 50);
    }
    SUBCASE("two steps follow the bias-corrected recurrence") {
        Tensor<double> p({1}, 1.0);
        nc::AdamState<double> st;
        st.hyper = h;
        Tensor<double>* ps[] = {&p};
        Tensor<double> g1({1}, 0.5), g2({1}, -0.2);
        const Tensor<double>* gs1[] = {&g1};
        const Tensor<double>* gs2[] = {&g2};
        nc::adam_step<double>(ps, gs1, st);
        CHECK(p[0] == doctest::Approx(0.900000002).epsilon(1e-12));
        nc::adam_step<double>(ps, gs2, st);
        CHECK(p[0] == doctest::Approx(0.8654394181165108).epsilon(1e-12));
    }
    SUBCASE("shape mismatch is rejected") {
        Tensor<double> p({2}, 0.0);
        Tensor<double> g({3}, 0.0);
        nc::AdamState<double> st;
        Tensor<double>* ps[] = {&p};
        const Tensor<double>* gs[] = {&g};
        CHECK_THROWS_AS(nc::adam_step<double>(ps, gs, st), nc::ShapeError);
    }
}

TEST_CASE("seeded streams are reproducible") {
    nc::Rng a(99), b(99), c(100);
    auto ta = a.normal_tensor<float>({64});
    auto tb = b.normal_tensor<float>({64});
    auto tc = c.normal_tensor<float>({64});
    CHECK(ta.storage() == tb.storage());
    CHECK(ta.storage() != tc.storage());
    CHECK(nc::derive_seed(1, "fit") != nc::derive_seed(1, "vqvae"));
}

TEST_CASE("tensor checkpoint round trip") {
    const auto path = std::filesystem::temp_directory_path() / "l3dg_ckpt_test.bin";
    nc::TensorMap<float> tensors;
    nc::Rng rng(3);
    tensors["layer.weight"] = rng.uniform_tensor<float>({3, 4, 2}, -1, 1);
    tensors["scalar"] = Tensor<float>::scalar(2.5f);
    nc::save_checkpoint(path, tensors);

    auto back = nc::load_checkpoint<float>(path);
    REQUIRE(back.size() == 2);
    CHECK(back["layer.weight"].shape() == nc::Shape{3, 4, 2});
    CHECK(back["layer.weight"].storage() == tensors["layer.weight"].storage());
    auto widened = nc::load_checkpoint<double>(path);
    CHECK(widened["scalar"].item() == 2.5);

    {
        std::ifstream in(path, std::ios::binary);
        char magic[8];
        in.read(magic, 8);
        CHECK(std::string(magic, 8) == "L3DGTNSR");
    }
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPT";
    }
    CHECK_THROWS_AS(nc::load_checkpoint<float>(path), nc::CheckpointError);
    std::filesystem::remove(path);
}
