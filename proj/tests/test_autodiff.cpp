#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "common/testers.hpp"
#include "ffkit/autodiff.hpp"
#include "ffkit/binio.hpp"
#include "ffkit/checkpoint.hpp"
#include "ffkit/optim.hpp"

using namespace ffkit;
using namespace ffkit::ad;
using ffkit::testing::gradient_check;
using ffkit::testing::random_tensor;

namespace {

// sum of elementwise products against fixed weights turns any output into a
// scalar objective for finite differencing; the seed pins the weights so
// repeated builder calls see the same objective
Var weighted_sum(Graph& g, Var x, uint64_t seed) {
    Rng rng(seed);
    Tensor w = random_tensor(x->value.shape(), rng, 0.2, 1.0);
    Var wv = g.leaf(w);
    Var prod = g.mul(x, wv);
    // reduce via matmul with ones
    const int64_t r = x->value.dim(0), c = x->value.dim(1);
    Var ones_r = g.leaf(Tensor::full({1, r}, 1.0));
    Var ones_c = g.leaf(Tensor::full({c, 1}, 1.0));
    return g.matmul(g.matmul(ones_r, prod), ones_c);
}

}  // namespace

TEST_CASE("matmul values and shape errors") {
    Graph g;
    Var a = g.leaf(Tensor::from({2, 2}, {1, 2, 3, 4}));
    Var eye = g.leaf(Tensor::from({2, 2}, {1, 0, 0, 1}));
    Var same = g.matmul(a, eye);
    CHECK(same->value.to_vector() == std::vector<double>{1, 2, 3, 4});

    Var b = g.leaf(Tensor::from({2, 1}, {5, 6}));
    Var ab = g.matmul(a, b);
    CHECK(ab->value.at(0) == doctest::Approx(17));
    CHECK(ab->value.at(1) == doctest::Approx(39));

    Var bad = g.leaf(Tensor::zeros({2, 3}));
    CHECK_THROWS_AS(g.matmul(bad, bad), ShapeMismatch);
}

TEST_CASE("elementwise semantics") {
    Graph g;
    Var x = g.leaf(Tensor::from({1, 3}, {-1, 0, 2}));
    CHECK(g.relu(x)->value.to_vector() == std::vector<double>{0, 0, 2});
    CHECK(g.elementwise(EwKind::relu, x)->value.to_vector() == std::vector<double>{0, 0, 2});
    CHECK(g.add_scalar(x, 0.0)->value.to_vector() == std::vector<double>{-1, 0, 2});
    Var y = g.leaf(Tensor::from({1, 3}, {4, 5, 6}));
    CHECK(g.elementwise(EwKind::add, x, y)->value.to_vector() == std::vector<double>{3, 5, 8});
    CHECK(g.elementwise(EwKind::mul, x, y)->value.to_vector() == std::vector<double>{-4, 0, 12});
    CHECK(g.elementwise(EwKind::scale, x, 2.0)->value.to_vector() ==
          std::vector<double>{-2, 0, 4});
}

TEST_CASE("relu subgradient at 0 is 0 and passes gradient above 0") {
    Graph g;
    Var x = g.leaf(Tensor::from({1, 3}, {-1, 0, 2}), true);
    Var r = g.relu(x);
    g.backward(r, Tensor::full({1, 3}, 1.0));
    CHECK(x->grad.at(0) == 0.0);
    CHECK(x->grad.at(1) == 0.0);
    CHECK(x->grad.at(2) == 1.0);
}

TEST_CASE("reduce_max_rows values and tie routing") {
    Graph g;
    Var x = g.leaf(Tensor::from({2, 2}, {1, 5, 3, 2}), true);
    Var m = g.reduce_max_rows(x);
    CHECK(m->value.to_vector() == std::vector<double>{3, 5});

    Var single = g.leaf(Tensor::from({1, 3}, {7, 8, 9}));
    CHECK(g.reduce_max_rows(single)->value.to_vector() == std::vector<double>{7, 8, 9});

    // tie in a column: gradient goes to the first maximizer only
    Graph g2;
    Var t = g2.leaf(Tensor::from({3, 1}, {4, 4, 1}), true);
    Var mt = g2.reduce_max_rows(t);
    g2.backward(mt, Tensor::full({1, 1}, 1.0));
    CHECK(t->grad.at(0) == 1.0);
    CHECK(t->grad.at(1) == 0.0);
    CHECK(t->grad.at(2) == 0.0);
}

TEST_CASE("softmax rows normalize to one within 1e-12") {
    Rng rng(23);
    Graph g;
    Var x = g.leaf(random_tensor({6, 9}, rng, -5, 5));
    const Tensor& y = g.softmax_rows(x)->value;
    for (int64_t i = 0; i < 6; ++i) {
        double s = 0;
        for (int64_t j = 0; j < 9; ++j) s += y.at2(i, j);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("multihead attention degenerate cases") {
    const int64_t d = 4;
    Graph g;
    auto eye = [&] {
        Tensor t = Tensor::zeros({d, d});
        for (int64_t i = 0; i < d; ++i) t.set(i * d + i, 1.0);
        return t;
    };
    AttentionParams p;
    p.wq = g.leaf(eye());
    p.wk = g.leaf(eye());
    p.wv = g.leaf(eye());
    p.wo = g.leaf(eye());
    p.bq = g.leaf(Tensor::zeros({1, d}));
    p.bk = g.leaf(Tensor::zeros({1, d}));
    p.bv = g.leaf(Tensor::zeros({1, d}));
    p.bo = g.leaf(Tensor::zeros({1, d}));

    // one token: softmax over a single position is 1, output = value projection
    Var x1 = g.leaf(Tensor::from({1, d}, {0.3, -0.7, 1.1, 0.25}));
    Var out1 = multihead_self_attention(g, x1, 2, p);
    for (int64_t i = 0; i < d; ++i) CHECK(out1->value.at(i) == doctest::Approx(x1->value.at(i)));

    // uniform keys (wk = 0) mean uniform attention: every row is the value mean
    Graph g2;
    AttentionParams p2;
    p2.wq = g2.leaf(eye());
    p2.wk = g2.leaf(Tensor::zeros({d, d}));
    p2.wv = g2.leaf(eye());
    p2.wo = g2.leaf(eye());
    p2.bq = g2.leaf(Tensor::zeros({1, d}));
    p2.bk = g2.leaf(Tensor::zeros({1, d}));
    p2.bv = g2.leaf(Tensor::zeros({1, d}));
    p2.bo = g2.leaf(Tensor::zeros({1, d}));
    Rng rng(3);
    Tensor xt = random_tensor({5, d}, rng);
    Var out2 = multihead_self_attention(g2, g2.leaf(xt), 2, p2);
    for (int64_t j = 0; j < d; ++j) {
        double mean = 0;
        for (int64_t i = 0; i < 5; ++i) mean += xt.at2(i, j) / 5.0;
        for (int64_t i = 0; i < 5; ++i) CHECK(out2->value.at2(i, j) == doctest::Approx(mean));
    }

    Graph g3;
    CHECK_THROWS_AS(multihead_self_attention(g3, g3.leaf(Tensor::zeros({2, 6})), 4, p), ShapeMismatch);
}

TEST_CASE("attention gradient check: 4x16 input, 8 heads") {
    Rng rng(101);
    const int64_t t = 4, d = 16;
    std::vector<Tensor> inputs;
    inputs.push_back(random_tensor({t, d}, rng));      // x
    for (int i = 0; i < 4; ++i) {
        inputs.push_back(random_tensor({d, d}, rng, -0.4, 0.4));  // wq wk wv wo
        inputs.push_back(random_tensor({1, d}, rng, -0.2, 0.2));  // biases
    }
    auto res = gradient_check(
        [&](Graph& g, std::vector<Var>& v) {
            AttentionParams p{v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
            return weighted_sum(g, multihead_self_attention(g, v[0], 8, p), 55);
        },
        inputs);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("conv2d identity and averaging behavior") {
    Graph g;
    Rng rng(7);
    Tensor x = random_tensor({2, 5, 5}, rng);
    // 1x1 identity kernel reproduces the input
    Tensor k = Tensor::zeros({2, 2, 1, 1});
    k.set(0 * 2 + 0, 1.0);
    k.set(1 * 2 + 1, 1.0);
    Var out = g.conv2d(g.leaf(x), g.leaf(k), nullptr, 1, 0);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(out->value.at(i) == doctest::Approx(x.at(i)));

    // 3x3 averaging kernel keeps a constant image constant in the interior
    Tensor c = Tensor::full({1, 6, 6}, 3.5);
    Tensor avg = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
    Var avg_out = g.conv2d(g.leaf(c), g.leaf(avg), nullptr, 1, 1);
    for (int64_t i = 1; i < 5; ++i)
        for (int64_t j = 1; j < 5; ++j)
            CHECK(avg_out->value.at(i * 6 + j) == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("per-op gradient checks") {
    Rng rng(611);
    for (int seed = 0; seed < 5; ++seed) {
        Rng srng(derive_seed(611, uint64_t(seed)));
        const uint64_t wseed = derive_seed(613, uint64_t(seed));
        auto weighted = [wseed](Graph& g, Var x) { return weighted_sum(g, x, wseed); };

        {  // matmul
            std::vector<Tensor> in{random_tensor({3, 4}, srng), random_tensor({4, 2}, srng)};
            auto r = gradient_check(
                [&](Graph& g, std::vector<Var>& v) { return weighted(g, g.matmul(v[0], v[1])); },
                in);
            CHECK(r.max_rel_err < 1e-4);
        }
        {  // add / mul / scale / add_scalar chain
            std::vector<Tensor> in{random_tensor({2, 5}, srng), random_tensor({2, 5}, srng)};
            auto r = gradient_check(
                [&](Graph& g, std::vector<Var>& v) {
                    Var s = g.add(g.mul(v[0], v[1]), g.scale(v[0], 0.7));
                    return weighted(g, g.add_scalar(s, 0.3));
                },
                in);
            CHECK(r.max_rel_err < 1e-4);
        }
        {  // relu away from the kink
            Tensor x = random_tensor({3, 4}, srng, 0.2, 1.0);
            for (int64_t i = 0; i < x.numel(); ++i)
                if (i % 2) x.set(i, -x.at(i));
            auto r = gradient_check(
                [&](Graph& g, std::vector<Var>& v) { return weighted(g, g.relu(v[0])); }, {x});
            CHECK(r.max_rel_err < 1e-4);
        }
        {  // add_rowvec + broadcast + mean + transpose + reshape + slice + concat
            std::vector<Tensor> in{random_tensor({3, 4}, srng), random_tensor({1, 4}, srng)};
            auto r = gradient_check(
                [&](Graph& g, std::vector<Var>& v) {
                    Var h = g.add_rowvec(v[0], v[1]);
                    Var b = g.broadcast_rows(g.mean_rows(h), 3);
                    Var cat = g.concat_cols({h, b, g.slice_cols(h, 1, 3)});
                    return weighted(g, g.reshape(g.transpose(cat), {5, 6}));
                },
                in);
            CHECK(r.max_rel_err < 1e-4);
        }
        {  // reduce_max (distinct values avoid ties)
            Tensor x = random_tensor({4, 3}, srng);
            for (int64_t i = 0; i < x.numel(); ++i) x.set(i, x.at(i) + 0.01 * double(i));
            auto r = gradient_check(
                [&](Graph& g, std::vector<Var>& v) { return weighted(g, g.reduce_max_rows(v[0])); },
                {x});
            CHECK(r.max_rel_err < 1e-4);
        }
        {  // softmax
            auto r = gradient_check(
                [&](Graph& g, std::vector<Var>& v) { return weighted(g, g.softmax_rows(v[0])); },
                {random_tensor({3, 5}, srng, -2, 2)});
            CHECK(r.max_rel_err < 1e-4);
        }
        {  // conv2d with bias, stride 2, pad 1
            std::vector<Tensor> in{random_tensor({2, 5, 6}, srng),
                                   random_tensor({3, 2, 3, 3}, srng, -0.5, 0.5),
                                   random_tensor({3}, srng, -0.2, 0.2)};
            auto r = gradient_check(
                [&](Graph& g, std::vector<Var>& v) {
                    Var y = g.conv2d(v[0], v[1], v[2], 2, 1);
                    return weighted(g, g.reshape(y, {3, y->value.numel() / 3}));
                },
                in);
            CHECK(r.max_rel_err < 1e-4);
        }
        {  // layer_norm
            std::vector<Tensor> in{random_tensor({3, 6}, srng),
                                   random_tensor({1, 6}, srng, 0.5, 1.5),
                                   random_tensor({1, 6}, srng, -0.3, 0.3)};
            auto r = gradient_check(
                [&](Graph& g, std::vector<Var>& v) {
                    return weighted(g, g.layer_norm(v[0], v[1], v[2]));
                },
                in);
            CHECK(r.max_rel_err < 1e-4);
        }
        {  // softmax cross entropy + gather_col + smooth_l1
            Tensor logits = random_tensor({4, 6}, srng, -1.5, 1.5);
            Tensor row = random_tensor({1, 6}, srng, -0.5, 0.5);
            auto r = gradient_check(
                [&](Graph& g, std::vector<Var>& v) {
                    Var ce = g.softmax_cross_entropy(v[0], {1, 0, 5, 2});
                    Var picked = g.gather_col(v[1], 3);
                    Var huber = g.smooth_l1_sum(v[1], Tensor::full({1, 6}, 0.1));
                    return g.add(ce, g.add(g.scale(picked, 0.5), huber));
                },
                {logits, row});
            CHECK(r.max_rel_err < 1e-4);
        }
    }
}

TEST_CASE("backward is linear over loss sums") {
    Rng rng(29);
    Tensor xt = random_tensor({3, 3}, rng);
    auto grads_for = [&](int which) {
        Graph g;
        Var x = g.leaf(xt, true);
        Var l1 = g.smooth_l1_sum(x, Tensor::zeros({3, 3}));
        Var l2 = g.smooth_l1_sum(g.scale(x, 2.0), Tensor::full({3, 3}, 0.2));
        Var root = which == 0 ? l1 : which == 1 ? l2 : g.add(l1, l2);
        g.backward(root);
        return x->grad.to_vector();
    };
    const auto ga = grads_for(0);
    const auto gb = grads_for(1);
    const auto gsum = grads_for(2);
    for (std::size_t i = 0; i < ga.size(); ++i)
        CHECK(std::abs(gsum[i] - (ga[i] + gb[i])) < 1e-10);
}

TEST_CASE("non-finite results raise NumericError") {
    Graph g;
    Var big = g.leaf(Tensor::full({2, 2}, 1e308));
    CHECK_THROWS_AS(g.matmul(big, big), NumericError);
    Var x = g.leaf(Tensor::full({1, 1}, 1e308));
    CHECK_THROWS_AS(g.scale(x, 1e10), NumericError);
}

TEST_CASE("Adam optimizer behavior") {
    // zero gradient: parameters unchanged
    {
        Adam adam({0.1, 0.9, 0.999, 1e-8});
        Tensor p = Tensor::from({1, 2}, {1.5, -2.5});
        std::vector<Tensor*> params{&p};
        adam.step(params, {Tensor::zeros({1, 2})});
        CHECK(p.at(0) == 1.5);
        CHECK(p.at(1) == -2.5);
    }
    // first step with g = 1 moves by about -lr
    {
        Adam adam({0.1, 0.9, 0.999, 1e-8});
        Tensor p = Tensor::from({1, 1}, {0.7});
        std::vector<Tensor*> params{&p};
        adam.step(params, {Tensor::full({1, 1}, 1.0)});
        CHECK(p.at(0) == doctest::Approx(0.6).epsilon(1e-6));
    }
    // identical sequences reproduce bit-identically
    {
        auto run = [] {
            Adam adam({0.01, 0.9, 0.999, 1e-8});
            Tensor p = Tensor::from({1, 3}, {0.1, 0.2, 0.3});
            std::vector<Tensor*> params{&p};
            Rng rng(4);
            for (int i = 0; i < 10; ++i)
                adam.step(params, {testing::random_tensor({1, 3}, rng)});
            return p.to_vector();
        };
        CHECK(run() == run());
    }
}

TEST_CASE("checkpoint round-trip and corruption detection") {
    testing::TempDir dir("ckpt");
    Rng rng(41);
    Checkpoint ck;
    ck.metadata_json = "{\"test\":true}";
    ck.tensors.emplace_back("alpha", random_tensor({3, 4}, rng));
    ck.tensors.emplace_back("beta", random_tensor({2, 2, 2}, rng, -1, 1, Dtype::f32));
    const std::string path = dir.sub("model.ckpt");
    save_checkpoint(ck, path);

    const Checkpoint back = load_checkpoint(path);
    CHECK(back.metadata_json == ck.metadata_json);
    REQUIRE(back.tensors.size() == 2);
    CHECK(back.tensors[0].first == "alpha");
    CHECK(back.tensors[1].second.dtype() == Dtype::f32);
    for (std::size_t t = 0; t < 2; ++t) {
        const Tensor& a = ck.tensors[t].second;
        const Tensor& b = back.tensors[t].second;
        REQUIRE(a.raw_size() == b.raw_size());
        CHECK(std::memcmp(a.raw(), b.raw(), a.raw_size()) == 0);
    }

    // flip a payload byte: checksum must catch it
    auto bytes = read_file_bytes(path);
    bytes[bytes.size() / 2] ^= std::byte{0x40};
    write_file_bytes(path, bytes.data(), bytes.size());
    CHECK_THROWS_AS(load_checkpoint(path), IoError);

    write_file_bytes(dir.sub("short.ckpt"), bytes.data(), 10);
    CHECK_THROWS_AS(load_checkpoint(dir.sub("short.ckpt")), TruncatedFile);
}
