#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dsthcn/ops.hpp"
#include "helpers.hpp"

using namespace dsthcn;
using ops::Axis;

TEST_CASE("contract over the vertex axis matches a hand example") {
    Tensor x({1, 1, 3});
    x.data = {1.0, 2.0, 3.0};
    Tensor m({3, 3});
    m.data = {1, 0, 0, 0, 1, 0, 1, 1, 1};
    Tensor y = ops::contract_axis(x, m, Axis::vertex);
    CHECK(y.data[0] == doctest::Approx(4.0));
    CHECK(y.data[1] == doctest::Approx(5.0));
    CHECK(y.data[2] == doctest::Approx(3.0));
}

TEST_CASE("contract over the time axis equals the transposed vertex contraction") {
    std::mt19937_64 rng(3);
    Tensor x({2, 4, 3}), m({4, 4});
    th::fill_uniform(x, rng);
    th::fill_uniform(m, rng);
    Tensor y = ops::contract_axis(x, m, Axis::time);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 4; ++i)
            for (int v = 0; v < 3; ++v) {
                double want = 0.0;
                for (int t = 0; t < 4; ++t) want += x.at3(c, t, v) * m.at2(t, i);
                CHECK(y.at3(c, i, v) == doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("contract backward agrees with finite differences on both axes") {
    std::mt19937_64 rng(11);
    for (Axis axis : {Axis::vertex, Axis::time}) {
        Tensor x({2, 4, 4}), m({4, 4}), w({2, 4, 4});
        th::fill_uniform(x, rng);
        th::fill_uniform(m, rng);
        th::fill_uniform(w, rng);
        auto loss = [&] {
            Tensor y = ops::contract_axis(x, m, axis);
            double l = 0.0;
            for (std::size_t i = 0; i < y.numel(); ++i) l += w.data[i] * y.data[i];
            return l;
        };
        Tensor gx({2, 4, 4}), gm({4, 4});
        ops::contract_axis_backward(w, x, m, axis, gx, gm);
        CHECK(th::check_grad(loss, x.data, gx.data) < 1e-6);
        CHECK(th::check_grad(loss, m.data, gm.data) < 1e-6);
    }
}

TEST_CASE("pointwise channel map forward and backward") {
    std::mt19937_64 rng(5);
    Tensor x({3, 2, 2}), theta({3, 4}), bias({4}), w({4, 2, 2});
    th::fill_uniform(x, rng);
    th::fill_uniform(theta, rng);
    th::fill_uniform(bias, rng);
    th::fill_uniform(w, rng);
    Tensor y = ops::pointwise_channel_map(x, theta, &bias);
    for (int o = 0; o < 4; ++o)
        for (int s = 0; s < 4; ++s) {
            double want = bias.data[o];
            for (int c = 0; c < 3; ++c) want += theta.at2(c, o) * x.data[4 * c + s];
            CHECK(y.data[4 * o + s] == doctest::Approx(want).epsilon(1e-12));
        }
    auto loss = [&] {
        Tensor yy = ops::pointwise_channel_map(x, theta, &bias);
        double l = 0.0;
        for (std::size_t i = 0; i < yy.numel(); ++i) l += w.data[i] * yy.data[i];
        return l;
    };
    Tensor gx({3, 2, 2}), gth({3, 4}), gb({4});
    ops::pointwise_channel_map_backward(w, x, theta, gx, gth, &gb);
    CHECK(th::check_grad(loss, x.data, gx.data) < 1e-6);
    CHECK(th::check_grad(loss, theta.data, gth.data) < 1e-6);
    CHECK(th::check_grad(loss, bias.data, gb.data) < 1e-6);
}

TEST_CASE("temporal conv hand example with zero padding") {
    Tensor x({1, 3, 1});
    x.data = {1.0, 2.0, 3.0};
    Tensor w({1, 1, 3});
    w.data = {1.0, 1.0, 1.0};
    Tensor y = ops::temporal_conv(x, w, nullptr, {3, 1, 1});
    REQUIRE(y.dim(1) == 3);
    CHECK(y.data[0] == doctest::Approx(3.0));
    CHECK(y.data[1] == doctest::Approx(6.0));
    CHECK(y.data[2] == doctest::Approx(5.0));
}

TEST_CASE("temporal conv output length is ceil(T/stride)") {
    Tensor x({1, 7, 2});
    std::mt19937_64 rng(1);
    th::fill_uniform(x, rng);
    Tensor w({3, 1, 5});
    th::fill_uniform(w, rng);
    CHECK(ops::temporal_conv(x, w, nullptr, {5, 1, 2}).dim(1) == 4);
    CHECK(ops::temporal_conv(x, w, nullptr, {5, 2, 1}).dim(1) == 7);
    CHECK_THROWS_AS(ops::temporal_conv(x, Tensor({3, 1, 4}), nullptr, {4, 1, 1}), input_error);
}

TEST_CASE("temporal conv backward agrees with finite differences") {
    std::mt19937_64 rng(17);
    for (const ops::ConvSpec cs : {ops::ConvSpec{5, 1, 1}, ops::ConvSpec{5, 2, 2}}) {
        Tensor x({2, 6, 3}), w({2, 2, 5}), b({2});
        th::fill_uniform(x, rng);
        th::fill_uniform(w, rng);
        th::fill_uniform(b, rng);
        Tensor lw({2, ops::conv_out_frames(6, cs.stride), 3});
        th::fill_uniform(lw, rng);
        auto loss = [&] {
            Tensor y = ops::temporal_conv(x, w, &b, cs);
            double l = 0.0;
            for (std::size_t i = 0; i < y.numel(); ++i) l += lw.data[i] * y.data[i];
            return l;
        };
        Tensor gx({2, 6, 3}), gw({2, 2, 5}), gb({2});
        ops::temporal_conv_backward(lw, x, w, cs, gx, gw, &gb);
        CHECK(th::check_grad(loss, x.data, gx.data) < 1e-6);
        CHECK(th::check_grad(loss, w.data, gw.data) < 1e-6);
        CHECK(th::check_grad(loss, b.data, gb.data) < 1e-6);
    }
}

TEST_CASE("max pool keeps the first frame on ties and routes gradients to it") {
    Tensor x({1, 4, 1});
    x.data = {2.0, 2.0, 1.0, 5.0};
    std::vector<int32_t> arg;
    Tensor y = ops::max_pool_time(x, 3, 1, arg);
    CHECK(y.data[0] == 2.0);
    CHECK(arg[0] == 0);
    CHECK(arg[1] == 0); // window {0,1,2}: tie between frames 0 and 1
    CHECK(y.data[3] == 5.0);
    Tensor gy({1, 4, 1});
    gy.data = {1.0, 1.0, 1.0, 1.0};
    Tensor gx({1, 4, 1});
    ops::max_pool_time_backward(gy, arg, 1, 4, 1, gx);
    CHECK(gx.data[0] == 2.0);
    CHECK(gx.data[1] == 0.0);
    CHECK(gx.data[3] == 2.0);
}

TEST_CASE("subsample keeps every stride-th frame; backward scatters") {
    Tensor x({1, 5, 2});
    std::mt19937_64 rng(2);
    th::fill_uniform(x, rng);
    Tensor y = ops::subsample_time(x, 2);
    REQUIRE(y.dim(1) == 3);
    for (int to = 0; to < 3; ++to)
        for (int v = 0; v < 2; ++v) CHECK(y.at3(0, to, v) == x.at3(0, 2 * to, v));
    Tensor gx({1, 5, 2});
    ops::subsample_time_backward(y, 2, 5, gx);
    for (int t = 0; t < 5; ++t)
        for (int v = 0; v < 2; ++v)
            CHECK(gx.at3(0, t, v) == (t % 2 == 0 ? x.at3(0, t, v) : 0.0));
}

TEST_CASE("activations and their backward rules") {
    std::mt19937_64 rng(9);
    Tensor x({2, 3, 2}), w({2, 3, 2});
    th::fill_uniform(x, rng, -2.0, 2.0);
    th::fill_uniform(w, rng);
    for (ops::Act a : {ops::Act::relu, ops::Act::sigmoid, ops::Act::tanh_}) {
        auto loss = [&] {
            Tensor y = ops::activation(x, a);
            double l = 0.0;
            for (std::size_t i = 0; i < y.numel(); ++i) l += w.data[i] * y.data[i];
            return l;
        };
        Tensor y = ops::activation(x, a);
        Tensor gx({2, 3, 2});
        ops::activation_backward(w, y, a, gx);
        CHECK(th::check_grad(loss, x.data, gx.data) < 1e-6);
    }
}

TEST_CASE("batch norm normalizes per channel and tracks running stats") {
    std::mt19937_64 rng(21);
    Tensor x({3, 2, 4, 5});
    th::fill_uniform(x, rng, -2.0, 3.0);
    Tensor gamma = Tensor::full({2}, 1.0), beta({2});
    Tensor rm({2}), rv = Tensor::full({2}, 1.0);
    ops::BnCache cache;
    Tensor y = ops::batch_norm(x, gamma, beta, rm, rv, true, cache);
    const int N = 3 * 4 * 5;
    for (int c = 0; c < 2; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int b = 0; b < 3; ++b)
            for (int t = 0; t < 4; ++t)
                for (int v = 0; v < 5; ++v) {
                    sum += y.at4(b, c, t, v);
                    sq += y.at4(b, c, t, v) * y.at4(b, c, t, v);
                }
        CHECK(sum / N == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(sq / N == doctest::Approx(1.0).epsilon(1e-3)); // off by eps regularizer only
        // running stats: (1-m)*init + m*batch
        CHECK(rm.data[c] == doctest::Approx(ops::kBnMomentum * cache.mean[c]).epsilon(1e-12));
    }
    // eval mode uses running stats, no update
    const Tensor rm_before = rm, rv_before = rv;
    ops::BnCache ec;
    Tensor ye = ops::batch_norm(x, gamma, beta, rm, rv, false, ec);
    CHECK(rm.data == rm_before.data);
    CHECK(rv.data == rv_before.data);
    for (int c = 0; c < 2; ++c) {
        const double inv = 1.0 / std::sqrt(rv.data[c] + ops::kBnEps);
        CHECK(ye.at4(0, c, 0, 0) ==
              doctest::Approx((x.at4(0, c, 0, 0) - rm.data[c]) * inv).epsilon(1e-12));
    }
}

TEST_CASE("batch norm backward agrees with finite differences in both modes") {
    std::mt19937_64 rng(33);
    for (bool train : {true, false}) {
        Tensor x({2, 3, 2, 2}), gamma({3}), beta({3}), w({2, 3, 2, 2});
        th::fill_uniform(x, rng, -1.0, 2.0);
        th::fill_uniform(gamma, rng, 0.5, 1.5);
        th::fill_uniform(beta, rng);
        th::fill_uniform(w, rng);
        Tensor rm0({3}), rv0 = Tensor::full({3}, 1.0);
        th::fill_uniform(rm0, rng, -0.2, 0.2);
        auto loss = [&] {
            Tensor rm = rm0, rv = rv0;
            ops::BnCache c;
            Tensor y = ops::batch_norm(x, gamma, beta, rm, rv, train, c);
            double l = 0.0;
            for (std::size_t i = 0; i < y.numel(); ++i) l += w.data[i] * y.data[i];
            return l;
        };
        Tensor rm = rm0, rv = rv0;
        ops::BnCache cache;
        ops::batch_norm(x, gamma, beta, rm, rv, train, cache);
        Tensor gx({2, 3, 2, 2}), gg({3}), gb({3});
        ops::batch_norm_backward(w, gamma, cache, gx, gg, gb);
        CHECK(th::check_grad(loss, x.data, gx.data) < 1e-5);
        CHECK(th::check_grad(loss, gamma.data, gg.data) < 1e-6);
        CHECK(th::check_grad(loss, beta.data, gb.data) < 1e-6);
    }
}

TEST_CASE("cross entropy closed-form values") {
    Tensor logits({1, 4});
    std::vector<int> labels = {2};
    auto r = ops::softmax_cross_entropy(logits, labels);
    CHECK(r.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    Tensor l2({1, 2});
    l2.data = {0.0, 1.0};
    auto r2 = ops::softmax_cross_entropy(l2, {1});
    CHECK(r2.loss == doctest::Approx(std::log(1.0 + std::exp(1.0)) - 1.0).epsilon(1e-12));
    CHECK(r2.probs.data[0] + r2.probs.data[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cross entropy gradient matches finite differences and sums to zero") {
    std::mt19937_64 rng(7);
    Tensor logits({3, 5});
    th::fill_uniform(logits, rng, -3.0, 3.0);
    std::vector<int> labels = {4, 0, 2};
    auto loss = [&] { return ops::softmax_cross_entropy(logits, labels).loss; };
    auto r = ops::softmax_cross_entropy(logits, labels);
    CHECK(th::check_grad(loss, logits.data, r.grad.data) < 1e-6);
    for (int b = 0; b < 3; ++b) {
        double s = 0.0;
        for (int k = 0; k < 5; ++k) s += r.grad.at2(b, k);
        CHECK(s == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(ops::softmax_cross_entropy(logits, {4, 0, 5}), input_error);
}

TEST_CASE("cross entropy is stable under large logit shifts") {
    Tensor logits({1, 3});
    logits.data = {1000.0, 999.0, 100.0};
    auto r = ops::softmax_cross_entropy(logits, {0});
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-9));
}
