#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>

#include "dsthcn/config.hpp"
#include "dsthcn/csvio.hpp"
#include "dsthcn/train.hpp"
#include "helpers.hpp"

using namespace dsthcn;

TEST_CASE("learning-rate schedule hits its closed-form points") {
    TrainConfig tc; // defaults: 90 epochs, warmup 5, base 0.1, eta_min 1e-4
    CHECK(lr_at(tc, 0) == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(lr_at(tc, 4) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(lr_at(tc, 5) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(lr_at(tc, 89) == doctest::Approx(1e-4).epsilon(1e-12));
    // warmup is linear, afterwards strictly decreasing
    for (int e = 1; e < 5; ++e)
        CHECK(lr_at(tc, e) == doctest::Approx(0.1 * (e + 1) / 5.0).epsilon(1e-12));
    for (int e = 6; e < 90; ++e) CHECK(lr_at(tc, e) < lr_at(tc, e - 1));
    CHECK_THROWS_AS(lr_at(tc, 90), input_error);
}

TEST_CASE("sgd with nesterov momentum follows the hand recurrence") {
    ParamStore ps;
    Param* p = ps.add("w", {1});
    p->value.data[0] = 1.0;
    const double lr = 0.1, mom = 0.9, wd = 0.01;
    double value = 1.0, vel = 0.0;
    for (int step = 0; step < 3; ++step) {
        const double raw = 0.5 + 0.1 * step;
        p->grad.data[0] = raw;
        sgd_step(ps, lr, mom, wd);
        const double g = raw + wd * value;
        vel = mom * vel + g;
        value -= lr * (g + mom * vel);
        CHECK(p->value.data[0] == doctest::Approx(value).epsilon(1e-12));
    }
    // decay=false parameters see no weight decay
    ParamStore ps2;
    Param* q = ps2.add("b", {1}, true, false);
    q->value.data[0] = 2.0;
    q->grad.data[0] = 0.0;
    sgd_step(ps2, lr, mom, wd);
    CHECK(q->value.data[0] == 2.0);
    // non-trainable buffers never move
    ParamStore ps3;
    Param* r = ps3.add("rm", {1}, false, false);
    r->value.data[0] = 3.0;
    r->grad.data[0] = 5.0;
    sgd_step(ps3, lr, mom, wd);
    CHECK(r->value.data[0] == 3.0);
}

TEST_CASE("bone stream telescopes back to the joints") {
    auto sk = ucla20();
    std::mt19937_64 rng(3);
    Dataset d;
    d.skeleton_id = 2;
    d.class_count = 2;
    SkeletonSample s;
    s.label = 1;
    s.tensor = Tensor({3, 4, sk.joint_count});
    th::fill_uniform(s.tensor, rng);
    d.samples.push_back(s);
    auto bones = derive_stream(d, StreamKind::bone, sk);
    const Tensor& b = bones.samples[0].tensor;
    // root bone is zero; joint = parent joint + bone everywhere else
    for (int c = 0; c < 3; ++c)
        for (int t = 0; t < 4; ++t)
            for (int v = 0; v < sk.joint_count; ++v) {
                const int pa = sk.parent[static_cast<std::size_t>(v)];
                if (pa == v)
                    CHECK(b.at3(c, t, v) == 0.0);
                else
                    CHECK(s.tensor.at3(c, t, pa) + b.at3(c, t, v) ==
                          doctest::Approx(s.tensor.at3(c, t, v)).epsilon(1e-12));
            }
}

TEST_CASE("motion stream is the forward frame difference with a zero tail") {
    auto sk = ucla20();
    std::mt19937_64 rng(5);
    Dataset d;
    d.skeleton_id = 2;
    d.class_count = 2;
    SkeletonSample s;
    s.tensor = Tensor({3, 4, sk.joint_count});
    th::fill_uniform(s.tensor, rng);
    d.samples.push_back(s);
    auto mo = derive_stream(d, StreamKind::joint_motion, sk);
    const Tensor& m = mo.samples[0].tensor;
    for (int c = 0; c < 3; ++c)
        for (int v = 0; v < sk.joint_count; ++v) {
            for (int t = 0; t < 3; ++t)
                CHECK(m.at3(c, t, v) ==
                      doctest::Approx(s.tensor.at3(c, t + 1, v) - s.tensor.at3(c, t, v)));
            CHECK(m.at3(c, 3, v) == 0.0);
        }
}

TEST_CASE("dual correlation appends adjacent channel differences") {
    Tensor x({3, 2, 2});
    std::mt19937_64 rng(7);
    th::fill_uniform(x, rng);
    Tensor y = dual_correlation_channels(x);
    REQUIRE(y.dim(0) == 5);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data[i] == x.data[i]);
    for (int c = 0; c < 2; ++c)
        for (int s = 0; s < 4; ++s)
            CHECK(y.data[(3 + c) * 4 + s] ==
                  doctest::Approx(x.data[(c + 1) * 4 + s] - x.data[c * 4 + s]));
}

TEST_CASE("score fusion is a weighted argmax with ties to the smaller class") {
    Tensor a({2, 3}), b({2, 3});
    a.data = {0.7, 0.2, 0.1, 0.1, 0.1, 0.8};
    b.data = {0.1, 0.8, 0.1, 0.3, 0.3, 0.4};
    auto pred = fuse_scores({a, b}, {0.6, 0.4});
    CHECK(pred[0] == 0); // 0.46 vs 0.44 vs 0.10
    CHECK(pred[1] == 2);
    // exact tie: class 0 and 1 both 0.5
    Tensor t({1, 2});
    t.data = {0.5, 0.5};
    CHECK(fuse_scores({t}, {1.0})[0] == 0);
    CHECK_THROWS_AS(fuse_scores({a}, {0.5, 0.5}), input_error);
    CHECK(default_stream_weight(StreamKind::joint) == 0.6);
    CHECK(default_stream_weight(StreamKind::bone_motion) == 0.4);
}

TEST_CASE("fusion against a brute-force oracle on random scores") {
    std::mt19937_64 rng(11);
    for (int it = 0; it < 50; ++it) {
        const int N = 1 + static_cast<int>(rng() % 6), K = 2 + static_cast<int>(rng() % 4);
        std::vector<Tensor> scores;
        std::vector<double> w;
        const int S = 1 + static_cast<int>(rng() % 3);
        for (int s = 0; s < S; ++s) {
            Tensor t({N, K});
            th::fill_uniform(t, rng, 0.0, 1.0);
            scores.push_back(std::move(t));
            w.push_back(uniform_draw(rng, 0.1, 1.0));
        }
        auto pred = fuse_scores(scores, w);
        for (int i = 0; i < N; ++i) {
            int best = 0;
            double bv = -1.0;
            for (int k = 0; k < K; ++k) {
                double v = 0.0;
                for (int s = 0; s < S; ++s) v += w[static_cast<std::size_t>(s)] * scores[static_cast<std::size_t>(s)].at2(i, k);
                if (v > bv) {
                    bv = v;
                    best = k;
                }
            }
            CHECK(pred[static_cast<std::size_t>(i)] == best);
        }
    }
}

TEST_CASE("train loop learns a small synthetic task deterministically") {
    auto sk = ucla20();
    auto train = gen_synthetic(2, 8, 12, sk, 2, 31);
    auto val = gen_synthetic(2, 4, 12, sk, 2, 32);
    ModelConfig mc;
    mc.c_in = 3;
    mc.frames = 12;
    mc.num_classes = 2;
    mc.channels = {8, 8};
    mc.strides = {1, 2};
    mc.kmeans_clusters = 4;
    mc.init_seed = 3;
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 8;
    tc.base_lr = 0.05;
    tc.warmup_epochs = 1;
    Model m1(sk, mc);
    auto r1 = train_loop(m1, train, val, tc, "");
    REQUIRE(r1.history.size() == 4);
    CHECK(r1.history.back().train_loss < r1.history.front().train_loss);
    for (const auto& e : r1.history) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(e.train_acc >= 0.0);
        CHECK(e.val_acc <= 1.0);
    }
    Model m2(sk, mc);
    auto r2 = train_loop(m2, train, val, tc, "");
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
        CHECK(r1.history[i].val_acc == r2.history[i].val_acc);
    }
}

TEST_CASE("checkpoints reproduce evaluation metrics after reload") {
    auto sk = ucla20();
    auto train = gen_synthetic(2, 6, 10, sk, 2, 41);
    auto val = gen_synthetic(2, 3, 10, sk, 2, 42);
    ModelConfig mc;
    mc.frames = 10;
    mc.num_classes = 2;
    mc.channels = {4};
    mc.strides = {1};
    mc.kmeans_clusters = 4;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 6;
    tc.warmup_epochs = 1;
    Model m(sk, mc);
    auto res = train_loop(m, train, val, tc, ".");
    Model fresh(sk, mc);
    fresh.store().load("checkpoint_last.json");
    auto ev = evaluate(fresh, val, tc.batch_size);
    // metrics match the last epoch up to the f32 archive rounding
    CHECK(ev.acc == res.history.back().val_acc);
    CHECK(ev.loss == doctest::Approx(res.history.back().val_loss).epsilon(1e-4));
    for (const char* f : {"checkpoint_last.json", "checkpoint_last.bin", "checkpoint_best.json",
                          "checkpoint_best.bin"})
        CHECK(std::remove(f) == 0);
}

TEST_CASE("scores csv round-trips through the csv reader") {
    Tensor s({3, 4});
    std::mt19937_64 rng(17);
    th::fill_uniform(s, rng, 0.0, 1.0);
    std::vector<int> labels = {2, 0, 1};
    csv::write_scores("test_training_scores.csv", s, labels);
    std::vector<int> back_labels;
    Tensor back = csv::read_scores("test_training_scores.csv", back_labels);
    CHECK(back_labels == labels);
    REQUIRE(back.shape == s.shape);
    for (std::size_t i = 0; i < s.numel(); ++i)
        CHECK(back.data[i] == doctest::Approx(s.data[i]).epsilon(1e-8));
    std::remove("test_training_scores.csv");
    CHECK_THROWS_AS(csv::read_scores("no_such_scores.csv", back_labels), format_error);
}

TEST_CASE("run config json rejects unknown keys and bad values") {
    auto rc = run_config_from_json_text(
        R"({"model": {"frames": 12, "channels": [8], "strides": [2]},
            "train": {"epochs": 10, "warmup_epochs": 2}, "stream": "bone"})");
    CHECK(rc.model.frames == 12);
    CHECK(rc.train.epochs == 10);
    CHECK(rc.stream == "bone");
    CHECK_THROWS_AS(run_config_from_json_text(R"({"modle": {}})"), format_error);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"model": {"frame": 12}})"), format_error);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"stream": "jont"})"), input_error);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"train": {"momentum": 1.5}})"), input_error);
    CHECK_THROWS_AS(run_config_from_json_text("not json"), format_error);
    // round trip through the serializer
    auto rc2 = run_config_from_json_text(run_config_to_json(rc));
    CHECK(rc2.model.frames == rc.model.frames);
    CHECK(rc2.stream == rc.stream);
}
