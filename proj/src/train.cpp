#include "dsthcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

namespace dsthcn {

void TrainConfig::validate() const {
    if (epochs < 1) throw input_error("train: epochs must be positive");
    if (batch_size < 1) throw input_error("train: batch_size must be positive");
    if (base_lr <= 0.0) throw input_error("train: base_lr must be positive");
    if (eta_min < 0.0 || eta_min > base_lr)
        throw input_error("train: eta_min must lie in [0, base_lr]");
    if (warmup_epochs < 0 || warmup_epochs >= epochs)
        throw input_error("train: warmup_epochs must lie in [0, epochs)");
    if (momentum < 0.0 || momentum >= 1.0) throw input_error("train: momentum must lie in [0,1)");
    if (weight_decay < 0.0) throw input_error("train: weight_decay must be non-negative");
}

double lr_at(const TrainConfig& tc, int epoch) {
    if (epoch < 0 || epoch >= tc.epochs) throw input_error("lr_at: epoch out of range");
    if (epoch < tc.warmup_epochs)
        return tc.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(tc.warmup_epochs);
    const int denom = tc.epochs - 1 - tc.warmup_epochs;
    if (denom <= 0) return epoch == tc.warmup_epochs ? tc.base_lr : tc.eta_min;
    const double p = static_cast<double>(epoch - tc.warmup_epochs) / static_cast<double>(denom);
    return tc.eta_min + (tc.base_lr - tc.eta_min) * 0.5 * (1.0 + std::cos(M_PI * p));
}

void sgd_step(ParamStore& ps, double lr, double momentum, double weight_decay) {
    for (const auto& p : ps.all()) {
        if (!p->trainable) continue;
        const double wd = p->decay ? weight_decay : 0.0;
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double g = p->grad.data[i] + wd * p->value.data[i];
            const double v = momentum * p->velocity.data[i] + g;
            p->velocity.data[i] = v;
            p->value.data[i] -= lr * (g + momentum * v);
        }
    }
}

namespace {

Tensor make_batch(const Dataset& d, const std::vector<int>& order, int lo, int hi,
                  const ModelConfig& cfg, std::vector<int>& labels) {
    const int B = hi - lo;
    Tensor x({B, cfg.c_in, cfg.frames, 0});
    labels.assign(static_cast<std::size_t>(B), 0);
    for (int b = 0; b < B; ++b) {
        const auto& s = d.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(lo + b)])];
        if (s.tensor.rank() != 3 || s.tensor.dim(0) != cfg.c_in || s.tensor.dim(1) != cfg.frames)
            throw input_error("sample shape " + shape_str(s.tensor.shape) +
                              " does not match model config");
        if (b == 0) {
            x = Tensor({B, cfg.c_in, cfg.frames, s.tensor.dim(2)});
        } else if (s.tensor.dim(2) != x.dim(3)) {
            throw input_error("inconsistent joint counts in dataset");
        }
        std::memcpy(x.ptr() + static_cast<std::size_t>(b) * s.tensor.numel(), s.tensor.ptr(),
                    s.tensor.numel() * sizeof(double));
        labels[static_cast<std::size_t>(b)] = s.label;
    }
    return x;
}

int argmax_row(const Tensor& t, int row) {
    int best = 0;
    for (int k = 1; k < t.dim(1); ++k)
        if (t.at2(row, k) > t.at2(row, best)) best = k;
    return best;
}

} // namespace

EvalResult evaluate(Model& m, const Dataset& d, int batch_size) {
    const int N = static_cast<int>(d.samples.size());
    const int K = m.config().num_classes;
    if (d.class_count > K) throw input_error("dataset has more classes than the model head");
    EvalResult r;
    r.scores = Tensor({N, K});
    std::vector<int> order(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;
    double loss_sum = 0.0;
    int correct = 0;
    for (int lo = 0; lo < N; lo += batch_size) {
        const int hi = std::min(lo + batch_size, N);
        std::vector<int> labels;
        Tensor x = make_batch(d, order, lo, hi, m.config(), labels);
        Tensor logits = m.forward(x, false);
        auto xr = ops::softmax_cross_entropy(logits, labels);
        loss_sum += xr.loss * static_cast<double>(hi - lo);
        for (int b = 0; b < hi - lo; ++b) {
            if (argmax_row(logits, b) == labels[static_cast<std::size_t>(b)]) ++correct;
            for (int k = 0; k < K; ++k) r.scores.at2(lo + b, k) = xr.probs.at2(b, k);
        }
    }
    r.loss = N > 0 ? loss_sum / static_cast<double>(N) : 0.0;
    r.acc = N > 0 ? static_cast<double>(correct) / static_cast<double>(N) : 0.0;
    return r;
}

TrainResult train_loop(Model& m, const Dataset& train, const Dataset& val, const TrainConfig& tc,
                       const std::string& checkpoint_dir, const EpochCallback& cb) {
    tc.validate();
    train.validate();
    val.validate();
    const int N = static_cast<int>(train.samples.size());
    if (N == 0) throw input_error("train: empty training set");
    std::vector<int> order(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng(tc.shuffle_seed);
    TrainResult res;
    for (int e = 0; e < tc.epochs; ++e) {
        // Fisher-Yates with raw draws so the permutation is reproducible
        for (int i = N - 1; i > 0; --i) {
            const int j = static_cast<int>(rng() % static_cast<uint64_t>(i + 1));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        const double lr = lr_at(tc, e);
        double loss_sum = 0.0;
        for (int lo = 0; lo < N; lo += tc.batch_size) {
            const int hi = std::min(lo + tc.batch_size, N);
            std::vector<int> labels;
            Tensor x = make_batch(train, order, lo, hi, m.config(), labels);
            m.store().zero_grad();
            Tensor logits = m.forward(x, true);
            auto xr = ops::softmax_cross_entropy(logits, labels);
            loss_sum += xr.loss * static_cast<double>(hi - lo);
            m.backward(xr.grad);
            sgd_step(m.store(), lr, tc.momentum, tc.weight_decay);
        }
        EpochMetrics em;
        em.epoch = e;
        em.lr = lr;
        em.train_loss = loss_sum / static_cast<double>(N);
        em.train_acc = evaluate(m, train, tc.batch_size).acc;
        auto ve = evaluate(m, val, tc.batch_size);
        em.val_loss = ve.loss;
        em.val_acc = ve.acc;
        res.history.push_back(em);
        if (!checkpoint_dir.empty()) {
            m.store().save(checkpoint_dir + "/checkpoint_last.json");
            if (res.best_epoch < 0 || em.val_acc > res.best_val_acc)
                m.store().save(checkpoint_dir + "/checkpoint_best.json");
        }
        if (res.best_epoch < 0 || em.val_acc > res.best_val_acc) {
            res.best_epoch = e;
            res.best_val_acc = em.val_acc;
        }
        if (cb) cb(em);
    }
    return res;
}

StreamKind stream_from_name(const std::string& name) {
    if (name == "joint") return StreamKind::joint;
    if (name == "bone") return StreamKind::bone;
    if (name == "joint_motion") return StreamKind::joint_motion;
    if (name == "bone_motion") return StreamKind::bone_motion;
    throw input_error("unknown stream '" + name +
                      "' (joint|bone|joint_motion|bone_motion)");
}

std::string stream_name(StreamKind k) {
    switch (k) {
    case StreamKind::joint: return "joint";
    case StreamKind::bone: return "bone";
    case StreamKind::joint_motion: return "joint_motion";
    case StreamKind::bone_motion: return "bone_motion";
    }
    return "joint";
}

double default_stream_weight(StreamKind k) {
    switch (k) {
    case StreamKind::joint:
    case StreamKind::bone: return 0.6;
    case StreamKind::joint_motion:
    case StreamKind::bone_motion: return 0.4;
    }
    return 0.6;
}

namespace {

Tensor bone_of(const Tensor& x, const SkeletonDefinition& sk) {
    const int C = x.dim(0), T = x.dim(1), V = x.dim(2);
    if (V != sk.joint_count) throw input_error("bone stream: joint count mismatch");
    Tensor y({C, T, V});
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int v = 0; v < V; ++v)
                y.at3(c, t, v) =
                    x.at3(c, t, v) - x.at3(c, t, sk.parent[static_cast<std::size_t>(v)]);
    return y;
}

Tensor motion_of(const Tensor& x) {
    const int C = x.dim(0), T = x.dim(1), V = x.dim(2);
    Tensor y({C, T, V});
    for (int c = 0; c < C; ++c)
        for (int t = 0; t + 1 < T; ++t)
            for (int v = 0; v < V; ++v) y.at3(c, t, v) = x.at3(c, t + 1, v) - x.at3(c, t, v);
    return y; // last frame stays zero
}

} // namespace

Dataset derive_stream(const Dataset& d, StreamKind k, const SkeletonDefinition& sk) {
    Dataset out;
    out.skeleton_id = d.skeleton_id;
    out.class_count = d.class_count;
    out.samples.reserve(d.samples.size());
    for (const auto& s : d.samples) {
        SkeletonSample o;
        o.label = s.label;
        switch (k) {
        case StreamKind::joint: o.tensor = s.tensor; break;
        case StreamKind::bone: o.tensor = bone_of(s.tensor, sk); break;
        case StreamKind::joint_motion: o.tensor = motion_of(s.tensor); break;
        case StreamKind::bone_motion: o.tensor = motion_of(bone_of(s.tensor, sk)); break;
        }
        out.samples.push_back(std::move(o));
    }
    return out;
}

Tensor dual_correlation_channels(const Tensor& x3) {
    if (x3.rank() != 3) throw dim_error("dual correlation expects a C×T×V sample");
    const int C = x3.dim(0), T = x3.dim(1), V = x3.dim(2);
    Tensor y({2 * C - 1, T, V});
    std::memcpy(y.ptr(), x3.ptr(), x3.numel() * sizeof(double));
    for (int c = 0; c + 1 < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int v = 0; v < V; ++v)
                y.at3(C + c, t, v) = x3.at3(c + 1, t, v) - x3.at3(c, t, v);
    return y;
}

Dataset dual_correlation_dataset(const Dataset& d) {
    Dataset out;
    out.skeleton_id = d.skeleton_id;
    out.class_count = d.class_count;
    out.samples.reserve(d.samples.size());
    for (const auto& s : d.samples)
        out.samples.push_back({s.label, dual_correlation_channels(s.tensor)});
    return out;
}

std::vector<int> fuse_scores(const std::vector<Tensor>& scores,
                             const std::vector<double>& weights) {
    if (scores.empty()) throw input_error("fuse: no score sets");
    if (scores.size() != weights.size()) throw input_error("fuse: weight count mismatch");
    const int N = scores[0].dim(0), K = scores[0].dim(1);
    for (const auto& s : scores)
        if (s.dim(0) != N || s.dim(1) != K) throw input_error("fuse: score shape mismatch");
    std::vector<int> pred(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        int best = 0;
        double best_v = 0.0;
        for (int k = 0; k < K; ++k) {
            double v = 0.0;
            for (std::size_t s = 0; s < scores.size(); ++s)
                v += weights[s] * scores[s].at2(i, k);
            if (k == 0 || v > best_v) {
                best = k;
                best_v = v;
            }
        }
        pred[static_cast<std::size_t>(i)] = best;
    }
    return pred;
}

} // namespace dsthcn
