#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsthcn/data.hpp"
#include "dsthcn/model.hpp"

namespace dsthcn {

struct TrainConfig {
    int epochs = 90;
    int batch_size = 64;
    double base_lr = 0.1;
    double eta_min = 1e-4;
    int warmup_epochs = 5;
    double momentum = 0.9;
    double weight_decay = 4e-4;
    uint64_t shuffle_seed = 1;

    void validate() const;
};

// linear warmup to base_lr, then one cosine decay to eta_min at the last epoch
double lr_at(const TrainConfig& tc, int epoch);

// Nesterov momentum SGD; weight decay is skipped for parameters with decay=false
void sgd_step(ParamStore& ps, double lr, double momentum, double weight_decay);

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct EvalResult {
    double loss = 0.0;
    double acc = 0.0;
    Tensor scores; // N×K softmax probabilities, dataset order
};
EvalResult evaluate(Model& m, const Dataset& d, int batch_size);

struct TrainResult {
    std::vector<EpochMetrics> history;
    int best_epoch = -1;
    double best_val_acc = 0.0;
};
using EpochCallback = std::function<void(const EpochMetrics&)>;

// checkpoint_dir gets checkpoint_last.json each epoch and checkpoint_best.json
// whenever val accuracy improves; pass "" to skip checkpointing
TrainResult train_loop(Model& m, const Dataset& train, const Dataset& val, const TrainConfig& tc,
                       const std::string& checkpoint_dir, const EpochCallback& cb = nullptr);

// ---- input streams ----
enum class StreamKind { joint, bone, joint_motion, bone_motion };
StreamKind stream_from_name(const std::string& name);
std::string stream_name(StreamKind k);
double default_stream_weight(StreamKind k);

Dataset derive_stream(const Dataset& d, StreamKind k, const SkeletonDefinition& sk);

// append adjacent-channel differences: C channels in, 2C-1 out
Tensor dual_correlation_channels(const Tensor& x3);
Dataset dual_correlation_dataset(const Dataset& d);

// weighted score-level fusion; returns argmax predictions, ties to smaller class
std::vector<int> fuse_scores(const std::vector<Tensor>& scores,
                             const std::vector<double>& weights);

} // namespace dsthcn
