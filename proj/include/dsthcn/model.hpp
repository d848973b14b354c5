#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dsthcn/hypergraph.hpp"
#include "dsthcn/ops.hpp"
#include "dsthcn/params.hpp"
#include "dsthcn/skeleton.hpp"
#include "dsthcn/tensor.hpp"

namespace dsthcn {

struct ModelConfig {
    int c_in = 3;
    int frames = 64;
    int num_classes = 60;
    int k_temporal = 5;
    int k_spatial = 4;
    int kmeans_clusters = 5;
    bool residual = true;
    std::vector<int> channels = {64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
    std::vector<int> strides = {1, 1, 1, 1, 2, 1, 1, 2, 1, 1};
    uint64_t init_seed = 1;
    int threads = 1;

    void validate() const;
};

// vertex-domain structures shared by all blocks: three spatial hypergraphs
// (k-NN, k-means, parts) and the row-normalized graph partitions
struct BlockTopology {
    std::vector<IncidenceMatrix> h_n;       // 3 incidence matrices V×E_i
    std::vector<std::vector<double>> s_n;   // 3 symmetrized normalized ops, V×V
    std::vector<std::vector<double>> parts; // 3 partitions, V×V
};
BlockTopology build_topology(const SkeletonDefinition& sk, const ModelConfig& cfg,
                             uint64_t kmeans_seed);

inline constexpr int kTopologies = 3;
inline constexpr double kBetaFloor = 1e-3;

class Block {
  public:
    Block(ParamStore& ps, const std::string& prefix, const BlockTopology& topo, int V, int c_in,
          int c_out, int t_in, int stride, bool use_residual, int k_temporal,
          std::mt19937_64& rng);

    Tensor forward(const Tensor& x4, bool train, int threads);
    Tensor backward(const Tensor& gy4); // returns gx4, accumulates parameter grads

    int t_in() const { return t_in_; }
    int t_out() const { return ops::conv_out_frames(t_in_, stride_); }
    int c_out() const { return c_out_; }

    // named intermediate of the last forward pass (A|B|C|D|E|F_out|F_sum|Z_out),
    // topo selects the spatial topology for A/D/E/F_out
    Tensor feature(const std::string& name, int topo, int sample) const;

  private:
    struct TopoCache {
        Tensor pa;      // contract(x, S_N_i)
        Tensor aprime;
        NormalizeCache nst, nts;
        Tensor pst, pts; // contract(x, cross operator)
        Tensor concat;   // Y1|Y2|Y3 stacked on channels
        Tensor f;        // mixer output
    };
    struct SampleCache {
        IncidenceMatrix h_t;
        std::vector<double> s_t; // T×T symmetrized TPH operator
        Tensor pb;               // contract_time(x, s_t)
        Tensor bprime, sigb;
        std::array<Tensor, 3> pk; // graph partition contractions
        Tensor cprime;
        std::array<TopoCache, kTopologies> topo;
        // TF
        std::array<Tensor, 4> branch_in;
        Tensor ya, yb, yc, yd;
        std::vector<int32_t> pool_arg;
        Tensor cat;
        std::vector<double> gap, h1, gate;
        Tensor sx; // strided input for the projected residual
    };

    Tensor forward_sample(int b, const Tensor& x3);
    Tensor backward_sample(int b, const Tensor& gpre3);
    double beta_eff() const;

    const BlockTopology* topo_;
    int V_, c_in_, c_out_, c_mid_, c4_, t_in_, stride_, k_t_;
    bool use_residual_, res_proj_;

    Param* reducer_;
    std::array<Param*, kTopologies> theta_a_w_, theta_a_b_;
    Param *theta_b_w_, *theta_b_b_, *theta_d_w_, *theta_d_b_, *theta_e_w_, *theta_e_b_;
    std::array<Param*, 3> m_;
    struct CrossParams {
        Param *mu_st, *phi_st, *mu_ts, *phi_l, *phi_r;
    };
    std::array<CrossParams, kTopologies> cross_;
    Param* beta_;
    Param *mixer_w_, *mixer_b_;
    std::array<Param*, 4> red_w_, red_b_;
    Param *wa_, *wa_bias_, *wb_, *wb_bias_;
    Param *att1_w_, *att1_b_, *att2_w_, *att2_b_;
    Param *bn_gamma_, *bn_beta_, *bn_rm_, *bn_rv_;
    Param* res_w_ = nullptr;

    // last-forward caches
    Tensor x_, fsum_, pre_, out_;
    std::array<Tensor, kTopologies> u_;  // H_N·mu_st, V×T
    std::array<Tensor, kTopologies> vt_; // phi_l·H_N·phi_r, T×V
    std::vector<SampleCache> cache_;
    ops::BnCache bn_cache_;
};

class Model {
  public:
    Model(SkeletonDefinition sk, ModelConfig cfg);

    // x4 is B×C_in×T×V with T == cfg.frames; returns logits B×K
    Tensor forward(const Tensor& x4, bool train);
    // glogits is B×K; accumulates parameter grads, returns gx4
    Tensor backward(const Tensor& glogits);

    ParamStore& store() { return ps_; }
    const ParamStore& store() const { return ps_; }
    std::size_t param_count() const { return ps_.param_count(); }
    const ModelConfig& config() const { return cfg_; }
    const SkeletonDefinition& skeleton() const { return sk_; }
    int block_count() const { return static_cast<int>(blocks_.size()); }
    const Block& block(int i) const { return *blocks_[static_cast<std::size_t>(i)]; }
    Block& block(int i) { return *blocks_[static_cast<std::size_t>(i)]; }

  private:
    SkeletonDefinition sk_;
    ModelConfig cfg_;
    ParamStore ps_;
    BlockTopology topo_;
    Param *stem_gamma_, *stem_beta_, *stem_rm_, *stem_rv_;
    std::vector<std::unique_ptr<Block>> blocks_;
    Param *head_w_, *head_b_;

    ops::BnCache stem_cache_;
    Tensor stem_in_, feat_;
    int feat_t_ = 0;
};

} // namespace dsthcn
