#pragma once

#include <cstdint>
#include <vector>

#include "dsthcn/skeleton.hpp"
#include "dsthcn/tensor.hpp"

namespace dsthcn {

// nodes × hyperedges incidence; binary for constructed hypergraphs,
// signed real for cross hypergraphs. W are per-hyperedge weights.
struct IncidenceMatrix {
    int nodes = 0;
    int edges = 0;
    std::vector<double> H;
    std::vector<double> W;

    IncidenceMatrix() = default;
    IncidenceMatrix(int n, int e)
        : nodes(n), edges(e), H(static_cast<std::size_t>(n) * e, 0.0),
          W(static_cast<std::size_t>(e), 1.0) {}

    double& at(int v, int e) { return H[static_cast<std::size_t>(v) * edges + e]; }
    double at(int v, int e) const { return H[static_cast<std::size_t>(v) * edges + e]; }
};

struct NormalizedOperator {
    int n = 0;
    std::vector<double> matrix; // n×n, symmetric

    double at(int i, int j) const { return matrix[static_cast<std::size_t>(i) * n + j]; }
};

constexpr double kDegreeFloor = 1e-6;

// H-tilde = Dv^{-1/2} H W De^{-1} Hᵀ Dv^{-1/2}, degrees on |H|, floored at kDegreeFloor
NormalizedOperator normalize(const IncidenceMatrix& inc);

// caches everything normalize_backward needs
struct NormalizeCache {
    int n = 0, e = 0;
    std::vector<double> H;          // input copy
    std::vector<double> W;
    std::vector<double> s;          // dv^{-1/2}
    std::vector<double> r;          // 1/de
    std::vector<double> dv, de;     // pre-floor degrees would floor; stored post-floor
    std::vector<uint8_t> dv_floored, de_floored;
    std::vector<double> A;          // H (W∘r) Hᵀ
    NormalizedOperator op;
};
NormalizeCache normalize_with_cache(const IncidenceMatrix& inc);
// dL/dH given dL/dHtilde (n×n); W treated as constant
std::vector<double> normalize_backward(const NormalizeCache& c, const std::vector<double>& G);

// op + opᵀ as a flat n×n matrix (hyperedge-feature variant of the convolutions)
std::vector<double> symmetrized(const NormalizedOperator& op);

// k-NN hyperedges over arbitrary embeddings (one row per node); column i holds
// node i plus its k-1 nearest others, Euclidean distance, ties to smaller index.
IncidenceMatrix knn_incidence(const std::vector<std::vector<double>>& points, int k);

// time-point hypergraph: reduce channels with `reducer` (C×Cr), flatten each
// frame to a Cr·V vector, then k-NN over frames. T nodes × T hyperedges.
IncidenceMatrix tph_knn(const Tensor& x, int k, const Tensor& reducer);
int tph_reduced_channels(int c_in);

// spatial hypergraphs over joints
IncidenceMatrix spatial_knn(const SkeletonDefinition& sk, int k);
IncidenceMatrix spatial_kmeans(const SkeletonDefinition& sk, int clusters, uint64_t seed);
IncidenceMatrix spatial_parts(const SkeletonDefinition& sk);

// signed joint<->frame cross hypergraphs, entries tanh(mu(a)-phi(b))
struct CrossProjections {
    // H_ST = tanh(H_N·mu_st − phi_st·H_T)           (V×T)
    // H_TS = tanh(H_T·mu_ts − phi_ts_l·H_N·phi_ts_r) (T×V)
    Tensor mu_st;    // E_n×T
    Tensor phi_st;   // V×T
    Tensor mu_ts;    // T×V
    Tensor phi_ts_l; // T×V
    Tensor phi_ts_r; // E_n×V
};
struct CrossResult {
    IncidenceMatrix h_st; // V nodes × T hyperedges
    IncidenceMatrix h_ts; // T nodes × V hyperedges
};
CrossResult cross_hypergraphs(const IncidenceMatrix& h_n, const IncidenceMatrix& h_t,
                              const CrossProjections& proj);

// row-normalized graph partitions D^{-1}(A_i+I): self, centripetal, centrifugal
std::vector<std::vector<double>> graph_partitions(const SkeletonDefinition& sk);

} // namespace dsthcn
