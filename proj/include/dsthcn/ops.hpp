#pragma once

#include <cstdint>
#include <vector>

#include "dsthcn/tensor.hpp"

namespace dsthcn::ops {

enum class Axis { time, vertex };

// ---- raw kernels over one C×T×V sample (flat row-major buffers) ----

// y[c,t,j] = sum_v x[c,t,v] * m[v,j]   (m is V×J)
void k_contract_vertex(const double* x, int C, int T, int V, const double* m, int J, double* y);
// gx[c,t,v] += sum_j gy[c,t,j] * m[v,j]
void k_contract_vertex_bx(const double* gy, int C, int T, int V, const double* m, int J,
                          double* gx);
// gm[v,j] += sum_{c,t} x[c,t,v] * gy[c,t,j]
void k_contract_vertex_bm(const double* gy, const double* x, int C, int T, int V, int J,
                          double* gm);

// y[c,i,v] = sum_t x[c,t,v] * m[t,i]   (m is T×I)
void k_contract_time(const double* x, int C, int T, int V, const double* m, int I, double* y);
void k_contract_time_bx(const double* gy, int C, int T, int V, const double* m, int I,
                        double* gx);
void k_contract_time_bm(const double* gy, const double* x, int C, int T, int V, int I,
                        double* gm);

// y[o,s] = sum_c x[c,s] * theta[c,o] + bias[o]   over S = T*V sites
void k_chanmap(const double* x, int Cin, int S, const double* theta, const double* bias,
               int Cout, double* y);
void k_chanmap_bx(const double* gy, int Cin, int S, const double* theta, int Cout, double* gx);
void k_chanmap_bw(const double* gy, const double* x, int Cin, int S, int Cout, double* gtheta,
                  double* gbias);

// ---- small dense matrix helpers (row-major) ----
// C (n×m) (+)= A (n×k) · B (k×m)
void mm_nn(const double* A, const double* B, double* C, int n, int k, int m, bool accumulate);
// C (n×m) (+)= Aᵀ (n×k from A k×n) · B (k×m)
void mm_tn(const double* A, const double* B, double* C, int n, int k, int m, bool accumulate);
// C (n×m) (+)= A (n×k) · Bᵀ (k×m from B m×k)
void mm_nt(const double* A, const double* B, double* C, int n, int k, int m, bool accumulate);

// ---- spec-level operations on Tensor (single sample C×T×V) ----

Tensor contract_axis(const Tensor& x, const Tensor& m, Axis axis);
void contract_axis_backward(const Tensor& gy, const Tensor& x, const Tensor& m, Axis axis,
                            Tensor& gx_accum, Tensor& gm_accum);

Tensor pointwise_channel_map(const Tensor& x, const Tensor& theta, const Tensor* bias);
void pointwise_channel_map_backward(const Tensor& gy, const Tensor& x, const Tensor& theta,
                                    Tensor& gx_accum, Tensor& gtheta_accum, Tensor* gbias_accum);

// temporal convolution, weights C_out×C_in×k, zero padding d*(k-1)/2, per joint
struct ConvSpec {
    int kernel = 1;
    int dilation = 1;
    int stride = 1;
};
int conv_out_frames(int T, int stride);
Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvSpec& cs);
void temporal_conv_backward(const Tensor& gy, const Tensor& x, const Tensor& w,
                            const ConvSpec& cs, Tensor& gx_accum, Tensor& gw_accum,
                            Tensor* gbias_accum);

// temporal max pool, kernel 3 pad 1, records argmax frame per output site
Tensor max_pool_time(const Tensor& x, int kernel, int stride, std::vector<int32_t>& argmax);
void max_pool_time_backward(const Tensor& gy, const std::vector<int32_t>& argmax, int C, int T,
                            int V, Tensor& gx_accum);

// keep every stride-th frame
Tensor subsample_time(const Tensor& x, int stride);
void subsample_time_backward(const Tensor& gy, int stride, int T, Tensor& gx_accum);

// ---- activations ----
enum class Act { relu, sigmoid, tanh_ };
Tensor activation(const Tensor& x, Act kind);
// grad wrt x given the forward output y
void activation_backward(const Tensor& gy, const Tensor& y, Act kind, Tensor& gx_accum);

// ---- batch norm over B×C×T×V, per-channel stats across (B,T,V) ----
struct BnCache {
    Tensor xhat;              // normalized input
    std::vector<double> mean; // per channel
    std::vector<double> inv_std;
    bool train = true;
};
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool train, BnCache& cache);
void batch_norm_backward(const Tensor& gy, const Tensor& gamma, const BnCache& cache,
                         Tensor& gx_accum, Tensor& ggamma_accum, Tensor& gbeta_accum);

// ---- loss ----
struct XentResult {
    double loss = 0.0;
    Tensor grad;  // B×K, already divided by B
    Tensor probs; // B×K softmax
};
XentResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

} // namespace dsthcn::ops
