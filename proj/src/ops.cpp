#include "dsthcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsthcn::ops {

// ---- raw kernels ----

void k_contract_vertex(const double* x, int C, int T, int V, const double* m, int J, double* y) {
    for (int c = 0; c < C; ++c) {
        for (int t = 0; t < T; ++t) {
            const double* xr = x + (static_cast<std::size_t>(c) * T + t) * V;
            double* yr = y + (static_cast<std::size_t>(c) * T + t) * J;
            std::fill(yr, yr + J, 0.0);
            for (int v = 0; v < V; ++v) {
                const double xv = xr[v];
                if (xv == 0.0) continue;
                const double* mr = m + static_cast<std::size_t>(v) * J;
                for (int j = 0; j < J; ++j) yr[j] += xv * mr[j];
            }
        }
    }
}

void k_contract_vertex_bx(const double* gy, int C, int T, int V, const double* m, int J,
                          double* gx) {
    for (int c = 0; c < C; ++c) {
        for (int t = 0; t < T; ++t) {
            const double* gr = gy + (static_cast<std::size_t>(c) * T + t) * J;
            double* xr = gx + (static_cast<std::size_t>(c) * T + t) * V;
            for (int v = 0; v < V; ++v) {
                const double* mr = m + static_cast<std::size_t>(v) * J;
                double acc = 0.0;
                for (int j = 0; j < J; ++j) acc += gr[j] * mr[j];
                xr[v] += acc;
            }
        }
    }
}

void k_contract_vertex_bm(const double* gy, const double* x, int C, int T, int V, int J,
                          double* gm) {
    for (int c = 0; c < C; ++c) {
        for (int t = 0; t < T; ++t) {
            const double* xr = x + (static_cast<std::size_t>(c) * T + t) * V;
            const double* gr = gy + (static_cast<std::size_t>(c) * T + t) * J;
            for (int v = 0; v < V; ++v) {
                const double xv = xr[v];
                if (xv == 0.0) continue;
                double* mr = gm + static_cast<std::size_t>(v) * J;
                for (int j = 0; j < J; ++j) mr[j] += xv * gr[j];
            }
        }
    }
}

void k_contract_time(const double* x, int C, int T, int V, const double* m, int I, double* y) {
    std::fill(y, y + static_cast<std::size_t>(C) * I * V, 0.0);
    for (int c = 0; c < C; ++c) {
        for (int t = 0; t < T; ++t) {
            const double* xr = x + (static_cast<std::size_t>(c) * T + t) * V;
            const double* mr = m + static_cast<std::size_t>(t) * I;
            for (int i = 0; i < I; ++i) {
                const double w = mr[i];
                if (w == 0.0) continue;
                double* yr = y + (static_cast<std::size_t>(c) * I + i) * V;
                for (int v = 0; v < V; ++v) yr[v] += w * xr[v];
            }
        }
    }
}

void k_contract_time_bx(const double* gy, int C, int T, int V, const double* m, int I,
                        double* gx) {
    for (int c = 0; c < C; ++c) {
        for (int t = 0; t < T; ++t) {
            double* xr = gx + (static_cast<std::size_t>(c) * T + t) * V;
            const double* mr = m + static_cast<std::size_t>(t) * I;
            for (int i = 0; i < I; ++i) {
                const double w = mr[i];
                if (w == 0.0) continue;
                const double* gr = gy + (static_cast<std::size_t>(c) * I + i) * V;
                for (int v = 0; v < V; ++v) xr[v] += w * gr[v];
            }
        }
    }
}

void k_contract_time_bm(const double* gy, const double* x, int C, int T, int V, int I,
                        double* gm) {
    for (int c = 0; c < C; ++c) {
        for (int t = 0; t < T; ++t) {
            const double* xr = x + (static_cast<std::size_t>(c) * T + t) * V;
            double* mr = gm + static_cast<std::size_t>(t) * I;
            for (int i = 0; i < I; ++i) {
                const double* gr = gy + (static_cast<std::size_t>(c) * I + i) * V;
                double acc = 0.0;
                for (int v = 0; v < V; ++v) acc += xr[v] * gr[v];
                mr[i] += acc;
            }
        }
    }
}

void k_chanmap(const double* x, int Cin, int S, const double* theta, const double* bias,
               int Cout, double* y) {
    for (int o = 0; o < Cout; ++o) {
        double* yr = y + static_cast<std::size_t>(o) * S;
        const double b = bias ? bias[o] : 0.0;
        std::fill(yr, yr + S, b);
    }
    for (int c = 0; c < Cin; ++c) {
        const double* xr = x + static_cast<std::size_t>(c) * S;
        const double* th = theta + static_cast<std::size_t>(c) * Cout;
        for (int o = 0; o < Cout; ++o) {
            const double w = th[o];
            if (w == 0.0) continue;
            double* yr = y + static_cast<std::size_t>(o) * S;
            for (int s = 0; s < S; ++s) yr[s] += w * xr[s];
        }
    }
}

void k_chanmap_bx(const double* gy, int Cin, int S, const double* theta, int Cout, double* gx) {
    for (int c = 0; c < Cin; ++c) {
        double* xr = gx + static_cast<std::size_t>(c) * S;
        const double* th = theta + static_cast<std::size_t>(c) * Cout;
        for (int o = 0; o < Cout; ++o) {
            const double w = th[o];
            if (w == 0.0) continue;
            const double* gr = gy + static_cast<std::size_t>(o) * S;
            for (int s = 0; s < S; ++s) xr[s] += w * gr[s];
        }
    }
}

void k_chanmap_bw(const double* gy, const double* x, int Cin, int S, int Cout, double* gtheta,
                  double* gbias) {
    for (int c = 0; c < Cin; ++c) {
        const double* xr = x + static_cast<std::size_t>(c) * S;
        double* th = gtheta + static_cast<std::size_t>(c) * Cout;
        for (int o = 0; o < Cout; ++o) {
            const double* gr = gy + static_cast<std::size_t>(o) * S;
            double acc = 0.0;
            for (int s = 0; s < S; ++s) acc += xr[s] * gr[s];
            th[o] += acc;
        }
    }
    if (gbias) {
        for (int o = 0; o < Cout; ++o) {
            const double* gr = gy + static_cast<std::size_t>(o) * S;
            double acc = 0.0;
            for (int s = 0; s < S; ++s) acc += gr[s];
            gbias[o] += acc;
        }
    }
}

void mm_nn(const double* A, const double* B, double* C, int n, int k, int m, bool accumulate) {
    if (!accumulate) std::fill(C, C + static_cast<std::size_t>(n) * m, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* ar = A + static_cast<std::size_t>(i) * k;
        double* cr = C + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double a = ar[p];
            if (a == 0.0) continue;
            const double* br = B + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) cr[j] += a * br[j];
        }
    }
}

void mm_tn(const double* A, const double* B, double* C, int n, int k, int m, bool accumulate) {
    if (!accumulate) std::fill(C, C + static_cast<std::size_t>(n) * m, 0.0);
    for (int p = 0; p < k; ++p) {
        const double* ar = A + static_cast<std::size_t>(p) * n;
        const double* br = B + static_cast<std::size_t>(p) * m;
        for (int i = 0; i < n; ++i) {
            const double a = ar[i];
            if (a == 0.0) continue;
            double* cr = C + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) cr[j] += a * br[j];
        }
    }
}

void mm_nt(const double* A, const double* B, double* C, int n, int k, int m, bool accumulate) {
    if (!accumulate) std::fill(C, C + static_cast<std::size_t>(n) * m, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* ar = A + static_cast<std::size_t>(i) * k;
        double* cr = C + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const double* br = B + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
            cr[j] += acc;
        }
    }
}

// ---- tensor-level ops ----

static void require_ctv(const Tensor& x, const char* who) {
    if (x.rank() != 3) throw dim_error(std::string(who) + ": expected C×T×V tensor, got rank " +
                                       std::to_string(x.rank()));
}

Tensor contract_axis(const Tensor& x, const Tensor& m, Axis axis) {
    require_ctv(x, "contract_axis");
    if (m.rank() != 2 || m.dim(0) != m.dim(1)) throw dim_error("contract_axis: m must be square");
    const int C = x.dim(0), T = x.dim(1), V = x.dim(2);
    const int ext = axis == Axis::vertex ? V : T;
    if (m.dim(0) != ext) throw dim_error("contract_axis: extent mismatch " + shape_str(m.shape));
    Tensor y({C, T, V});
    if (axis == Axis::vertex)
        k_contract_vertex(x.ptr(), C, T, V, m.ptr(), V, y.ptr());
    else
        k_contract_time(x.ptr(), C, T, V, m.ptr(), T, y.ptr());
    return y;
}

void contract_axis_backward(const Tensor& gy, const Tensor& x, const Tensor& m, Axis axis,
                            Tensor& gx_accum, Tensor& gm_accum) {
    const int C = x.dim(0), T = x.dim(1), V = x.dim(2);
    if (axis == Axis::vertex) {
        k_contract_vertex_bx(gy.ptr(), C, T, V, m.ptr(), V, gx_accum.ptr());
        k_contract_vertex_bm(gy.ptr(), x.ptr(), C, T, V, V, gm_accum.ptr());
    } else {
        k_contract_time_bx(gy.ptr(), C, T, V, m.ptr(), T, gx_accum.ptr());
        k_contract_time_bm(gy.ptr(), x.ptr(), C, T, V, T, gm_accum.ptr());
    }
}

Tensor pointwise_channel_map(const Tensor& x, const Tensor& theta, const Tensor* bias) {
    require_ctv(x, "pointwise_channel_map");
    if (theta.rank() != 2 || theta.dim(0) != x.dim(0))
        throw dim_error("pointwise_channel_map: theta rows must equal C_in");
    const int Cin = x.dim(0), T = x.dim(1), V = x.dim(2), Cout = theta.dim(1);
    if (bias && static_cast<int>(bias->numel()) != Cout)
        throw dim_error("pointwise_channel_map: bias length mismatch");
    Tensor y({Cout, T, V});
    k_chanmap(x.ptr(), Cin, T * V, theta.ptr(), bias ? bias->ptr() : nullptr, Cout, y.ptr());
    return y;
}

void pointwise_channel_map_backward(const Tensor& gy, const Tensor& x, const Tensor& theta,
                                    Tensor& gx_accum, Tensor& gtheta_accum,
                                    Tensor* gbias_accum) {
    const int Cin = x.dim(0), S = x.dim(1) * x.dim(2), Cout = theta.dim(1);
    k_chanmap_bx(gy.ptr(), Cin, S, theta.ptr(), Cout, gx_accum.ptr());
    k_chanmap_bw(gy.ptr(), x.ptr(), Cin, S, Cout, gtheta_accum.ptr(),
                 gbias_accum ? gbias_accum->ptr() : nullptr);
}

int conv_out_frames(int T, int stride) { return (T + stride - 1) / stride; }

Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvSpec& cs) {
    require_ctv(x, "temporal_conv");
    if (cs.kernel % 2 == 0) throw input_error("temporal_conv: kernel must be odd");
    if (x.dim(1) < 1) throw dim_error("temporal_conv: empty time axis");
    if (w.rank() != 3 || w.dim(1) != x.dim(0) || w.dim(2) != cs.kernel)
        throw dim_error("temporal_conv: weight shape mismatch");
    const int Cin = x.dim(0), T = x.dim(1), V = x.dim(2), Cout = w.dim(0);
    const int pad = cs.dilation * (cs.kernel - 1) / 2;
    const int To = conv_out_frames(T, cs.stride);
    Tensor y({Cout, To, V});
    for (int o = 0; o < Cout; ++o) {
        const double b = bias ? bias->data[o] : 0.0;
        for (int to = 0; to < To; ++to) {
            double* yr = y.ptr() + (static_cast<std::size_t>(o) * To + to) * V;
            std::fill(yr, yr + V, b);
            for (int c = 0; c < Cin; ++c) {
                const double* wr = w.ptr() + (static_cast<std::size_t>(o) * Cin + c) * cs.kernel;
                for (int j = 0; j < cs.kernel; ++j) {
                    const int t = to * cs.stride + j * cs.dilation - pad;
                    if (t < 0 || t >= T) continue;
                    const double wj = wr[j];
                    if (wj == 0.0) continue;
                    const double* xr = x.ptr() + (static_cast<std::size_t>(c) * T + t) * V;
                    for (int v = 0; v < V; ++v) yr[v] += wj * xr[v];
                }
            }
        }
    }
    return y;
}

void temporal_conv_backward(const Tensor& gy, const Tensor& x, const Tensor& w,
                            const ConvSpec& cs, Tensor& gx_accum, Tensor& gw_accum,
                            Tensor* gbias_accum) {
    const int Cin = x.dim(0), T = x.dim(1), V = x.dim(2), Cout = w.dim(0);
    const int pad = cs.dilation * (cs.kernel - 1) / 2;
    const int To = gy.dim(1);
    for (int o = 0; o < Cout; ++o) {
        for (int to = 0; to < To; ++to) {
            const double* gr = gy.ptr() + (static_cast<std::size_t>(o) * To + to) * V;
            if (gbias_accum) {
                double acc = 0.0;
                for (int v = 0; v < V; ++v) acc += gr[v];
                gbias_accum->data[o] += acc;
            }
            for (int c = 0; c < Cin; ++c) {
                const double* wr = w.ptr() + (static_cast<std::size_t>(o) * Cin + c) * cs.kernel;
                double* gwr = gw_accum.ptr() + (static_cast<std::size_t>(o) * Cin + c) * cs.kernel;
                for (int j = 0; j < cs.kernel; ++j) {
                    const int t = to * cs.stride + j * cs.dilation - pad;
                    if (t < 0 || t >= T) continue;
                    const double* xr = x.ptr() + (static_cast<std::size_t>(c) * T + t) * V;
                    double* gxr = gx_accum.ptr() + (static_cast<std::size_t>(c) * T + t) * V;
                    const double wj = wr[j];
                    double acc = 0.0;
                    for (int v = 0; v < V; ++v) {
                        acc += xr[v] * gr[v];
                        gxr[v] += wj * gr[v];
                    }
                    gwr[j] += acc;
                }
            }
        }
    }
}

Tensor max_pool_time(const Tensor& x, int kernel, int stride, std::vector<int32_t>& argmax) {
    require_ctv(x, "max_pool_time");
    const int C = x.dim(0), T = x.dim(1), V = x.dim(2);
    const int pad = (kernel - 1) / 2;
    const int To = conv_out_frames(T, stride);
    Tensor y({C, To, V});
    argmax.assign(static_cast<std::size_t>(C) * To * V, 0);
    for (int c = 0; c < C; ++c) {
        for (int to = 0; to < To; ++to) {
            for (int v = 0; v < V; ++v) {
                double best = -std::numeric_limits<double>::infinity();
                int best_t = -1;
                for (int j = 0; j < kernel; ++j) {
                    const int t = to * stride + j - pad;
                    if (t < 0 || t >= T) continue;
                    const double val = x.at3(c, t, v);
                    if (val > best) { // ties keep the first frame
                        best = val;
                        best_t = t;
                    }
                }
                y.at3(c, to, v) = best;
                argmax[(static_cast<std::size_t>(c) * To + to) * V + v] = best_t;
            }
        }
    }
    return y;
}

void max_pool_time_backward(const Tensor& gy, const std::vector<int32_t>& argmax, int C, int T,
                            int V, Tensor& gx_accum) {
    (void)T;
    const int To = gy.dim(1);
    for (int c = 0; c < C; ++c)
        for (int to = 0; to < To; ++to)
            for (int v = 0; v < V; ++v) {
                const int t = argmax[(static_cast<std::size_t>(c) * To + to) * V + v];
                gx_accum.at3(c, t, v) += gy.at3(c, to, v);
            }
}

Tensor subsample_time(const Tensor& x, int stride) {
    require_ctv(x, "subsample_time");
    const int C = x.dim(0), T = x.dim(1), V = x.dim(2);
    const int To = conv_out_frames(T, stride);
    Tensor y({C, To, V});
    for (int c = 0; c < C; ++c)
        for (int to = 0; to < To; ++to)
            for (int v = 0; v < V; ++v) y.at3(c, to, v) = x.at3(c, to * stride, v);
    return y;
}

void subsample_time_backward(const Tensor& gy, int stride, int T, Tensor& gx_accum) {
    (void)T;
    const int C = gy.dim(0), To = gy.dim(1), V = gy.dim(2);
    for (int c = 0; c < C; ++c)
        for (int to = 0; to < To; ++to)
            for (int v = 0; v < V; ++v) gx_accum.at3(c, to * stride, v) += gy.at3(c, to, v);
}

Tensor activation(const Tensor& x, Act kind) {
    Tensor y = x;
    switch (kind) {
    case Act::relu:
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        break;
    case Act::sigmoid:
        for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
        break;
    case Act::tanh_:
        for (double& v : y.data) v = std::tanh(v);
        break;
    }
    return y;
}

void activation_backward(const Tensor& gy, const Tensor& y, Act kind, Tensor& gx_accum) {
    const std::size_t n = y.numel();
    switch (kind) {
    case Act::relu:
        for (std::size_t i = 0; i < n; ++i)
            if (y.data[i] > 0.0) gx_accum.data[i] += gy.data[i];
        break;
    case Act::sigmoid:
        for (std::size_t i = 0; i < n; ++i)
            gx_accum.data[i] += gy.data[i] * y.data[i] * (1.0 - y.data[i]);
        break;
    case Act::tanh_:
        for (std::size_t i = 0; i < n; ++i)
            gx_accum.data[i] += gy.data[i] * (1.0 - y.data[i] * y.data[i]);
        break;
    }
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool train, BnCache& cache) {
    if (x.rank() != 4) throw dim_error("batch_norm: expected B×C×T×V");
    const int B = x.dim(0), C = x.dim(1), T = x.dim(2), V = x.dim(3);
    if (B < 1 || T < 1 || V < 1) throw dim_error("batch_norm: empty batch");
    const std::size_t N = static_cast<std::size_t>(B) * T * V;
    const std::size_t stride_c = static_cast<std::size_t>(T) * V;
    cache.train = train;
    cache.mean.assign(C, 0.0);
    cache.inv_std.assign(C, 0.0);
    Tensor y(x.shape);
    cache.xhat = Tensor(x.shape);
    for (int c = 0; c < C; ++c) {
        double mean, var;
        if (train) {
            double sum = 0.0, sq = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* xr = x.ptr() + (static_cast<std::size_t>(b) * C + c) * stride_c;
                for (std::size_t s = 0; s < stride_c; ++s) {
                    sum += xr[s];
                    sq += xr[s] * xr[s];
                }
            }
            mean = sum / static_cast<double>(N);
            var = sq / static_cast<double>(N) - mean * mean;
            if (var < 0.0) var = 0.0;
            running_mean.data[c] = (1.0 - kBnMomentum) * running_mean.data[c] + kBnMomentum * mean;
            running_var.data[c] = (1.0 - kBnMomentum) * running_var.data[c] + kBnMomentum * var;
        } else {
            mean = running_mean.data[c];
            var = running_var.data[c];
        }
        const double inv = 1.0 / std::sqrt(var + kBnEps);
        cache.mean[c] = mean;
        cache.inv_std[c] = inv;
        const double g = gamma.data[c], bt = beta.data[c];
        for (int b = 0; b < B; ++b) {
            const double* xr = x.ptr() + (static_cast<std::size_t>(b) * C + c) * stride_c;
            double* hr = cache.xhat.ptr() + (static_cast<std::size_t>(b) * C + c) * stride_c;
            double* yr = y.ptr() + (static_cast<std::size_t>(b) * C + c) * stride_c;
            for (std::size_t s = 0; s < stride_c; ++s) {
                hr[s] = (xr[s] - mean) * inv;
                yr[s] = g * hr[s] + bt;
            }
        }
    }
    return y;
}

void batch_norm_backward(const Tensor& gy, const Tensor& gamma, const BnCache& cache,
                         Tensor& gx_accum, Tensor& ggamma_accum, Tensor& gbeta_accum) {
    const int B = gy.dim(0), C = gy.dim(1), T = gy.dim(2), V = gy.dim(3);
    const std::size_t N = static_cast<std::size_t>(B) * T * V;
    const std::size_t stride_c = static_cast<std::size_t>(T) * V;
    for (int c = 0; c < C; ++c) {
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (int b = 0; b < B; ++b) {
            const double* gr = gy.ptr() + (static_cast<std::size_t>(b) * C + c) * stride_c;
            const double* hr = cache.xhat.ptr() + (static_cast<std::size_t>(b) * C + c) * stride_c;
            for (std::size_t s = 0; s < stride_c; ++s) {
                sum_gy += gr[s];
                sum_gy_xhat += gr[s] * hr[s];
            }
        }
        ggamma_accum.data[c] += sum_gy_xhat;
        gbeta_accum.data[c] += sum_gy;
        const double g = gamma.data[c];
        const double inv = cache.inv_std[c];
        for (int b = 0; b < B; ++b) {
            const double* gr = gy.ptr() + (static_cast<std::size_t>(b) * C + c) * stride_c;
            const double* hr = cache.xhat.ptr() + (static_cast<std::size_t>(b) * C + c) * stride_c;
            double* xr = gx_accum.ptr() + (static_cast<std::size_t>(b) * C + c) * stride_c;
            if (cache.train) {
                const double ninv = 1.0 / static_cast<double>(N);
                for (std::size_t s = 0; s < stride_c; ++s)
                    xr[s] += g * inv * (gr[s] - ninv * (sum_gy + hr[s] * sum_gy_xhat));
            } else {
                for (std::size_t s = 0; s < stride_c; ++s) xr[s] += g * inv * gr[s];
            }
        }
    }
}

XentResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw dim_error("softmax_cross_entropy: expected B×K");
    const int B = logits.dim(0), K = logits.dim(1);
    if (K < 2) throw input_error("softmax_cross_entropy: K must be >= 2");
    if (static_cast<int>(labels.size()) != B)
        throw input_error("softmax_cross_entropy: label count mismatch");
    XentResult r;
    r.grad = Tensor({B, K});
    r.probs = Tensor({B, K});
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= K) throw input_error("softmax_cross_entropy: label out of range");
        const double* lr = logits.ptr() + static_cast<std::size_t>(b) * K;
        double mx = lr[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, lr[k]);
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(lr[k] - mx);
        const double logz = std::log(z) + mx;
        loss += logz - lr[y];
        double* pr = r.probs.ptr() + static_cast<std::size_t>(b) * K;
        double* gr = r.grad.ptr() + static_cast<std::size_t>(b) * K;
        for (int k = 0; k < K; ++k) {
            pr[k] = std::exp(lr[k] - logz);
            gr[k] = (pr[k] - (k == y ? 1.0 : 0.0)) / static_cast<double>(B);
        }
    }
    r.loss = loss / static_cast<double>(B);
    return r;
}

} // namespace dsthcn::ops
