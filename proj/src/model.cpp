#include "dsthcn/model.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <functional>
#include <thread>

#include "dsthcn/rng.hpp"

namespace dsthcn {

namespace {

Tensor slice3(const Tensor& x4, int b) {
    Tensor y({x4.dim(1), x4.dim(2), x4.dim(3)});
    const std::size_t n = y.numel();
    std::memcpy(y.ptr(), x4.ptr() + static_cast<std::size_t>(b) * n, n * sizeof(double));
    return y;
}

void set3(Tensor& x4, int b, const Tensor& y) {
    const std::size_t n = y.numel();
    std::memcpy(x4.ptr() + static_cast<std::size_t>(b) * n, y.ptr(), n * sizeof(double));
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(threads, n);
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    for (auto& t : pool) t.join();
}

void init_uniform(Param* p, std::mt19937_64& rng, double limit) {
    for (double& v : p->value.data) v = uniform_draw(rng, -limit, limit);
}

double glorot_limit(int fan_in, int fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

} // namespace

void ModelConfig::validate() const {
    if (c_in < 1) throw input_error("config: c_in must be positive");
    if (frames < 1) throw input_error("config: frames must be positive");
    if (num_classes < 2) throw input_error("config: need at least 2 classes");
    if (channels.empty() || channels.size() != strides.size())
        throw input_error("config: channels/strides must be non-empty and match");
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i] < 4 || channels[i] % 4 != 0)
            throw input_error("config: block channels must be positive multiples of 4");
        if (strides[i] != 1 && strides[i] != 2)
            throw input_error("config: stride must be 1 or 2");
    }
    if (k_temporal < 1) throw input_error("config: k_temporal must be positive");
    if (k_spatial < 1) throw input_error("config: k_spatial must be positive");
    if (kmeans_clusters < 1) throw input_error("config: kmeans_clusters must be positive");
    if (threads < 1) throw input_error("config: threads must be positive");
}

BlockTopology build_topology(const SkeletonDefinition& sk, const ModelConfig& cfg,
                             uint64_t kmeans_seed) {
    const int V = sk.joint_count;
    if (cfg.k_spatial > V) throw input_error("config: k_spatial exceeds joint count");
    if (cfg.kmeans_clusters > V) throw input_error("config: kmeans_clusters exceeds joint count");
    BlockTopology topo;
    topo.h_n.push_back(spatial_knn(sk, cfg.k_spatial));
    topo.h_n.push_back(spatial_kmeans(sk, cfg.kmeans_clusters, kmeans_seed));
    topo.h_n.push_back(spatial_parts(sk));
    for (const auto& h : topo.h_n) topo.s_n.push_back(symmetrized(normalize(h)));
    topo.parts = graph_partitions(sk);
    return topo;
}

Block::Block(ParamStore& ps, const std::string& prefix, const BlockTopology& topo, int V,
             int c_in, int c_out, int t_in, int stride, bool use_residual, int k_temporal,
             std::mt19937_64& rng)
    : topo_(&topo), V_(V), c_in_(c_in), c_out_(c_out), c_mid_(c_out), c4_(c_out / 4),
      t_in_(t_in), stride_(stride), k_t_(std::min(k_temporal, t_in)),
      use_residual_(use_residual), res_proj_(c_in != c_out || stride != 1) {
    const int T = t_in_;
    const int cr = tph_reduced_channels(c_in_);
    reducer_ = ps.add(prefix + ".tph.reducer", {c_in_, cr});
    init_uniform(reducer_, rng, std::sqrt(1.0 / c_in_));
    const double th_lim = glorot_limit(c_in_, c_mid_);
    for (int i = 0; i < kTopologies; ++i) {
        theta_a_w_[static_cast<std::size_t>(i)] =
            ps.add(prefix + ".topo" + std::to_string(i) + ".theta_a.w", {c_in_, c_mid_});
        theta_a_b_[static_cast<std::size_t>(i)] =
            ps.add(prefix + ".topo" + std::to_string(i) + ".theta_a.b", {c_mid_});
        init_uniform(theta_a_w_[static_cast<std::size_t>(i)], rng, th_lim);
    }
    theta_b_w_ = ps.add(prefix + ".theta_b.w", {c_in_, c_mid_});
    theta_b_b_ = ps.add(prefix + ".theta_b.b", {c_mid_});
    theta_d_w_ = ps.add(prefix + ".theta_d.w", {c_in_, c_mid_});
    theta_d_b_ = ps.add(prefix + ".theta_d.b", {c_mid_});
    theta_e_w_ = ps.add(prefix + ".theta_e.w", {c_in_, c_mid_});
    theta_e_b_ = ps.add(prefix + ".theta_e.b", {c_mid_});
    init_uniform(theta_b_w_, rng, th_lim);
    init_uniform(theta_d_w_, rng, th_lim);
    init_uniform(theta_e_w_, rng, th_lim);
    for (int k = 0; k < 3; ++k) {
        m_[static_cast<std::size_t>(k)] =
            ps.add(prefix + ".graph.m" + std::to_string(k), {c_in_, c_mid_});
        init_uniform(m_[static_cast<std::size_t>(k)], rng, th_lim);
    }
    for (int i = 0; i < kTopologies; ++i) {
        const int E = topo.h_n[static_cast<std::size_t>(i)].edges;
        auto& cp = cross_[static_cast<std::size_t>(i)];
        const std::string cpfx = prefix + ".topo" + std::to_string(i) + ".cross.";
        cp.mu_st = ps.add(cpfx + "mu_st", {E, T});
        cp.phi_st = ps.add(cpfx + "phi_st", {V_, T});
        cp.mu_ts = ps.add(cpfx + "mu_ts", {T, V_});
        cp.phi_l = ps.add(cpfx + "phi_ts_l", {T, V_});
        cp.phi_r = ps.add(cpfx + "phi_ts_r", {E, V_});
        init_uniform(cp.mu_st, rng, std::sqrt(1.0 / E));
        init_uniform(cp.phi_st, rng, std::sqrt(1.0 / V_));
        init_uniform(cp.mu_ts, rng, std::sqrt(1.0 / T));
        init_uniform(cp.phi_l, rng, std::sqrt(1.0 / T));
        init_uniform(cp.phi_r, rng, std::sqrt(1.0 / E));
    }
    beta_ = ps.add(prefix + ".hif.beta", {1}, true, false);
    beta_->value.data[0] = 2.0;
    mixer_w_ = ps.add(prefix + ".hif.mixer.w", {3 * c_mid_, c_out_});
    mixer_b_ = ps.add(prefix + ".hif.mixer.b", {c_out_});
    init_uniform(mixer_w_, rng, glorot_limit(3 * c_mid_, c_out_));
    for (int j = 0; j < 4; ++j) {
        red_w_[static_cast<std::size_t>(j)] =
            ps.add(prefix + ".tf.red" + std::to_string(j) + ".w", {c_out_, c4_});
        red_b_[static_cast<std::size_t>(j)] =
            ps.add(prefix + ".tf.red" + std::to_string(j) + ".b", {c4_});
        init_uniform(red_w_[static_cast<std::size_t>(j)], rng, glorot_limit(c_out_, c4_));
    }
    wa_ = ps.add(prefix + ".tf.conv_d1.w", {c4_, c4_, 5});
    wa_bias_ = ps.add(prefix + ".tf.conv_d1.b", {c4_});
    wb_ = ps.add(prefix + ".tf.conv_d2.w", {c4_, c4_, 5});
    wb_bias_ = ps.add(prefix + ".tf.conv_d2.b", {c4_});
    init_uniform(wa_, rng, std::sqrt(1.0 / (c4_ * 5)));
    init_uniform(wb_, rng, std::sqrt(1.0 / (c4_ * 5)));
    att1_w_ = ps.add(prefix + ".tf.att1.w", {c_out_, c4_});
    att1_b_ = ps.add(prefix + ".tf.att1.b", {c4_});
    att2_w_ = ps.add(prefix + ".tf.att2.w", {c4_, c_out_});
    att2_b_ = ps.add(prefix + ".tf.att2.b", {c_out_});
    init_uniform(att1_w_, rng, glorot_limit(c_out_, c4_));
    init_uniform(att2_w_, rng, glorot_limit(c4_, c_out_));
    bn_gamma_ = ps.add(prefix + ".bn.gamma", {c_out_}, true, false);
    bn_beta_ = ps.add(prefix + ".bn.beta", {c_out_}, true, false);
    bn_rm_ = ps.add(prefix + ".bn.running_mean", {c_out_}, false, false);
    bn_rv_ = ps.add(prefix + ".bn.running_var", {c_out_}, false, false);
    for (double& v : bn_gamma_->value.data) v = 1.0;
    for (double& v : bn_rv_->value.data) v = 1.0;
    if (use_residual_ && res_proj_) {
        res_w_ = ps.add(prefix + ".residual.w", {c_in_, c_out_});
        init_uniform(res_w_, rng, glorot_limit(c_in_, c_out_));
    }
}

double Block::beta_eff() const {
    const double b = beta_->value.data[0];
    const double sign = b < 0.0 ? -1.0 : 1.0;
    return sign * std::max(std::abs(b), kBetaFloor);
}

Tensor Block::forward_sample(int b, const Tensor& x3) {
    SampleCache& sc = cache_[static_cast<std::size_t>(b)];
    const int T = t_in_, V = V_, To = t_out();
    // dynamic time-point hypergraph, recomputed from the block input
    sc.h_t = tph_knn(x3, k_t_, reducer_->value);
    sc.s_t = symmetrized(normalize(sc.h_t));
    sc.pb = Tensor({c_in_, T, V});
    ops::k_contract_time(x3.ptr(), c_in_, T, V, sc.s_t.data(), T, sc.pb.ptr());
    sc.bprime = ops::pointwise_channel_map(sc.pb, theta_b_w_->value, &theta_b_b_->value);
    sc.sigb = ops::activation(sc.bprime, ops::Act::sigmoid);
    sc.cprime = Tensor({c_mid_, T, V});
    for (int k = 0; k < 3; ++k) {
        sc.pk[static_cast<std::size_t>(k)] = Tensor({c_in_, T, V});
        ops::k_contract_vertex(x3.ptr(), c_in_, T, V,
                               topo_->parts[static_cast<std::size_t>(k)].data(), V,
                               sc.pk[static_cast<std::size_t>(k)].ptr());
        Tensor tmp = ops::pointwise_channel_map(sc.pk[static_cast<std::size_t>(k)],
                                                m_[static_cast<std::size_t>(k)]->value, nullptr);
        for (std::size_t idx = 0; idx < sc.cprime.numel(); ++idx)
            sc.cprime.data[idx] += tmp.data[idx];
    }
    const double beff = beta_eff();
    Tensor fsum3({c_out_, T, V});
    for (int i = 0; i < kTopologies; ++i) {
        TopoCache& tc = sc.topo[static_cast<std::size_t>(i)];
        const auto& sn = topo_->s_n[static_cast<std::size_t>(i)];
        tc.pa = Tensor({c_in_, T, V});
        ops::k_contract_vertex(x3.ptr(), c_in_, T, V, sn.data(), V, tc.pa.ptr());
        tc.aprime = ops::pointwise_channel_map(tc.pa, theta_a_w_[static_cast<std::size_t>(i)]->value,
                                               &theta_a_b_[static_cast<std::size_t>(i)]->value);
        // H_ST = tanh(H_N·mu_st − phi_st·H_T), V×T signed incidence
        IncidenceMatrix inc_st(V, T);
        ops::mm_nn(cross_[static_cast<std::size_t>(i)].phi_st->value.ptr(), sc.h_t.H.data(),
                   inc_st.H.data(), V, T, T, false);
        for (std::size_t idx = 0; idx < inc_st.H.size(); ++idx)
            inc_st.H[idx] = std::tanh(u_[static_cast<std::size_t>(i)].data[idx] - inc_st.H[idx]);
        tc.nst = normalize_with_cache(inc_st);
        tc.pst = Tensor({c_in_, T, V});
        ops::k_contract_vertex(x3.ptr(), c_in_, T, V, tc.nst.op.matrix.data(), V, tc.pst.ptr());
        Tensor dprime = ops::pointwise_channel_map(tc.pst, theta_d_w_->value, &theta_d_b_->value);
        // H_TS = tanh(H_T·mu_ts − phi_l·H_N·phi_r), T×V signed incidence
        IncidenceMatrix inc_ts(T, V);
        ops::mm_nn(sc.h_t.H.data(), cross_[static_cast<std::size_t>(i)].mu_ts->value.ptr(),
                   inc_ts.H.data(), T, T, V, false);
        for (std::size_t idx = 0; idx < inc_ts.H.size(); ++idx)
            inc_ts.H[idx] = std::tanh(inc_ts.H[idx] - vt_[static_cast<std::size_t>(i)].data[idx]);
        tc.nts = normalize_with_cache(inc_ts);
        tc.pts = Tensor({c_in_, T, V});
        ops::k_contract_time(x3.ptr(), c_in_, T, V, tc.nts.op.matrix.data(), T, tc.pts.ptr());
        Tensor eprime = ops::pointwise_channel_map(tc.pts, theta_e_w_->value, &theta_e_b_->value);
        // HIF: gate, Eq-style average, cross sum, channel concat + mixer
        tc.concat = Tensor({3 * c_mid_, T, V});
        const std::size_t plane = static_cast<std::size_t>(c_mid_) * T * V;
        for (std::size_t idx = 0; idx < plane; ++idx) {
            tc.concat.data[idx] = tc.aprime.data[idx] * sc.sigb.data[idx];
            tc.concat.data[plane + idx] =
                (tc.aprime.data[idx] + sc.cprime.data[idx]) / beff;
            tc.concat.data[2 * plane + idx] = dprime.data[idx] + eprime.data[idx];
        }
        tc.f = ops::pointwise_channel_map(tc.concat, mixer_w_->value, &mixer_b_->value);
        for (std::size_t idx = 0; idx < fsum3.numel(); ++idx)
            fsum3.data[idx] += tc.f.data[idx];
    }
    set3(fsum_, b, fsum3);
    // multi-scale temporal TF with channel attention
    for (int j = 0; j < 4; ++j)
        sc.branch_in[static_cast<std::size_t>(j)] = ops::pointwise_channel_map(
            fsum3, red_w_[static_cast<std::size_t>(j)]->value,
            &red_b_[static_cast<std::size_t>(j)]->value);
    sc.ya = ops::temporal_conv(sc.branch_in[0], wa_->value, &wa_bias_->value, {5, 1, stride_});
    sc.yb = ops::temporal_conv(sc.branch_in[1], wb_->value, &wb_bias_->value, {5, 2, stride_});
    sc.yc = ops::max_pool_time(sc.branch_in[2], 3, stride_, sc.pool_arg);
    sc.yd = ops::subsample_time(sc.branch_in[3], stride_);
    sc.cat = Tensor({c_out_, To, V});
    const std::size_t bplane = static_cast<std::size_t>(c4_) * To * V;
    std::memcpy(sc.cat.ptr(), sc.ya.ptr(), bplane * sizeof(double));
    std::memcpy(sc.cat.ptr() + bplane, sc.yb.ptr(), bplane * sizeof(double));
    std::memcpy(sc.cat.ptr() + 2 * bplane, sc.yc.ptr(), bplane * sizeof(double));
    std::memcpy(sc.cat.ptr() + 3 * bplane, sc.yd.ptr(), bplane * sizeof(double));
    const double inv_sites = 1.0 / static_cast<double>(To * V);
    sc.gap.assign(static_cast<std::size_t>(c_out_), 0.0);
    for (int c = 0; c < c_out_; ++c) {
        const double* row = sc.cat.ptr() + static_cast<std::size_t>(c) * To * V;
        double acc = 0.0;
        for (int s = 0; s < To * V; ++s) acc += row[s];
        sc.gap[static_cast<std::size_t>(c)] = acc * inv_sites;
    }
    sc.h1.assign(static_cast<std::size_t>(c4_), 0.0);
    for (int j = 0; j < c4_; ++j) {
        double acc = att1_b_->value.data[j];
        for (int c = 0; c < c_out_; ++c)
            acc += sc.gap[static_cast<std::size_t>(c)] * att1_w_->value.at2(c, j);
        sc.h1[static_cast<std::size_t>(j)] = acc > 0.0 ? acc : 0.0;
    }
    sc.gate.assign(static_cast<std::size_t>(c_out_), 0.0);
    for (int c = 0; c < c_out_; ++c) {
        double acc = att2_b_->value.data[c];
        for (int j = 0; j < c4_; ++j) acc += sc.h1[static_cast<std::size_t>(j)] * att2_w_->value.at2(j, c);
        sc.gate[static_cast<std::size_t>(c)] = 1.0 / (1.0 + std::exp(-acc));
    }
    Tensor pre3({c_out_, To, V});
    for (int c = 0; c < c_out_; ++c) {
        const double g = sc.gate[static_cast<std::size_t>(c)];
        const double* row = sc.cat.ptr() + static_cast<std::size_t>(c) * To * V;
        double* out = pre3.ptr() + static_cast<std::size_t>(c) * To * V;
        for (int s = 0; s < To * V; ++s) out[s] = g * row[s];
    }
    if (use_residual_) {
        if (res_proj_) {
            sc.sx = ops::subsample_time(x3, stride_);
            Tensor res = ops::pointwise_channel_map(sc.sx, res_w_->value, nullptr);
            for (std::size_t idx = 0; idx < pre3.numel(); ++idx) pre3.data[idx] += res.data[idx];
        } else {
            for (std::size_t idx = 0; idx < pre3.numel(); ++idx) pre3.data[idx] += x3.data[idx];
        }
    }
    return pre3;
}

Tensor Block::forward(const Tensor& x4, bool train, int threads) {
    if (x4.rank() != 4 || x4.dim(1) != c_in_ || x4.dim(2) != t_in_ || x4.dim(3) != V_)
        throw dim_error("block: input shape " + shape_str(x4.shape) + " does not match (B," +
                        std::to_string(c_in_) + "," + std::to_string(t_in_) + "," +
                        std::to_string(V_) + ")");
    const int B = x4.dim(0);
    x_ = x4;
    cache_.assign(static_cast<std::size_t>(B), SampleCache{});
    fsum_ = Tensor({B, c_out_, t_in_, V_});
    pre_ = Tensor({B, c_out_, t_out(), V_});
    for (int i = 0; i < kTopologies; ++i) {
        const auto& hn = topo_->h_n[static_cast<std::size_t>(i)];
        const auto& cp = cross_[static_cast<std::size_t>(i)];
        u_[static_cast<std::size_t>(i)] = Tensor({V_, t_in_});
        ops::mm_nn(hn.H.data(), cp.mu_st->value.ptr(), u_[static_cast<std::size_t>(i)].ptr(), V_,
                   hn.edges, t_in_, false);
        vt_[static_cast<std::size_t>(i)] = Tensor({t_in_, V_});
        std::vector<double> lh(static_cast<std::size_t>(t_in_) * hn.edges);
        ops::mm_nn(cp.phi_l->value.ptr(), hn.H.data(), lh.data(), t_in_, V_, hn.edges, false);
        ops::mm_nn(lh.data(), cp.phi_r->value.ptr(), vt_[static_cast<std::size_t>(i)].ptr(), t_in_,
                   hn.edges, V_, false);
    }
    parallel_for(B, threads, [&](int b) { set3(pre_, b, forward_sample(b, slice3(x_, b))); });
    Tensor bnout = ops::batch_norm(pre_, bn_gamma_->value, bn_beta_->value, bn_rm_->value,
                                   bn_rv_->value, train, bn_cache_);
    out_ = ops::activation(bnout, ops::Act::relu);
    out_.require_finite("block output");
    return out_;
}

Tensor Block::backward_sample(int b, const Tensor& gpre3) {
    SampleCache& sc = cache_[static_cast<std::size_t>(b)];
    const int T = t_in_, V = V_, To = t_out();
    Tensor x3 = slice3(x_, b);
    Tensor gx3({c_in_, T, V});
    // residual
    if (use_residual_) {
        if (res_proj_) {
            Tensor gsx({c_in_, To, V});
            ops::pointwise_channel_map_backward(gpre3, sc.sx, res_w_->value, gsx, res_w_->grad,
                                                nullptr);
            ops::subsample_time_backward(gsx, stride_, T, gx3);
        } else {
            for (std::size_t idx = 0; idx < gpre3.numel(); ++idx)
                gx3.data[idx] += gpre3.data[idx];
        }
    }
    // attention gate
    const double inv_sites = 1.0 / static_cast<double>(To * V);
    std::vector<double> ggate(static_cast<std::size_t>(c_out_), 0.0);
    Tensor gcat({c_out_, To, V});
    for (int c = 0; c < c_out_; ++c) {
        const double g = sc.gate[static_cast<std::size_t>(c)];
        const double* gr = gpre3.ptr() + static_cast<std::size_t>(c) * To * V;
        const double* cr = sc.cat.ptr() + static_cast<std::size_t>(c) * To * V;
        double* gc = gcat.ptr() + static_cast<std::size_t>(c) * To * V;
        double acc = 0.0;
        for (int s = 0; s < To * V; ++s) {
            acc += gr[s] * cr[s];
            gc[s] = gr[s] * g;
        }
        ggate[static_cast<std::size_t>(c)] = acc;
    }
    std::vector<double> gs2(static_cast<std::size_t>(c_out_));
    for (int c = 0; c < c_out_; ++c) {
        const double g = sc.gate[static_cast<std::size_t>(c)];
        gs2[static_cast<std::size_t>(c)] = ggate[static_cast<std::size_t>(c)] * g * (1.0 - g);
        att2_b_->grad.data[c] += gs2[static_cast<std::size_t>(c)];
    }
    std::vector<double> gh1(static_cast<std::size_t>(c4_), 0.0);
    for (int j = 0; j < c4_; ++j) {
        double acc = 0.0;
        for (int c = 0; c < c_out_; ++c) {
            acc += gs2[static_cast<std::size_t>(c)] * att2_w_->value.at2(j, c);
            att2_w_->grad.at2(j, c) += sc.h1[static_cast<std::size_t>(j)] * gs2[static_cast<std::size_t>(c)];
        }
        gh1[static_cast<std::size_t>(j)] = sc.h1[static_cast<std::size_t>(j)] > 0.0 ? acc : 0.0;
        att1_b_->grad.data[j] += gh1[static_cast<std::size_t>(j)];
    }
    std::vector<double> gg(static_cast<std::size_t>(c_out_), 0.0);
    for (int c = 0; c < c_out_; ++c) {
        double acc = 0.0;
        for (int j = 0; j < c4_; ++j) {
            acc += gh1[static_cast<std::size_t>(j)] * att1_w_->value.at2(c, j);
            att1_w_->grad.at2(c, j) += sc.gap[static_cast<std::size_t>(c)] * gh1[static_cast<std::size_t>(j)];
        }
        gg[static_cast<std::size_t>(c)] = acc;
    }
    for (int c = 0; c < c_out_; ++c) {
        const double spread = gg[static_cast<std::size_t>(c)] * inv_sites;
        double* gc = gcat.ptr() + static_cast<std::size_t>(c) * To * V;
        for (int s = 0; s < To * V; ++s) gc[s] += spread;
    }
    // branches
    const std::size_t bplane = static_cast<std::size_t>(c4_) * To * V;
    Tensor gya({c4_, To, V}), gyb({c4_, To, V}), gyc({c4_, To, V}), gyd({c4_, To, V});
    std::memcpy(gya.ptr(), gcat.ptr(), bplane * sizeof(double));
    std::memcpy(gyb.ptr(), gcat.ptr() + bplane, bplane * sizeof(double));
    std::memcpy(gyc.ptr(), gcat.ptr() + 2 * bplane, bplane * sizeof(double));
    std::memcpy(gyd.ptr(), gcat.ptr() + 3 * bplane, bplane * sizeof(double));
    Tensor fsum3 = slice3(fsum_, b);
    Tensor gfsum({c_out_, T, V});
    std::array<Tensor, 4> gbr = {Tensor({c4_, T, V}), Tensor({c4_, T, V}), Tensor({c4_, T, V}),
                                 Tensor({c4_, T, V})};
    ops::temporal_conv_backward(gya, sc.branch_in[0], wa_->value, {5, 1, stride_}, gbr[0],
                                wa_->grad, &wa_bias_->grad);
    ops::temporal_conv_backward(gyb, sc.branch_in[1], wb_->value, {5, 2, stride_}, gbr[1],
                                wb_->grad, &wb_bias_->grad);
    ops::max_pool_time_backward(gyc, sc.pool_arg, c4_, T, V, gbr[2]);
    ops::subsample_time_backward(gyd, stride_, T, gbr[3]);
    for (int j = 0; j < 4; ++j)
        ops::pointwise_channel_map_backward(gbr[static_cast<std::size_t>(j)], fsum3,
                                            red_w_[static_cast<std::size_t>(j)]->value, gfsum,
                                            red_w_[static_cast<std::size_t>(j)]->grad,
                                            &red_b_[static_cast<std::size_t>(j)]->grad);
    // HIF + bundle, per topology; B'/C' gradients accumulate across topologies
    const double beff = beta_eff();
    const std::size_t plane = static_cast<std::size_t>(c_mid_) * T * V;
    Tensor gsigb({c_mid_, T, V});
    Tensor gcprime({c_mid_, T, V});
    for (int i = 0; i < kTopologies; ++i) {
        TopoCache& tc = sc.topo[static_cast<std::size_t>(i)];
        const auto& hn = topo_->h_n[static_cast<std::size_t>(i)];
        const auto& cp = cross_[static_cast<std::size_t>(i)];
        Tensor gconcat({3 * c_mid_, T, V});
        ops::pointwise_channel_map_backward(gfsum, tc.concat, mixer_w_->value, gconcat,
                                            mixer_w_->grad, &mixer_b_->grad);
        Tensor ga({c_mid_, T, V});
        Tensor gy3({c_mid_, T, V});
        double gbeta_acc = 0.0;
        const bool beta_live = std::abs(beta_->value.data[0]) > kBetaFloor;
        for (std::size_t idx = 0; idx < plane; ++idx) {
            const double g1 = gconcat.data[idx];
            const double g2 = gconcat.data[plane + idx];
            const double g3 = gconcat.data[2 * plane + idx];
            ga.data[idx] = g1 * sc.sigb.data[idx] + g2 / beff;
            gsigb.data[idx] += g1 * tc.aprime.data[idx];
            gcprime.data[idx] += g2 / beff;
            gy3.data[idx] = g3;
            if (beta_live) gbeta_acc -= g2 * tc.concat.data[plane + idx] / beff;
        }
        beta_->grad.data[0] += gbeta_acc;
        // A'
        Tensor gpa({c_in_, T, V});
        ops::pointwise_channel_map_backward(ga, tc.pa,
                                            theta_a_w_[static_cast<std::size_t>(i)]->value, gpa,
                                            theta_a_w_[static_cast<std::size_t>(i)]->grad,
                                            &theta_a_b_[static_cast<std::size_t>(i)]->grad);
        ops::k_contract_vertex_bx(gpa.ptr(), c_in_, T, V,
                                  topo_->s_n[static_cast<std::size_t>(i)].data(), V, gx3.ptr());
        // D' through normalize(H_ST)
        Tensor gpst({c_in_, T, V});
        ops::pointwise_channel_map_backward(gy3, tc.pst, theta_d_w_->value, gpst, theta_d_w_->grad,
                                            &theta_d_b_->grad);
        ops::k_contract_vertex_bx(gpst.ptr(), c_in_, T, V, tc.nst.op.matrix.data(), V, gx3.ptr());
        std::vector<double> gop_st(static_cast<std::size_t>(V) * V, 0.0);
        ops::k_contract_vertex_bm(gpst.ptr(), x3.ptr(), c_in_, T, V, V, gop_st.data());
        auto gmst = normalize_backward(tc.nst, gop_st);
        for (std::size_t idx = 0; idx < gmst.size(); ++idx)
            gmst[idx] *= 1.0 - tc.nst.H[idx] * tc.nst.H[idx]; // through tanh
        // mu_st: + H_Nᵀ·gZ ; phi_st: − gZ·H_Tᵀ
        ops::mm_tn(hn.H.data(), gmst.data(), cp.mu_st->grad.ptr(), hn.edges, V, T, true);
        std::vector<double> tmp(static_cast<std::size_t>(V) * T);
        ops::mm_nt(gmst.data(), sc.h_t.H.data(), tmp.data(), V, T, T, false);
        for (std::size_t idx = 0; idx < tmp.size(); ++idx) cp.phi_st->grad.data[idx] -= tmp[idx];
        // E' through normalize(H_TS)
        Tensor gpts({c_in_, T, V});
        ops::pointwise_channel_map_backward(gy3, tc.pts, theta_e_w_->value, gpts, theta_e_w_->grad,
                                            &theta_e_b_->grad);
        ops::k_contract_time_bx(gpts.ptr(), c_in_, T, V, tc.nts.op.matrix.data(), T, gx3.ptr());
        std::vector<double> gop_ts(static_cast<std::size_t>(T) * T, 0.0);
        ops::k_contract_time_bm(gpts.ptr(), x3.ptr(), c_in_, T, V, T, gop_ts.data());
        auto gmts = normalize_backward(tc.nts, gop_ts);
        for (std::size_t idx = 0; idx < gmts.size(); ++idx)
            gmts[idx] *= 1.0 - tc.nts.H[idx] * tc.nts.H[idx];
        // mu_ts: + H_Tᵀ·gZ ; phi_l: − gZ·(H_N·phi_r)ᵀ ; phi_r: − (phi_l·H_N)ᵀ·gZ
        ops::mm_tn(sc.h_t.H.data(), gmts.data(), cp.mu_ts->grad.ptr(), T, T, V, true);
        std::vector<double> hr(static_cast<std::size_t>(V) * V);
        ops::mm_nn(hn.H.data(), cp.phi_r->value.ptr(), hr.data(), V, hn.edges, V, false);
        std::vector<double> gphil(static_cast<std::size_t>(T) * V);
        ops::mm_nt(gmts.data(), hr.data(), gphil.data(), T, V, V, false);
        for (std::size_t idx = 0; idx < gphil.size(); ++idx)
            cp.phi_l->grad.data[idx] -= gphil[idx];
        std::vector<double> lh(static_cast<std::size_t>(T) * hn.edges);
        ops::mm_nn(cp.phi_l->value.ptr(), hn.H.data(), lh.data(), T, V, hn.edges, false);
        std::vector<double> gphir(static_cast<std::size_t>(hn.edges) * V);
        ops::mm_tn(lh.data(), gmts.data(), gphir.data(), hn.edges, T, V, false);
        for (std::size_t idx = 0; idx < gphir.size(); ++idx)
            cp.phi_r->grad.data[idx] -= gphir[idx];
    }
    // B'
    Tensor gbprime({c_mid_, T, V});
    ops::activation_backward(gsigb, sc.sigb, ops::Act::sigmoid, gbprime);
    Tensor gpb({c_in_, T, V});
    ops::pointwise_channel_map_backward(gbprime, sc.pb, theta_b_w_->value, gpb, theta_b_w_->grad,
                                        &theta_b_b_->grad);
    ops::k_contract_time_bx(gpb.ptr(), c_in_, T, V, sc.s_t.data(), T, gx3.ptr());
    // C'
    for (int k = 0; k < 3; ++k) {
        Tensor gpk({c_in_, T, V});
        ops::pointwise_channel_map_backward(gcprime, sc.pk[static_cast<std::size_t>(k)],
                                            m_[static_cast<std::size_t>(k)]->value, gpk,
                                            m_[static_cast<std::size_t>(k)]->grad, nullptr);
        ops::k_contract_vertex_bx(gpk.ptr(), c_in_, T, V,
                                  topo_->parts[static_cast<std::size_t>(k)].data(), V, gx3.ptr());
    }
    // the TPH incidence is binary and locally constant in x, so nothing flows
    // back into the reducer
    return gx3;
}

Tensor Block::backward(const Tensor& gy4) {
    const int B = gy4.dim(0);
    Tensor gbn(gy4.shape);
    for (std::size_t idx = 0; idx < gbn.numel(); ++idx)
        gbn.data[idx] = out_.data[idx] > 0.0 ? gy4.data[idx] : 0.0;
    Tensor gpre(pre_.shape);
    ops::batch_norm_backward(gbn, bn_gamma_->value, bn_cache_, gpre, bn_gamma_->grad,
                             bn_beta_->grad);
    Tensor gx4({B, c_in_, t_in_, V_});
    for (int b = 0; b < B; ++b) set3(gx4, b, backward_sample(b, slice3(gpre, b)));
    return gx4;
}

Tensor Block::feature(const std::string& name, int topo, int sample) const {
    if (sample < 0 || sample >= static_cast<int>(cache_.size()))
        throw input_error("feature: sample index out of range");
    if (topo < 0 || topo >= kTopologies) throw input_error("feature: topology index out of range");
    const SampleCache& sc = cache_[static_cast<std::size_t>(sample)];
    const TopoCache& tc = sc.topo[static_cast<std::size_t>(topo)];
    if (name == "A") return tc.aprime;
    if (name == "B") return sc.bprime;
    if (name == "C") return sc.cprime;
    if (name == "D") {
        Tensor p = tc.pst;
        return ops::pointwise_channel_map(p, theta_d_w_->value, &theta_d_b_->value);
    }
    if (name == "E") {
        Tensor p = tc.pts;
        return ops::pointwise_channel_map(p, theta_e_w_->value, &theta_e_b_->value);
    }
    if (name == "F_out") return tc.f;
    if (name == "F_sum") return slice3(fsum_, sample);
    if (name == "Z_out") return slice3(out_, sample);
    throw input_error("feature: unknown name '" + name + "' (A|B|C|D|E|F_out|F_sum|Z_out)");
}

Model::Model(SkeletonDefinition sk, ModelConfig cfg) : sk_(std::move(sk)), cfg_(std::move(cfg)) {
    cfg_.validate();
    sk_.validate();
    std::mt19937_64 rng(cfg_.init_seed);
    topo_ = build_topology(sk_, cfg_, cfg_.init_seed);
    stem_gamma_ = ps_.add("stem.bn.gamma", {cfg_.c_in}, true, false);
    stem_beta_ = ps_.add("stem.bn.beta", {cfg_.c_in}, true, false);
    stem_rm_ = ps_.add("stem.bn.running_mean", {cfg_.c_in}, false, false);
    stem_rv_ = ps_.add("stem.bn.running_var", {cfg_.c_in}, false, false);
    for (double& v : stem_gamma_->value.data) v = 1.0;
    for (double& v : stem_rv_->value.data) v = 1.0;
    int c_prev = cfg_.c_in;
    int t = cfg_.frames;
    for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
        blocks_.push_back(std::make_unique<Block>(
            ps_, "block" + std::to_string(i), topo_, sk_.joint_count, c_prev, cfg_.channels[i], t,
            cfg_.strides[i], cfg_.residual, cfg_.k_temporal, rng));
        c_prev = cfg_.channels[i];
        t = blocks_.back()->t_out();
    }
    feat_t_ = t;
    head_w_ = ps_.add("head.w", {c_prev, cfg_.num_classes});
    head_b_ = ps_.add("head.b", {cfg_.num_classes});
    init_uniform(head_w_, rng, glorot_limit(c_prev, cfg_.num_classes));
}

Tensor Model::forward(const Tensor& x4, bool train) {
    if (x4.rank() != 4 || x4.dim(1) != cfg_.c_in || x4.dim(2) != cfg_.frames ||
        x4.dim(3) != sk_.joint_count)
        throw dim_error("model: input shape " + shape_str(x4.shape) + " does not match config");
    x4.require_finite("model input");
    stem_in_ = x4;
    Tensor h = ops::batch_norm(x4, stem_gamma_->value, stem_beta_->value, stem_rm_->value,
                               stem_rv_->value, train, stem_cache_);
    for (auto& b : blocks_) h = b->forward(h, train, cfg_.threads);
    feat_ = h;
    const int B = h.dim(0), C = h.dim(1), T = h.dim(2), V = h.dim(3);
    const double inv = 1.0 / static_cast<double>(T * V);
    Tensor logits({B, cfg_.num_classes});
    for (int b = 0; b < B; ++b) {
        std::vector<double> pooled(static_cast<std::size_t>(C), 0.0);
        for (int c = 0; c < C; ++c) {
            const double* row = h.ptr() + (static_cast<std::size_t>(b) * C + c) *
                                              static_cast<std::size_t>(T) * V;
            double acc = 0.0;
            for (int s = 0; s < T * V; ++s) acc += row[s];
            pooled[static_cast<std::size_t>(c)] = acc * inv;
        }
        for (int k = 0; k < cfg_.num_classes; ++k) {
            double acc = head_b_->value.data[k];
            for (int c = 0; c < C; ++c)
                acc += pooled[static_cast<std::size_t>(c)] * head_w_->value.at2(c, k);
            logits.at2(b, k) = acc;
        }
    }
    logits.require_finite("logits");
    return logits;
}

Tensor Model::backward(const Tensor& glogits) {
    const int B = feat_.dim(0), C = feat_.dim(1), T = feat_.dim(2), V = feat_.dim(3);
    const double inv = 1.0 / static_cast<double>(T * V);
    Tensor gfeat(feat_.shape);
    for (int b = 0; b < B; ++b) {
        std::vector<double> pooled(static_cast<std::size_t>(C), 0.0);
        for (int c = 0; c < C; ++c) {
            const double* row = feat_.ptr() + (static_cast<std::size_t>(b) * C + c) *
                                                  static_cast<std::size_t>(T) * V;
            double acc = 0.0;
            for (int s = 0; s < T * V; ++s) acc += row[s];
            pooled[static_cast<std::size_t>(c)] = acc * inv;
        }
        for (int c = 0; c < C; ++c) {
            double gp = 0.0;
            for (int k = 0; k < cfg_.num_classes; ++k) {
                const double gl = glogits.at2(b, k);
                head_w_->grad.at2(c, k) += pooled[static_cast<std::size_t>(c)] * gl;
                gp += gl * head_w_->value.at2(c, k);
            }
            double* row = gfeat.ptr() + (static_cast<std::size_t>(b) * C + c) *
                                            static_cast<std::size_t>(T) * V;
            const double spread = gp * inv;
            for (int s = 0; s < T * V; ++s) row[s] = spread;
        }
    }
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < cfg_.num_classes; ++k) head_b_->grad.data[k] += glogits.at2(b, k);
    Tensor g = gfeat;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
    Tensor gx(stem_in_.shape);
    ops::batch_norm_backward(g, stem_gamma_->value, stem_cache_, gx, stem_gamma_->grad,
                             stem_beta_->grad);
    return gx;
}

} // namespace dsthcn
