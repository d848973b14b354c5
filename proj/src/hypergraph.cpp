#include "dsthcn/hypergraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dsthcn/ops.hpp"

namespace dsthcn {

namespace {

double floor_degree(double d, bool* floored) {
    if (d < kDegreeFloor) {
        if (floored) *floored = true;
        return kDegreeFloor;
    }
    if (floored) *floored = false;
    return d;
}

double next_unit(std::mt19937_64& rng) {
    // 53-bit mantissa draw; avoids distribution objects so runs are
    // reproducible independent of the standard library implementation
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

} // namespace

NormalizeCache normalize_with_cache(const IncidenceMatrix& inc) {
    if (inc.nodes < 1 || inc.edges < 1) throw input_error("normalize: empty incidence");
    const int n = inc.nodes, e = inc.edges;
    NormalizeCache c;
    c.n = n;
    c.e = e;
    c.H = inc.H;
    c.W = inc.W;
    c.dv.assign(static_cast<std::size_t>(n), 0.0);
    c.de.assign(static_cast<std::size_t>(e), 0.0);
    c.dv_floored.assign(static_cast<std::size_t>(n), 0);
    c.de_floored.assign(static_cast<std::size_t>(e), 0);
    for (int v = 0; v < n; ++v)
        for (int j = 0; j < e; ++j) {
            const double a = std::abs(inc.at(v, j));
            c.dv[static_cast<std::size_t>(v)] += inc.W[static_cast<std::size_t>(j)] * a;
            c.de[static_cast<std::size_t>(j)] += a;
        }
    c.s.assign(static_cast<std::size_t>(n), 0.0);
    c.r.assign(static_cast<std::size_t>(e), 0.0);
    for (int v = 0; v < n; ++v) {
        bool fl = false;
        c.dv[static_cast<std::size_t>(v)] = floor_degree(c.dv[static_cast<std::size_t>(v)], &fl);
        c.dv_floored[static_cast<std::size_t>(v)] = fl ? 1 : 0;
        c.s[static_cast<std::size_t>(v)] = 1.0 / std::sqrt(c.dv[static_cast<std::size_t>(v)]);
    }
    for (int j = 0; j < e; ++j) {
        bool fl = false;
        c.de[static_cast<std::size_t>(j)] = floor_degree(c.de[static_cast<std::size_t>(j)], &fl);
        c.de_floored[static_cast<std::size_t>(j)] = fl ? 1 : 0;
        c.r[static_cast<std::size_t>(j)] = 1.0 / c.de[static_cast<std::size_t>(j)];
    }
    // A = H diag(W*r) Hᵀ
    c.A.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int j = 0; j < e; ++j) {
        const double m = inc.W[static_cast<std::size_t>(j)] * c.r[static_cast<std::size_t>(j)];
        for (int i = 0; i < n; ++i) {
            const double hi = inc.at(i, j);
            if (hi == 0.0) continue;
            const double him = hi * m;
            for (int v = 0; v < n; ++v)
                c.A[static_cast<std::size_t>(i) * n + v] += him * inc.at(v, j);
        }
    }
    c.op.n = n;
    c.op.matrix.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            c.op.matrix[static_cast<std::size_t>(i) * n + j] =
                c.s[static_cast<std::size_t>(i)] * c.A[static_cast<std::size_t>(i) * n + j] *
                c.s[static_cast<std::size_t>(j)];
    return c;
}

NormalizedOperator normalize(const IncidenceMatrix& inc) {
    return normalize_with_cache(inc).op;
}

std::vector<double> normalize_backward(const NormalizeCache& c, const std::vector<double>& G) {
    const int n = c.n, e = c.e;
    // G_A[i,j] = s_i s_j G[i,j]
    std::vector<double> GA(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            GA[static_cast<std::size_t>(i) * n + j] = c.s[static_cast<std::size_t>(i)] *
                                                      c.s[static_cast<std::size_t>(j)] *
                                                      G[static_cast<std::size_t>(i) * n + j];
    std::vector<double> dH(static_cast<std::size_t>(n) * e, 0.0);
    // direct term: (GA + GAᵀ) H diag(W*r)
    std::vector<double> GAs(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            GAs[static_cast<std::size_t>(i) * n + j] =
                GA[static_cast<std::size_t>(i) * n + j] + GA[static_cast<std::size_t>(j) * n + i];
    ops::mm_nn(GAs.data(), c.H.data(), dH.data(), n, n, e, false);
    std::vector<double> dde(static_cast<std::size_t>(e), 0.0);
    for (int j = 0; j < e; ++j) {
        const double m = c.W[static_cast<std::size_t>(j)] * c.r[static_cast<std::size_t>(j)];
        for (int v = 0; v < n; ++v) dH[static_cast<std::size_t>(v) * e + j] *= m;
        // dL/dr_e = W_e * (Hᵀ GA H)[e,e]
        if (!c.de_floored[static_cast<std::size_t>(j)]) {
            double q = 0.0;
            for (int i = 0; i < n; ++i) {
                const double hi = c.H[static_cast<std::size_t>(i) * e + j];
                if (hi == 0.0) continue;
                for (int v = 0; v < n; ++v)
                    q += hi * GA[static_cast<std::size_t>(i) * n + v] *
                         c.H[static_cast<std::size_t>(v) * e + j];
            }
            const double dLdr = c.W[static_cast<std::size_t>(j)] * q;
            dde[static_cast<std::size_t>(j)] = -c.r[static_cast<std::size_t>(j)] *
                                               c.r[static_cast<std::size_t>(j)] * dLdr;
        }
    }
    // through s_v: dL/ds_v = sum_j G[v,j](A s)[v,j] + sum_i G[i,v](s A)[i,v]
    std::vector<double> ddv(static_cast<std::size_t>(n), 0.0);
    for (int v = 0; v < n; ++v) {
        if (c.dv_floored[static_cast<std::size_t>(v)]) continue;
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
            acc += G[static_cast<std::size_t>(v) * n + j] *
                   c.A[static_cast<std::size_t>(v) * n + j] * c.s[static_cast<std::size_t>(j)];
        for (int i = 0; i < n; ++i)
            acc += G[static_cast<std::size_t>(i) * n + v] * c.s[static_cast<std::size_t>(i)] *
                   c.A[static_cast<std::size_t>(i) * n + v];
        const double dLds = acc;
        ddv[static_cast<std::size_t>(v)] =
            -0.5 * std::pow(c.dv[static_cast<std::size_t>(v)], -1.5) * dLds;
    }
    for (int v = 0; v < n; ++v)
        for (int j = 0; j < e; ++j) {
            const double h = c.H[static_cast<std::size_t>(v) * e + j];
            if (h == 0.0) continue;
            const double sg = h > 0.0 ? 1.0 : -1.0;
            dH[static_cast<std::size_t>(v) * e + j] +=
                sg * (c.W[static_cast<std::size_t>(j)] * ddv[static_cast<std::size_t>(v)] +
                      dde[static_cast<std::size_t>(j)]);
        }
    return dH;
}

std::vector<double> symmetrized(const NormalizedOperator& op) {
    const int n = op.n;
    std::vector<double> s(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            s[static_cast<std::size_t>(i) * n + j] =
                op.matrix[static_cast<std::size_t>(i) * n + j] +
                op.matrix[static_cast<std::size_t>(j) * n + i];
    return s;
}

IncidenceMatrix knn_incidence(const std::vector<std::vector<double>>& points, int k) {
    const int n = static_cast<int>(points.size());
    if (k < 1 || k > n) throw input_error("knn: k out of range [1," + std::to_string(n) + "]");
    IncidenceMatrix inc(n, n);
    std::vector<std::pair<double, int>> order;
    order.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        order.clear();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            const auto& a = points[static_cast<std::size_t>(i)];
            const auto& b = points[static_cast<std::size_t>(j)];
            for (std::size_t p = 0; p < a.size(); ++p) {
                const double d = a[p] - b[p];
                d2 += d * d;
            }
            order.emplace_back(d2, j);
        }
        std::sort(order.begin(), order.end()); // ties resolve to smaller index
        inc.at(i, i) = 1.0;                    // self always included
        for (int j = 0; j < k - 1; ++j) inc.at(order[static_cast<std::size_t>(j)].second, i) = 1.0;
    }
    return inc;
}

int tph_reduced_channels(int c_in) { return std::max(2, c_in / 4); }

IncidenceMatrix tph_knn(const Tensor& x, int k, const Tensor& reducer) {
    if (x.rank() != 3) throw dim_error("tph_knn: expected C×T×V input");
    const int C = x.dim(0), T = x.dim(1), V = x.dim(2);
    if (k < 1 || k > T) throw input_error("tph_knn: k out of range");
    const int Cr = reducer.dim(1);
    if (reducer.dim(0) != C) throw dim_error("tph_knn: reducer row count must equal C");
    std::vector<std::vector<double>> frames(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        auto& f = frames[static_cast<std::size_t>(t)];
        f.assign(static_cast<std::size_t>(Cr) * V, 0.0);
        for (int c = 0; c < C; ++c)
            for (int cr = 0; cr < Cr; ++cr) {
                const double w = reducer.at2(c, cr);
                if (w == 0.0) continue;
                for (int v = 0; v < V; ++v)
                    f[static_cast<std::size_t>(cr) * V + v] += w * x.at3(c, t, v);
            }
    }
    return knn_incidence(frames, k);
}

IncidenceMatrix spatial_knn(const SkeletonDefinition& sk, int k) {
    const int V = sk.joint_count;
    if (k < 1 || k > V) throw input_error("spatial_knn: k out of range");
    IncidenceMatrix inc(V, V);
    for (int v = 0; v < V; ++v) {
        auto dist = sk.hop_distances(v);
        std::vector<std::pair<int, int>> order;
        for (int u = 0; u < V; ++u)
            if (u != v) order.emplace_back(dist[static_cast<std::size_t>(u)], u);
        std::sort(order.begin(), order.end());
        inc.at(v, v) = 1.0;
        for (int j = 0; j < k - 1; ++j) inc.at(order[static_cast<std::size_t>(j)].second, v) = 1.0;
    }
    return inc;
}

namespace {

// sort columns of a binary incidence by (smallest member, bit pattern)
IncidenceMatrix normalize_columns(const IncidenceMatrix& in) {
    const int n = in.nodes, e = in.edges;
    std::vector<std::vector<double>> cols(static_cast<std::size_t>(e),
                                          std::vector<double>(static_cast<std::size_t>(n)));
    for (int j = 0; j < e; ++j)
        for (int v = 0; v < n; ++v) cols[static_cast<std::size_t>(j)][static_cast<std::size_t>(v)] = in.at(v, j);
    std::vector<int> idx(static_cast<std::size_t>(e));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return cols[static_cast<std::size_t>(a)] > cols[static_cast<std::size_t>(b)];
    }); // descending lexicographic = ascending smallest-member order
    IncidenceMatrix out(n, e);
    for (int j = 0; j < e; ++j) {
        out.W[static_cast<std::size_t>(j)] = in.W[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
        for (int v = 0; v < n; ++v)
            out.at(v, j) = cols[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])][static_cast<std::size_t>(v)];
    }
    return out;
}

} // namespace

namespace {

// one seeded kmeans++ / Lloyd run; returns the assignment and its cost
std::pair<std::vector<int>, double> kmeans_run(const std::vector<std::array<double, 3>>& pts,
                                               int clusters, uint64_t seed) {
    const int V = static_cast<int>(pts.size());
    std::mt19937_64 rng(seed);
    // k-means++ seeding
    std::vector<std::array<double, 3>> centers;
    centers.reserve(static_cast<std::size_t>(clusters));
    centers.push_back(pts[static_cast<std::size_t>(rng() % static_cast<uint64_t>(V))]);
    auto dist2 = [](const std::array<double, 3>& a, const std::array<double, 3>& b) {
        double d = 0.0;
        for (int p = 0; p < 3; ++p) d += (a[p] - b[p]) * (a[p] - b[p]);
        return d;
    };
    std::vector<double> mind(static_cast<std::size_t>(V));
    while (static_cast<int>(centers.size()) < clusters) {
        double total = 0.0;
        for (int v = 0; v < V; ++v) {
            double best = dist2(pts[static_cast<std::size_t>(v)], centers[0]);
            for (std::size_t c = 1; c < centers.size(); ++c)
                best = std::min(best, dist2(pts[static_cast<std::size_t>(v)], centers[c]));
            mind[static_cast<std::size_t>(v)] = best;
            total += best;
        }
        int pick = 0;
        if (total > 0.0) {
            const double u = next_unit(rng) * total;
            double acc = 0.0;
            for (int v = 0; v < V; ++v) {
                acc += mind[static_cast<std::size_t>(v)];
                if (u < acc) {
                    pick = v;
                    break;
                }
                pick = v;
            }
        } else {
            pick = static_cast<int>(rng() % static_cast<uint64_t>(V));
        }
        centers.push_back(pts[static_cast<std::size_t>(pick)]);
    }
    // Lloyd iterations
    std::vector<int> assign(static_cast<std::size_t>(V), 0);
    for (int iter = 0; iter < 100; ++iter) {
        for (int v = 0; v < V; ++v) {
            int best = 0;
            double bd = dist2(pts[static_cast<std::size_t>(v)], centers[0]);
            for (int c = 1; c < clusters; ++c) {
                const double d = dist2(pts[static_cast<std::size_t>(v)], centers[static_cast<std::size_t>(c)]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            assign[static_cast<std::size_t>(v)] = best;
        }
        // empty clusters grab the point farthest from its centroid
        std::vector<int> count(static_cast<std::size_t>(clusters), 0);
        for (int v = 0; v < V; ++v) ++count[static_cast<std::size_t>(assign[static_cast<std::size_t>(v)])];
        for (int c = 0; c < clusters; ++c) {
            if (count[static_cast<std::size_t>(c)] > 0) continue;
            int far = -1;
            double fd = -1.0;
            for (int v = 0; v < V; ++v) {
                if (count[static_cast<std::size_t>(assign[static_cast<std::size_t>(v)])] <= 1) continue;
                const double d = dist2(pts[static_cast<std::size_t>(v)],
                                       centers[static_cast<std::size_t>(assign[static_cast<std::size_t>(v)])]);
                if (d > fd) {
                    fd = d;
                    far = v;
                }
            }
            if (far >= 0) {
                --count[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
                assign[static_cast<std::size_t>(far)] = c;
                count[static_cast<std::size_t>(c)] = 1;
                centers[static_cast<std::size_t>(c)] = pts[static_cast<std::size_t>(far)];
            }
        }
        // recompute centroids
        double shift = 0.0;
        for (int c = 0; c < clusters; ++c) {
            std::array<double, 3> m = {0.0, 0.0, 0.0};
            int cnt = 0;
            for (int v = 0; v < V; ++v)
                if (assign[static_cast<std::size_t>(v)] == c) {
                    for (int p = 0; p < 3; ++p) m[static_cast<std::size_t>(p)] += pts[static_cast<std::size_t>(v)][static_cast<std::size_t>(p)];
                    ++cnt;
                }
            if (cnt > 0)
                for (int p = 0; p < 3; ++p) m[static_cast<std::size_t>(p)] /= cnt;
            shift = std::max(shift, std::sqrt(dist2(m, centers[static_cast<std::size_t>(c)])));
            centers[static_cast<std::size_t>(c)] = m;
        }
        if (shift < 1e-9) break;
    }
    double cost = 0.0;
    for (int v = 0; v < V; ++v)
        cost += dist2(pts[static_cast<std::size_t>(v)],
                      centers[static_cast<std::size_t>(assign[static_cast<std::size_t>(v)])]);
    return {assign, cost};
}

} // namespace

IncidenceMatrix spatial_kmeans(const SkeletonDefinition& sk, int clusters, uint64_t seed) {
    const int V = sk.joint_count;
    if (clusters < 1 || clusters > V) throw input_error("spatial_kmeans: clusters out of range");
    // several seeded restarts; Lloyd alone gets stuck in local optima on
    // small inputs. Ties keep the earliest restart.
    constexpr int kRestarts = 64;
    std::vector<int> best;
    double best_cost = 0.0;
    for (int r = 0; r < kRestarts; ++r) {
        auto [assign, cost] = kmeans_run(sk.rest_pose, clusters,
                                         seed * 6364136223846793005ULL + static_cast<uint64_t>(r));
        if (r == 0 || cost < best_cost) {
            best = std::move(assign);
            best_cost = cost;
        }
    }
    IncidenceMatrix inc(V, clusters);
    for (int v = 0; v < V; ++v) inc.at(v, best[static_cast<std::size_t>(v)]) = 1.0;
    return normalize_columns(inc);
}

IncidenceMatrix spatial_parts(const SkeletonDefinition& sk) {
    const int V = sk.joint_count;
    const auto nb = sk.neighbors();
    const auto dist = sk.hop_distances(sk.center_joint);
    std::vector<std::vector<double>> cols;
    for (int v = 0; v < V; ++v) {
        std::vector<double> petal(static_cast<std::size_t>(V), 0.0);
        std::vector<double> fugal(static_cast<std::size_t>(V), 0.0);
        petal[static_cast<std::size_t>(v)] = 1.0;
        fugal[static_cast<std::size_t>(v)] = 1.0;
        for (int u : nb[static_cast<std::size_t>(v)]) {
            if (dist[static_cast<std::size_t>(u)] < dist[static_cast<std::size_t>(v)])
                petal[static_cast<std::size_t>(u)] = 1.0;
            else if (dist[static_cast<std::size_t>(u)] > dist[static_cast<std::size_t>(v)])
                fugal[static_cast<std::size_t>(u)] = 1.0;
        }
        for (auto* col : {&petal, &fugal}) {
            bool dup = false;
            for (const auto& c : cols)
                if (c == *col) {
                    dup = true;
                    break;
                }
            if (!dup) cols.push_back(*col);
        }
    }
    IncidenceMatrix inc(V, static_cast<int>(cols.size()));
    for (int j = 0; j < inc.edges; ++j)
        for (int v = 0; v < V; ++v) inc.at(v, j) = cols[static_cast<std::size_t>(j)][static_cast<std::size_t>(v)];
    return inc;
}

CrossResult cross_hypergraphs(const IncidenceMatrix& h_n, const IncidenceMatrix& h_t,
                              const CrossProjections& proj) {
    const int V = h_n.nodes, En = h_n.edges, T = h_t.nodes;
    if (h_t.edges != T) throw dim_error("cross_hypergraphs: H_T must be T×T");
    if (proj.mu_st.dim(0) != En || proj.mu_st.dim(1) != T || proj.phi_st.dim(0) != V ||
        proj.phi_st.dim(1) != T || proj.mu_ts.dim(0) != T || proj.mu_ts.dim(1) != V ||
        proj.phi_ts_l.dim(0) != T || proj.phi_ts_l.dim(1) != V || proj.phi_ts_r.dim(0) != En ||
        proj.phi_ts_r.dim(1) != V)
        throw dim_error("cross_hypergraphs: projection shape mismatch");
    CrossResult r;
    r.h_st = IncidenceMatrix(V, T);
    r.h_ts = IncidenceMatrix(T, V);
    std::vector<double> a(static_cast<std::size_t>(V) * T), b(static_cast<std::size_t>(V) * T);
    ops::mm_nn(h_n.H.data(), proj.mu_st.ptr(), a.data(), V, En, T, false);
    ops::mm_nn(proj.phi_st.ptr(), h_t.H.data(), b.data(), V, T, T, false);
    for (std::size_t i = 0; i < a.size(); ++i) r.h_st.H[i] = std::tanh(a[i] - b[i]);
    std::vector<double> c(static_cast<std::size_t>(T) * V), hp(static_cast<std::size_t>(T) * En),
        d(static_cast<std::size_t>(T) * V);
    ops::mm_nn(h_t.H.data(), proj.mu_ts.ptr(), c.data(), T, T, V, false);
    ops::mm_nn(proj.phi_ts_l.ptr(), h_n.H.data(), hp.data(), T, V, En, false);
    ops::mm_nn(hp.data(), proj.phi_ts_r.ptr(), d.data(), T, En, V, false);
    for (std::size_t i = 0; i < c.size(); ++i) r.h_ts.H[i] = std::tanh(c[i] - d[i]);
    return r;
}

std::vector<std::vector<double>> graph_partitions(const SkeletonDefinition& sk) {
    const int V = sk.joint_count;
    const auto nb = sk.neighbors();
    const auto dist = sk.hop_distances(sk.center_joint);
    std::vector<std::vector<double>> parts(3, std::vector<double>(static_cast<std::size_t>(V) * V, 0.0));
    // partition adjacencies: self (empty), centripetal, centrifugal
    for (int v = 0; v < V; ++v)
        for (int u : nb[static_cast<std::size_t>(v)]) {
            if (dist[static_cast<std::size_t>(u)] < dist[static_cast<std::size_t>(v)])
                parts[1][static_cast<std::size_t>(v) * V + u] = 1.0;
            else if (dist[static_cast<std::size_t>(u)] > dist[static_cast<std::size_t>(v)])
                parts[2][static_cast<std::size_t>(v) * V + u] = 1.0;
        }
    // row-normalize D^{-1}(A_i + I)
    for (auto& p : parts) {
        for (int v = 0; v < V; ++v) {
            p[static_cast<std::size_t>(v) * V + v] += 1.0;
            double row = 0.0;
            for (int u = 0; u < V; ++u) row += p[static_cast<std::size_t>(v) * V + u];
            for (int u = 0; u < V; ++u) p[static_cast<std::size_t>(v) * V + u] /= row;
        }
    }
    return parts;
}

} // namespace dsthcn
