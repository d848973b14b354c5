#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>

#include "dsthcn/hypergraph.hpp"
#include "helpers.hpp"

#ifdef DSTHCN_HAVE_EIGEN
#include <Eigen/Dense>
#endif

using namespace dsthcn;

namespace {

// independent entrywise evaluation of Dv^{-1/2} H W De^{-1} Hᵀ Dv^{-1/2}
std::vector<double> brute_normalize(const IncidenceMatrix& inc) {
    const int n = inc.nodes, e = inc.edges;
    std::vector<double> dv(n, 0.0), de(e, 0.0);
    for (int v = 0; v < n; ++v)
        for (int j = 0; j < e; ++j) {
            dv[v] += inc.W[j] * std::abs(inc.at(v, j));
            de[j] += std::abs(inc.at(v, j));
        }
    for (double& d : dv) d = std::max(d, kDegreeFloor);
    for (double& d : de) d = std::max(d, kDegreeFloor);
    std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double acc = 0.0;
            for (int j = 0; j < e; ++j)
                acc += inc.at(i, j) * inc.W[j] / de[j] * inc.at(k, j);
            out[static_cast<std::size_t>(i) * n + k] = acc / std::sqrt(dv[i] * dv[k]);
        }
    return out;
}

IncidenceMatrix random_binary(std::mt19937_64& rng, int n, int e) {
    IncidenceMatrix inc(n, e);
    for (int v = 0; v < n; ++v)
        for (int j = 0; j < e; ++j) inc.at(v, j) = (rng() % 3 == 0) ? 1.0 : 0.0;
    for (int j = 0; j < e; ++j) inc.W[j] = uniform_draw(rng, 0.2, 2.0);
    return inc;
}

SkeletonDefinition chain4() {
    std::vector<std::array<double, 3>> pose = {
        {0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    return skeleton_from_bones(4, {{0, 1}, {1, 2}, {2, 3}}, 0, pose);
}

} // namespace

TEST_CASE("normalize matches the brute-force entrywise oracle") {
    std::mt19937_64 rng(41);
    for (int it = 0; it < 200; ++it) {
        const int n = 2 + static_cast<int>(rng() % 5);
        const int e = 1 + static_cast<int>(rng() % 5);
        auto inc = random_binary(rng, n, e);
        auto op = normalize(inc);
        auto want = brute_normalize(inc);
        for (std::size_t i = 0; i < want.size(); ++i)
            CHECK(std::abs(op.matrix[i] - want[i]) < 1e-12);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) CHECK(op.at(i, j) == doctest::Approx(op.at(j, i)));
    }
}

TEST_CASE("normalize handles signed incidence via absolute-value degrees") {
    std::mt19937_64 rng(43);
    IncidenceMatrix inc(4, 3);
    for (double& h : inc.H) h = uniform_draw(rng, -1.0, 1.0);
    auto op = normalize(inc);
    auto want = brute_normalize(inc);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(op.matrix[i] - want[i]) < 1e-12);
}

TEST_CASE("Dv^{1/2} 1 is a fixed point for binary hypergraphs without empty rows") {
    std::mt19937_64 rng(47);
    for (int it = 0; it < 20; ++it) {
        const int n = 3 + static_cast<int>(rng() % 4);
        const int e = 2 + static_cast<int>(rng() % 4);
        auto inc = random_binary(rng, n, e);
        // ensure no empty rows or columns so no degree is floored
        for (int v = 0; v < n; ++v) inc.at(v, v % e) = 1.0;
        std::vector<double> dv(n, 0.0);
        for (int v = 0; v < n; ++v)
            for (int j = 0; j < e; ++j) dv[v] += inc.W[j] * inc.at(v, j);
        auto op = normalize(inc);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += op.at(i, j) * std::sqrt(dv[j]);
            CHECK(acc == doctest::Approx(std::sqrt(dv[i])).epsilon(1e-9));
        }
    }
}

#ifdef DSTHCN_HAVE_EIGEN
TEST_CASE("normalized operator eigenvalues lie in [0,1] for binary hypergraphs") {
    std::mt19937_64 rng(53);
    for (int it = 0; it < 50; ++it) {
        const int n = 2 + static_cast<int>(rng() % 5);
        const int e = 1 + static_cast<int>(rng() % 5);
        auto inc = random_binary(rng, n, e);
        auto op = normalize(inc);
        Eigen::MatrixXd M(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) M(i, j) = op.at(i, j);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
        CHECK(es.eigenvalues().minCoeff() > -1e-8);
        CHECK(es.eigenvalues().maxCoeff() < 1.0 + 1e-8);
    }
}
#endif

TEST_CASE("normalize backward agrees with finite differences") {
    std::mt19937_64 rng(59);
    for (int it = 0; it < 10; ++it) {
        const int n = 2 + static_cast<int>(rng() % 4);
        const int e = 1 + static_cast<int>(rng() % 4);
        IncidenceMatrix inc(n, e);
        // dense signed entries keep |H| differentiable at the sample point
        for (double& h : inc.H) h = uniform_draw(rng, 0.1, 1.0) * (rng() % 2 ? 1.0 : -1.0);
        for (double& w : inc.W) w = uniform_draw(rng, 0.3, 1.5);
        std::vector<double> lw(static_cast<std::size_t>(n) * n);
        for (double& w : lw) w = uniform_draw(rng, -1.0, 1.0);
        auto loss = [&] {
            auto op = normalize(inc);
            double l = 0.0;
            for (std::size_t i = 0; i < lw.size(); ++i) l += lw[i] * op.matrix[i];
            return l;
        };
        auto cache = normalize_with_cache(inc);
        auto gh = normalize_backward(cache, lw);
        CHECK(th::check_grad(loss, inc.H, gh) < 1e-6);
    }
}

TEST_CASE("normalize commutes with node permutation") {
    std::mt19937_64 rng(61);
    auto inc = random_binary(rng, 5, 4);
    std::vector<int> perm = {3, 0, 4, 1, 2};
    IncidenceMatrix pinc(5, 4);
    pinc.W = inc.W;
    for (int v = 0; v < 5; ++v)
        for (int j = 0; j < 4; ++j) pinc.at(perm[v], j) = inc.at(v, j);
    auto op = normalize(inc), pop = normalize(pinc);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(pop.at(perm[i], perm[j]) == doctest::Approx(op.at(i, j)).epsilon(1e-12));
}

TEST_CASE("knn limits: k=1 is the identity, k=n the complete hyperedge") {
    std::vector<std::vector<double>> pts = {{0.0}, {1.0}, {2.5}, {7.0}};
    auto id = knn_incidence(pts, 1);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(id.at(i, j) == (i == j ? 1.0 : 0.0));
    auto full = knn_incidence(pts, 4);
    for (double h : full.H) CHECK(h == 1.0);
    CHECK_THROWS_AS(knn_incidence(pts, 5), input_error);
}

TEST_CASE("knn picks nearest neighbours with ties to the smaller index") {
    std::vector<std::vector<double>> pts = {{0.0}, {1.0}, {-1.0}, {10.0}};
    auto inc = knn_incidence(pts, 2);
    // edge 0: node 0 plus its nearest; 1 and 2 are tied at distance 1 -> node 1
    CHECK(inc.at(1, 0) == 1.0);
    CHECK(inc.at(2, 0) == 0.0);
    // edge 3: node 3's nearest is node 1
    CHECK(inc.at(1, 3) == 1.0);
}

TEST_CASE("tph_knn equals knn over reduced flattened frames") {
    std::mt19937_64 rng(67);
    Tensor x({4, 6, 3}), reducer({4, 2});
    th::fill_uniform(x, rng);
    th::fill_uniform(reducer, rng);
    auto inc = tph_knn(x, 3, reducer);
    std::vector<std::vector<double>> frames(6, std::vector<double>(2 * 3, 0.0));
    for (int t = 0; t < 6; ++t)
        for (int cr = 0; cr < 2; ++cr)
            for (int v = 0; v < 3; ++v)
                for (int c = 0; c < 4; ++c)
                    frames[t][cr * 3 + v] += reducer.at2(c, cr) * x.at3(c, t, v);
    auto want = knn_incidence(frames, 3);
    CHECK(inc.H == want.H);
    CHECK(tph_reduced_channels(3) == 2);
    CHECK(tph_reduced_channels(16) == 4);
}

TEST_CASE("spatial_knn uses hop distance on the bone tree") {
    auto sk = chain4();
    auto inc = spatial_knn(sk, 2);
    // each joint keeps itself plus its hop-nearest; ties to the smaller index
    CHECK(inc.at(0, 0) == 1.0);
    CHECK(inc.at(1, 0) == 1.0); // joint 0's nearest is 1
    CHECK(inc.at(0, 1) == 1.0); // joint 1: joints 0 and 2 tie at hop 1 -> 0
    CHECK(inc.at(2, 1) == 0.0);
    auto id = spatial_knn(sk, 1);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(id.at(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("spatial_kmeans with clusters == V is the identity") {
    auto inc = spatial_kmeans(ntu25(), 25, 5);
    REQUIRE(inc.edges == 25);
    for (int i = 0; i < 25; ++i)
        for (int j = 0; j < 25; ++j) CHECK(inc.at(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("spatial_kmeans recovers well-separated groups") {
    std::vector<std::array<double, 3>> pose = {{0, 0, 0},   {0.1, 0, 0}, {10, 0, 0},
                                               {10.1, 0, 0}, {20, 0, 0},  {20.1, 0, 0}};
    auto sk = skeleton_from_bones(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}}, 0, pose);
    auto inc = spatial_kmeans(sk, 3, 99);
    // columns are sorted by smallest member, so the grouping is fixed
    for (int j = 0; j < 3; ++j)
        for (int v = 0; v < 6; ++v) CHECK(inc.at(v, j) == (v / 2 == j ? 1.0 : 0.0));
}

TEST_CASE("spatial_parts produces the petal edges of a chain") {
    auto inc = spatial_parts(chain4());
    REQUIRE(inc.nodes == 4);
    REQUIRE(inc.edges == 5);
    const std::vector<std::vector<double>> want = {
        {1, 0, 0, 0}, {1, 1, 0, 0}, {0, 1, 1, 0}, {0, 0, 1, 1}, {0, 0, 0, 1}};
    for (int j = 0; j < 5; ++j)
        for (int v = 0; v < 4; ++v) CHECK(inc.at(v, j) == want[j][v]);
}

TEST_CASE("cross hypergraphs apply tanh to projected differences") {
    std::mt19937_64 rng(71);
    const int V = 3, T = 4;
    auto h_n = spatial_knn(chain4(), 2);
    // restrict to a 3-joint chain for compactness
    std::vector<std::array<double, 3>> pose = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    h_n = spatial_knn(skeleton_from_bones(3, {{0, 1}, {1, 2}}, 0, pose), 2);
    IncidenceMatrix h_t(T, T);
    for (int i = 0; i < T; ++i) h_t.at(i, i) = 1.0;
    CrossProjections p;
    p.mu_st = Tensor({h_n.edges, T});
    p.phi_st = Tensor({V, T});
    p.mu_ts = Tensor({T, V});
    p.phi_ts_l = Tensor({T, V});
    p.phi_ts_r = Tensor({h_n.edges, V});
    for (Tensor* t : {&p.mu_st, &p.phi_st, &p.mu_ts, &p.phi_ts_l, &p.phi_ts_r})
        th::fill_uniform(*t, rng);
    auto r = cross_hypergraphs(h_n, h_t, p);
    for (double h : r.h_st.H) CHECK(std::abs(h) < 1.0);
    for (double h : r.h_ts.H) CHECK(std::abs(h) < 1.0);
    // H_T = I makes the entries easy to verify directly
    for (int v = 0; v < V; ++v)
        for (int t = 0; t < T; ++t) {
            double a = 0.0;
            for (int e = 0; e < h_n.edges; ++e) a += h_n.at(v, e) * p.mu_st.at2(e, t);
            CHECK(r.h_st.at(v, t) ==
                  doctest::Approx(std::tanh(a - p.phi_st.at2(v, t))).epsilon(1e-12));
        }
}

TEST_CASE("graph partitions are row-stochastic with identity self part") {
    auto parts = graph_partitions(chain4());
    REQUIRE(parts.size() == 3);
    for (int v = 0; v < 4; ++v)
        for (int u = 0; u < 4; ++u) CHECK(parts[0][v * 4 + u] == (v == u ? 1.0 : 0.0));
    for (const auto& p : parts)
        for (int v = 0; v < 4; ++v) {
            double row = 0.0;
            for (int u = 0; u < 4; ++u) row += p[v * 4 + u];
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
    // centripetal points toward the center, centrifugal away
    CHECK(parts[1][1 * 4 + 0] > 0.0);
    CHECK(parts[1][0 * 4 + 1] == 0.0);
    CHECK(parts[2][0 * 4 + 1] > 0.0);
    CHECK(parts[2][1 * 4 + 0] == 0.0);
}

TEST_CASE("normalize rejects empty incidences and floors isolated nodes") {
    CHECK_THROWS_AS(normalize(IncidenceMatrix()), input_error);
    IncidenceMatrix inc(3, 2);
    inc.at(0, 0) = 1.0;
    inc.at(1, 0) = 1.0; // node 2 isolated, edge 1 empty
    auto op = normalize(inc);
    for (double v : op.matrix) CHECK(std::isfinite(v));
    CHECK(op.at(2, 2) == 0.0);
}
