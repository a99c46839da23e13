#include "dula/kernels.hpp"
#include "dula/surrogate.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace dula;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                               double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    }
    return worst;
}

void naive_gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                double* c, bool acc) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            long double s = acc ? c[i * n + j] : 0.0L;
            for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a[i * k + p]) * b[p * n + j];
            c[i * n + j] = static_cast<double>(s);
        }
}

struct KernelGuard {
    std::string_view saved = kernels::active().name;
    ~KernelGuard() { kernels::select(saved); }
};

}  // namespace

TEST_CASE("scalar gemm matches a naive product") {
    std::mt19937_64 rng(1);
    for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 7}, {17, 124, 19},
                           {64, 7, 124}, {33, 1, 7}}) {
        for (bool acc : {false, true}) {
            const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
            auto c = random_vec(m * n, rng), ref = c;
            kernels::scalar().gemm(m, n, k, a.data(), b.data(), c.data(), acc);
            naive_gemm(m, n, k, a.data(), b.data(), ref.data(), acc);
            CHECK(max_rel(c, ref) < 1e-13);
        }
    }
}

TEST_CASE("avx2 kernels agree with scalar reference") {
    const kernels::KernelTable* v = kernels::avx2();
    if (v == nullptr) {
        MESSAGE("AVX2/FMA unavailable on this CPU; equivalence not exercised");
        return;
    }
    const auto& s = kernels::scalar();
    std::mt19937_64 rng(2);
    for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {5, 3, 2}, {9, 13, 11},
                           {256, 124, 124}, {100, 7, 124}, {31, 1, 7}, {8, 124, 19}}) {
        for (bool acc : {false, true}) {
            const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
            auto c1 = random_vec(m * n, rng), c2 = c1;
            s.gemm(m, n, k, a.data(), b.data(), c1.data(), acc);
            v->gemm(m, n, k, a.data(), b.data(), c2.data(), acc);
            CHECK(max_rel(c2, c1) < 1e-12);
        }
    }
    for (std::size_t cols : {1u, 3u, 4u, 7u, 124u}) {
        for (bool relu : {false, true}) {
            const auto bias = random_vec(cols, rng);
            auto x1 = random_vec(37 * cols, rng), x2 = x1;
            s.bias_act(37, cols, bias.data(), x1.data(), relu);
            v->bias_act(37, cols, bias.data(), x2.data(), relu);
            CHECK(x1 == x2);
        }
        auto act = random_vec(37 * cols, rng);
        act[0] = 0.0;
        auto g1 = random_vec(37 * cols, rng), g2 = g1;
        s.relu_mask(act.size(), act.data(), g1.data());
        v->relu_mask(act.size(), act.data(), g2.data());
        CHECK(g1 == g2);
        CHECK(g1[0] == 0.0);
    }
    for (std::size_t n : {1u, 5u, 8u, 1003u}) {
        auto p1 = random_vec(n, rng), m1 = random_vec(n, rng), v1 = random_vec(n, rng, 0.0, 1.0);
        auto p2 = p1, m2 = m1, v2 = v1;
        const auto g = random_vec(n, rng);
        for (int t = 1; t <= 5; ++t) {
            const double b1 = 1 - std::pow(0.9, t), b2 = 1 - std::pow(0.999, t);
            s.adam(n, p1.data(), g.data(), m1.data(), v1.data(), 1e-3, 0.9, 0.999, 1e-8, b1, b2);
            v->adam(n, p2.data(), g.data(), m2.data(), v2.data(), 1e-3, 0.9, 0.999, 1e-8, b1, b2);
        }
        CHECK(max_rel(p2, p1) < 1e-12);
        CHECK(max_rel(m2, m1) < 1e-12);
        CHECK(max_rel(v2, v1) < 1e-12);
    }
}

TEST_CASE("network outputs agree across kernel tables") {
    if (kernels::avx2() == nullptr) return;
    KernelGuard guard;
    Rng rng(3);
    const SurrogateModel m = SurrogateModel::initialize(SurrogateModel::kDefaultWidths, rng);
    DatasetSpec spec;
    spec.total_count = 700;
    const Dataset d = generate_balanced(spec);
    std::vector<double> feats;
    for (const auto& s : d) {
        const auto f = featurize(s.posture, s.context);
        feats.insert(feats.end(), f.begin(), f.end());
    }
    std::vector<double> a(d.size()), b(d.size());
    REQUIRE(kernels::select("scalar"));
    m.predict_batch(feats, a);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 64;
    const TrainResult ts = train(d, cfg);
    REQUIRE(kernels::select("avx2"));
    m.predict_batch(feats, b);
    const TrainResult tv = train(d, cfg);
    CHECK(max_rel(a, b) < 1e-12);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        CHECK(tv.metrics.epoch_loss[e] == doctest::Approx(ts.metrics.epoch_loss[e]).epsilon(1e-9));
    }
}

TEST_CASE("select rejects unknown tables") {
    KernelGuard guard;
    CHECK_FALSE(kernels::select("neon"));
    CHECK(kernels::select("scalar"));
    CHECK(kernels::active().name == "scalar");
}
