#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "core/rng.h"
#include "kernels/kernels.h"

using namespace ms;
using kern::Ops;

static std::vector<float> randn(Rng& r, int64_t n) {
    std::vector<float> v(n);
    r.fill_normal(v.data(), n);
    return v;
}

static double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); i++) m = std::max(m, std::abs((double)a[i] - b[i]));
    return m;
}

static const Ops& avx2() {
    const Ops* a = kern::avx2_ops_if_supported();
    REQUIRE(a != nullptr);  // target machines have avx2+fma; dispatch falls back at runtime elsewhere
    return *a;
}

TEST_CASE("dispatch: tables are wired") {
    CHECK(std::string(kern::scalar_ops().name) == "scalar");
    CHECK(std::string(avx2().name) == "avx2");
    std::string active = kern::active_kernels();
    CHECK((active == "scalar" || active == "avx2"));
}

TEST_CASE("sgemm: small known answer") {
    // A [2,3] * B [3,2]
    const float A[6] = {1, 2, 3, 4, 5, 6};
    const float B[6] = {7, 8, 9, 10, 11, 12};
    const float want[4] = {58, 64, 139, 154};
    for (const Ops* o : {&kern::scalar_ops(), &avx2()}) {
        float C[4] = {1, 1, 1, 1};
        o->sgemm(A, B, C, 2, 2, 3, false);
        for (int i = 0; i < 4; i++) CHECK(C[i] == doctest::Approx(want[i]).epsilon(1e-6));
        o->sgemm(A, B, C, 2, 2, 3, true);  // accumulate doubles it
        for (int i = 0; i < 4; i++) CHECK(C[i] == doctest::Approx(2 * want[i]).epsilon(1e-6));
    }
}

TEST_CASE("sgemm_nt: small known answer") {
    // A [3,4] * B[2,4]^T
    const float A[12] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    const float B[8] = {1, 0, -1, 2, 0.5f, 0.5f, 0.5f, 0.5f};
    // row i of C: dot(A_i, B_0), dot(A_i, B_1)
    const float want[6] = {1 - 3 + 8, (1 + 2 + 3 + 4) * 0.5f,
                           5 - 7 + 16, (5 + 6 + 7 + 8) * 0.5f,
                           9 - 11 + 24, (9 + 10 + 11 + 12) * 0.5f};
    for (const Ops* o : {&kern::scalar_ops(), &avx2()}) {
        float C[6];
        o->sgemm_nt(A, B, C, 3, 2, 4, false);
        for (int i = 0; i < 6; i++) CHECK(C[i] == doctest::Approx(want[i]).epsilon(1e-6));
        o->sgemm_nt(A, B, C, 3, 2, 4, true);
        for (int i = 0; i < 6; i++) CHECK(C[i] == doctest::Approx(2 * want[i]).epsilon(1e-6));
    }
}

TEST_CASE("sgemm: scalar and avx2 agree with the double reference") {
    Rng r(11);
    // shapes straddle the packed-path gate (K>=512 && N>=256 && M>=16) and hit ragged tails
    const int shapes[][3] = {
        {1, 1, 1}, {3, 5, 7}, {8, 64, 100}, {33, 31, 129},
        {16, 256, 512},   // packed path, exact multiples
        {17, 259, 513},   // packed path with tail rows/cols/k
        {15, 300, 600},   // M below gate: plain path with big K
    };
    for (auto& s : shapes) {
        int M = s[0], N = s[1], K = s[2];
        auto A = randn(r, (int64_t)M * K);
        auto B = randn(r, (int64_t)K * N);
        std::vector<double> Ad(A.begin(), A.end()), Bd(B.begin(), B.end());
        std::vector<double> Cd((int64_t)M * N);
        kern::gemm_ref(Ad.data(), Bd.data(), Cd.data(), M, N, K, false);

        double atol = 1e-4 * std::sqrt((double)K);
        for (const Ops* o : {&kern::scalar_ops(), &avx2()}) {
            std::vector<float> C((int64_t)M * N, 42.0f);
            o->sgemm(A.data(), B.data(), C.data(), M, N, K, false);
            double err = 0;
            for (int64_t i = 0; i < (int64_t)M * N; i++) err = std::max(err, std::abs(C[i] - Cd[i]));
            INFO("kernel ", o->name, " M=", M, " N=", N, " K=", K, " err=", err);
            CHECK(err < atol);

            // accumulate adds on top of what's there
            std::vector<float> C2((int64_t)M * N, 1.0f);
            o->sgemm(A.data(), B.data(), C2.data(), M, N, K, true);
            double err2 = 0;
            for (int64_t i = 0; i < (int64_t)M * N; i++) err2 = std::max(err2, std::abs(C2[i] - (Cd[i] + 1.0)));
            CHECK(err2 < atol);
        }
    }
}

TEST_CASE("sgemm_nt: scalar and avx2 agree with the double reference") {
    Rng r(12);
    const int shapes[][3] = {{1, 1, 1}, {3, 2, 4}, {7, 9, 33}, {16, 16, 64}, {21, 35, 130}, {64, 48, 512}};
    for (auto& s : shapes) {
        int M = s[0], N = s[1], K = s[2];
        auto A = randn(r, (int64_t)M * K);
        auto B = randn(r, (int64_t)N * K);
        std::vector<double> Ad(A.begin(), A.end()), Bd(B.begin(), B.end());
        std::vector<double> Cd((int64_t)M * N);
        kern::gemm_nt_ref(Ad.data(), Bd.data(), Cd.data(), M, N, K, false);

        double atol = 1e-4 * std::sqrt((double)K);
        for (const Ops* o : {&kern::scalar_ops(), &avx2()}) {
            std::vector<float> C((int64_t)M * N);
            o->sgemm_nt(A.data(), B.data(), C.data(), M, N, K, false);
            double err = 0;
            for (int64_t i = 0; i < (int64_t)M * N; i++) err = std::max(err, std::abs(C[i] - Cd[i]));
            INFO("kernel ", o->name, " M=", M, " N=", N, " K=", K, " err=", err);
            CHECK(err < atol);
        }
    }
}

TEST_CASE("elementwise ops: scalar vs avx2 across remainder lengths") {
    Rng r(13);
    for (int64_t n : {1, 7, 8, 9, 31, 32, 33, 1000, 1023}) {
        auto a = randn(r, n), b = randn(r, n);
        const Ops& s = kern::scalar_ops();
        const Ops& v = avx2();

        std::vector<float> y1(n), y2(n);
        s.vadd(a.data(), b.data(), y1.data(), n);
        v.vadd(a.data(), b.data(), y2.data(), n);
        CHECK(max_abs_diff(y1, y2) == 0.0);
        for (int64_t i = 0; i < n; i++) CHECK(y1[i] == a[i] + b[i]);

        s.vmul(a.data(), b.data(), y1.data(), n);
        v.vmul(a.data(), b.data(), y2.data(), n);
        CHECK(max_abs_diff(y1, y2) == 0.0);

        s.vscale(a.data(), -1.75f, y1.data(), n);
        v.vscale(a.data(), -1.75f, y2.data(), n);
        CHECK(max_abs_diff(y1, y2) == 0.0);

        // axpy accumulates into y
        y1 = b;
        y2 = b;
        s.axpy(0.5f, a.data(), y1.data(), n);
        v.axpy(0.5f, a.data(), y2.data(), n);
        CHECK(max_abs_diff(y1, y2) < 1e-6);
        for (int64_t i = 0; i < n; i++) CHECK(y1[i] == doctest::Approx(b[i] + 0.5f * a[i]).epsilon(1e-6));

        float d1 = s.dot(a.data(), b.data(), n);
        float d2 = v.dot(a.data(), b.data(), n);
        double dref = 0;
        for (int64_t i = 0; i < n; i++) dref += (double)a[i] * b[i];
        CHECK(std::abs(d1 - dref) < 1e-4 * std::sqrt((double)n) + 1e-6);
        CHECK(std::abs(d2 - dref) < 1e-4 * std::sqrt((double)n) + 1e-6);

        float s1 = s.vsum(a.data(), n);
        float s2 = v.vsum(a.data(), n);
        double sref = 0;
        for (int64_t i = 0; i < n; i++) sref += a[i];
        CHECK(std::abs(s1 - sref) < 1e-4 * std::sqrt((double)n) + 1e-6);
        CHECK(std::abs(s2 - sref) < 1e-4 * std::sqrt((double)n) + 1e-6);
    }
}

TEST_CASE("silu: forward matches double formula, avx2 poly within tolerance") {
    std::vector<float> x;
    for (float t = -10; t <= 10; t += 0.37f) x.push_back(t);
    x.push_back(-100);
    x.push_back(100);
    x.push_back(0);
    int64_t n = (int64_t)x.size();
    std::vector<float> y1(n), y2(n);
    kern::scalar_ops().silu(x.data(), y1.data(), n);
    avx2().silu(x.data(), y2.data(), n);
    for (int64_t i = 0; i < n; i++) {
        double sig = 1.0 / (1.0 + std::exp(-(double)x[i]));
        double want = (double)x[i] * sig;
        double tol = 2e-6 + 1e-5 * std::abs(want);
        CHECK(std::abs(y1[i] - want) < tol);
        CHECK(std::abs(y2[i] - want) < tol);
        CHECK(std::isfinite(y2[i]));
    }
}

TEST_CASE("silu_bwd: accumulates gradient that matches finite differences") {
    Rng r(14);
    const int64_t n = 37;
    auto x = randn(r, n);
    auto gy = randn(r, n);
    std::vector<float> gx1(n, 0.25f), gx2(n, 0.25f);  // nonzero start: op must add, not overwrite
    kern::scalar_ops().silu_bwd(x.data(), gy.data(), gx1.data(), n);
    avx2().silu_bwd(x.data(), gy.data(), gx2.data(), n);
    for (int64_t i = 0; i < n; i++) {
        double h = 1e-4, xi = x[i];
        auto f = [](double t) { return t / (1.0 + std::exp(-t)); };
        double d = (f(xi + h) - f(xi - h)) / (2 * h);
        double want = 0.25 + (double)gy[i] * d;
        CHECK(std::abs(gx1[i] - want) < 1e-4);
        CHECK(std::abs(gx2[i] - want) < 1e-4);
    }
    CHECK(max_abs_diff(gx1, gx2) < 2e-6);
}
