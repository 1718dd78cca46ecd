// AVX2+FMA kernel variants. This TU is the only one compiled with -mavx2;
// dispatch.cpp verifies cpu support before handing out this table.
#include <immintrin.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "kernels/kernels.h"

namespace ms::kern {

namespace {

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

// vectorized exp, cephes-style polynomial; |rel err| < 2e-7 on [-87, 87]
inline __m256 exp256(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.3762626647949f);
    const __m256 lo = _mm256_set1_ps(-88.3762626647949f);
    x = _mm256_min_ps(_mm256_max_ps(x, lo), hi);
    const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
    const __m256 c1 = _mm256_set1_ps(0.693359375f);
    const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
    __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
    fx = _mm256_floor_ps(fx);
    x = _mm256_fnmadd_ps(fx, c1, x);
    x = _mm256_fnmadd_ps(fx, c2, x);
    __m256 z = _mm256_mul_ps(x, x);
    __m256 y = _mm256_set1_ps(1.9875691500e-4f);
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
    y = _mm256_fmadd_ps(y, z, x);
    y = _mm256_add_ps(y, _mm256_set1_ps(1.0f));
    __m256i n = _mm256_cvtps_epi32(fx);
    n = _mm256_add_epi32(n, _mm256_set1_epi32(0x7f));
    n = _mm256_slli_epi32(n, 23);
    return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

inline __m256 sigmoid256(__m256 x) {
    __m256 e = exp256(_mm256_sub_ps(_mm256_setzero_ps(), x));
    return _mm256_div_ps(_mm256_set1_ps(1.f), _mm256_add_ps(_mm256_set1_ps(1.f), e));
}

// packed path for tall-K panels: B column tiles get strided over so many pages
// that the TLB thrashes; copying the K x 16 tile once makes it stream from L2.
void sgemm_packed(const float* A, const float* B, float* C, int M, int N, int K, bool acc,
                  int j0_end) {
    constexpr int NR = 16;
    static thread_local std::vector<float> pack;
    pack.resize((size_t)K * NR);
    for (int j0 = 0; j0 < j0_end; j0 += NR) {
        float* P = pack.data();
        for (int k = 0; k < K; k++) {
            _mm256_storeu_ps(P + (int64_t)k * NR, _mm256_loadu_ps(B + (int64_t)k * N + j0));
            _mm256_storeu_ps(P + (int64_t)k * NR + 8, _mm256_loadu_ps(B + (int64_t)k * N + j0 + 8));
        }
        int i0 = 0;
        for (; i0 + 6 <= M; i0 += 6) {
            __m256 c00, c01, c10, c11, c20, c21, c30, c31, c40, c41, c50, c51;
            if (acc) {
                c00 = _mm256_loadu_ps(C + (int64_t)(i0 + 0) * N + j0);
                c01 = _mm256_loadu_ps(C + (int64_t)(i0 + 0) * N + j0 + 8);
                c10 = _mm256_loadu_ps(C + (int64_t)(i0 + 1) * N + j0);
                c11 = _mm256_loadu_ps(C + (int64_t)(i0 + 1) * N + j0 + 8);
                c20 = _mm256_loadu_ps(C + (int64_t)(i0 + 2) * N + j0);
                c21 = _mm256_loadu_ps(C + (int64_t)(i0 + 2) * N + j0 + 8);
                c30 = _mm256_loadu_ps(C + (int64_t)(i0 + 3) * N + j0);
                c31 = _mm256_loadu_ps(C + (int64_t)(i0 + 3) * N + j0 + 8);
                c40 = _mm256_loadu_ps(C + (int64_t)(i0 + 4) * N + j0);
                c41 = _mm256_loadu_ps(C + (int64_t)(i0 + 4) * N + j0 + 8);
                c50 = _mm256_loadu_ps(C + (int64_t)(i0 + 5) * N + j0);
                c51 = _mm256_loadu_ps(C + (int64_t)(i0 + 5) * N + j0 + 8);
            } else {
                c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = c40 = c41 = c50 = c51 =
                    _mm256_setzero_ps();
            }
            const float* a0 = A + (int64_t)(i0 + 0) * K;
            const float* a1 = A + (int64_t)(i0 + 1) * K;
            const float* a2 = A + (int64_t)(i0 + 2) * K;
            const float* a3 = A + (int64_t)(i0 + 3) * K;
            const float* a4 = A + (int64_t)(i0 + 4) * K;
            const float* a5 = A + (int64_t)(i0 + 5) * K;
            const float* Pk = P;
            for (int k = 0; k < K; k++, Pk += NR) {
                __m256 b0 = _mm256_loadu_ps(Pk);
                __m256 b1 = _mm256_loadu_ps(Pk + 8);
                __m256 av;
                av = _mm256_set1_ps(a0[k]);
                c00 = _mm256_fmadd_ps(av, b0, c00);
                c01 = _mm256_fmadd_ps(av, b1, c01);
                av = _mm256_set1_ps(a1[k]);
                c10 = _mm256_fmadd_ps(av, b0, c10);
                c11 = _mm256_fmadd_ps(av, b1, c11);
                av = _mm256_set1_ps(a2[k]);
                c20 = _mm256_fmadd_ps(av, b0, c20);
                c21 = _mm256_fmadd_ps(av, b1, c21);
                av = _mm256_set1_ps(a3[k]);
                c30 = _mm256_fmadd_ps(av, b0, c30);
                c31 = _mm256_fmadd_ps(av, b1, c31);
                av = _mm256_set1_ps(a4[k]);
                c40 = _mm256_fmadd_ps(av, b0, c40);
                c41 = _mm256_fmadd_ps(av, b1, c41);
                av = _mm256_set1_ps(a5[k]);
                c50 = _mm256_fmadd_ps(av, b0, c50);
                c51 = _mm256_fmadd_ps(av, b1, c51);
            }
            _mm256_storeu_ps(C + (int64_t)(i0 + 0) * N + j0, c00);
            _mm256_storeu_ps(C + (int64_t)(i0 + 0) * N + j0 + 8, c01);
            _mm256_storeu_ps(C + (int64_t)(i0 + 1) * N + j0, c10);
            _mm256_storeu_ps(C + (int64_t)(i0 + 1) * N + j0 + 8, c11);
            _mm256_storeu_ps(C + (int64_t)(i0 + 2) * N + j0, c20);
            _mm256_storeu_ps(C + (int64_t)(i0 + 2) * N + j0 + 8, c21);
            _mm256_storeu_ps(C + (int64_t)(i0 + 3) * N + j0, c30);
            _mm256_storeu_ps(C + (int64_t)(i0 + 3) * N + j0 + 8, c31);
            _mm256_storeu_ps(C + (int64_t)(i0 + 4) * N + j0, c40);
            _mm256_storeu_ps(C + (int64_t)(i0 + 4) * N + j0 + 8, c41);
            _mm256_storeu_ps(C + (int64_t)(i0 + 5) * N + j0, c50);
            _mm256_storeu_ps(C + (int64_t)(i0 + 5) * N + j0 + 8, c51);
        }
        for (; i0 < M; i0++) {
            __m256 c0, c1;
            if (acc) {
                c0 = _mm256_loadu_ps(C + (int64_t)i0 * N + j0);
                c1 = _mm256_loadu_ps(C + (int64_t)i0 * N + j0 + 8);
            } else {
                c0 = c1 = _mm256_setzero_ps();
            }
            const float* a = A + (int64_t)i0 * K;
            const float* Pk = P;
            for (int k = 0; k < K; k++, Pk += NR) {
                __m256 av = _mm256_set1_ps(a[k]);
                c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(Pk), c0);
                c1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(Pk + 8), c1);
            }
            _mm256_storeu_ps(C + (int64_t)i0 * N + j0, c0);
            _mm256_storeu_ps(C + (int64_t)i0 * N + j0 + 8, c1);
        }
    }
}

// 4 rows x 16 cols microkernel over K
void sgemm_a(const float* A, const float* B, float* C, int M, int N, int K, bool acc) {
    constexpr int MR = 4, NR = 16;
    int j0 = 0;
    if (K >= 512 && N >= 256 && M >= 16) {
        j0 = (N / NR) * NR;
        sgemm_packed(A, B, C, M, N, K, acc, j0);
        if (j0 == N) return;
    }
    for (; j0 + NR <= N; j0 += NR) {
        int i0 = 0;
        for (; i0 + MR <= M; i0 += MR) {
            __m256 c00, c01, c10, c11, c20, c21, c30, c31;
            if (acc) {
                c00 = _mm256_loadu_ps(C + (int64_t)(i0 + 0) * N + j0);
                c01 = _mm256_loadu_ps(C + (int64_t)(i0 + 0) * N + j0 + 8);
                c10 = _mm256_loadu_ps(C + (int64_t)(i0 + 1) * N + j0);
                c11 = _mm256_loadu_ps(C + (int64_t)(i0 + 1) * N + j0 + 8);
                c20 = _mm256_loadu_ps(C + (int64_t)(i0 + 2) * N + j0);
                c21 = _mm256_loadu_ps(C + (int64_t)(i0 + 2) * N + j0 + 8);
                c30 = _mm256_loadu_ps(C + (int64_t)(i0 + 3) * N + j0);
                c31 = _mm256_loadu_ps(C + (int64_t)(i0 + 3) * N + j0 + 8);
            } else {
                c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_ps();
            }
            for (int k = 0; k < K; k++) {
                __m256 b0 = _mm256_loadu_ps(B + (int64_t)k * N + j0);
                __m256 b1 = _mm256_loadu_ps(B + (int64_t)k * N + j0 + 8);
                __m256 a0 = _mm256_set1_ps(A[(int64_t)(i0 + 0) * K + k]);
                __m256 a1 = _mm256_set1_ps(A[(int64_t)(i0 + 1) * K + k]);
                __m256 a2 = _mm256_set1_ps(A[(int64_t)(i0 + 2) * K + k]);
                __m256 a3 = _mm256_set1_ps(A[(int64_t)(i0 + 3) * K + k]);
                c00 = _mm256_fmadd_ps(a0, b0, c00);
                c01 = _mm256_fmadd_ps(a0, b1, c01);
                c10 = _mm256_fmadd_ps(a1, b0, c10);
                c11 = _mm256_fmadd_ps(a1, b1, c11);
                c20 = _mm256_fmadd_ps(a2, b0, c20);
                c21 = _mm256_fmadd_ps(a2, b1, c21);
                c30 = _mm256_fmadd_ps(a3, b0, c30);
                c31 = _mm256_fmadd_ps(a3, b1, c31);
            }
            _mm256_storeu_ps(C + (int64_t)(i0 + 0) * N + j0, c00);
            _mm256_storeu_ps(C + (int64_t)(i0 + 0) * N + j0 + 8, c01);
            _mm256_storeu_ps(C + (int64_t)(i0 + 1) * N + j0, c10);
            _mm256_storeu_ps(C + (int64_t)(i0 + 1) * N + j0 + 8, c11);
            _mm256_storeu_ps(C + (int64_t)(i0 + 2) * N + j0, c20);
            _mm256_storeu_ps(C + (int64_t)(i0 + 2) * N + j0 + 8, c21);
            _mm256_storeu_ps(C + (int64_t)(i0 + 3) * N + j0, c30);
            _mm256_storeu_ps(C + (int64_t)(i0 + 3) * N + j0 + 8, c31);
        }
        // leftover rows, full 16-wide columns
        for (; i0 < M; i0++) {
            __m256 c0, c1;
            if (acc) {
                c0 = _mm256_loadu_ps(C + (int64_t)i0 * N + j0);
                c1 = _mm256_loadu_ps(C + (int64_t)i0 * N + j0 + 8);
            } else {
                c0 = c1 = _mm256_setzero_ps();
            }
            for (int k = 0; k < K; k++) {
                __m256 a0 = _mm256_set1_ps(A[(int64_t)i0 * K + k]);
                c0 = _mm256_fmadd_ps(a0, _mm256_loadu_ps(B + (int64_t)k * N + j0), c0);
                c1 = _mm256_fmadd_ps(a0, _mm256_loadu_ps(B + (int64_t)k * N + j0 + 8), c1);
            }
            _mm256_storeu_ps(C + (int64_t)i0 * N + j0, c0);
            _mm256_storeu_ps(C + (int64_t)i0 * N + j0 + 8, c1);
        }
    }
    // leftover columns, scalar
    if (j0 < N) {
        for (int i = 0; i < M; i++) {
            for (int j = j0; j < N; j++) {
                float s = acc ? C[(int64_t)i * N + j] : 0.f;
                const float* a = A + (int64_t)i * K;
                for (int k = 0; k < K; k++) s += a[k] * B[(int64_t)k * N + j];
                C[(int64_t)i * N + j] = s;
            }
        }
    }
}

void sgemm_nt_a(const float* A, const float* B, float* C, int M, int N, int K, bool acc) {
    // dot-product structure: C[i,j] = A_row_i . B_row_j
    // 3x4 register block: the 1x4 version is load-port bound (5 loads per 4 fmas)
    int j0 = 0;
    for (; j0 + 4 <= N; j0 += 4) {
        const float* b0 = B + (int64_t)(j0 + 0) * K;
        const float* b1 = B + (int64_t)(j0 + 1) * K;
        const float* b2 = B + (int64_t)(j0 + 2) * K;
        const float* b3 = B + (int64_t)(j0 + 3) * K;
        int i = 0;
        for (; i + 3 <= M; i += 3) {
            const float* a0 = A + (int64_t)(i + 0) * K;
            const float* a1 = A + (int64_t)(i + 1) * K;
            const float* a2 = A + (int64_t)(i + 2) * K;
            __m256 s00 = _mm256_setzero_ps(), s01 = _mm256_setzero_ps();
            __m256 s02 = _mm256_setzero_ps(), s03 = _mm256_setzero_ps();
            __m256 s10 = _mm256_setzero_ps(), s11 = _mm256_setzero_ps();
            __m256 s12 = _mm256_setzero_ps(), s13 = _mm256_setzero_ps();
            __m256 s20 = _mm256_setzero_ps(), s21 = _mm256_setzero_ps();
            __m256 s22 = _mm256_setzero_ps(), s23 = _mm256_setzero_ps();
            int k = 0;
            for (; k + 8 <= K; k += 8) {
                __m256 v0 = _mm256_loadu_ps(b0 + k);
                __m256 v1 = _mm256_loadu_ps(b1 + k);
                __m256 v2 = _mm256_loadu_ps(b2 + k);
                __m256 v3 = _mm256_loadu_ps(b3 + k);
                __m256 av = _mm256_loadu_ps(a0 + k);
                s00 = _mm256_fmadd_ps(av, v0, s00);
                s01 = _mm256_fmadd_ps(av, v1, s01);
                s02 = _mm256_fmadd_ps(av, v2, s02);
                s03 = _mm256_fmadd_ps(av, v3, s03);
                av = _mm256_loadu_ps(a1 + k);
                s10 = _mm256_fmadd_ps(av, v0, s10);
                s11 = _mm256_fmadd_ps(av, v1, s11);
                s12 = _mm256_fmadd_ps(av, v2, s12);
                s13 = _mm256_fmadd_ps(av, v3, s13);
                av = _mm256_loadu_ps(a2 + k);
                s20 = _mm256_fmadd_ps(av, v0, s20);
                s21 = _mm256_fmadd_ps(av, v1, s21);
                s22 = _mm256_fmadd_ps(av, v2, s22);
                s23 = _mm256_fmadd_ps(av, v3, s23);
            }
            float r[3][4] = {{hsum8(s00), hsum8(s01), hsum8(s02), hsum8(s03)},
                             {hsum8(s10), hsum8(s11), hsum8(s12), hsum8(s13)},
                             {hsum8(s20), hsum8(s21), hsum8(s22), hsum8(s23)}};
            for (; k < K; k++) {
                r[0][0] += a0[k] * b0[k]; r[0][1] += a0[k] * b1[k];
                r[0][2] += a0[k] * b2[k]; r[0][3] += a0[k] * b3[k];
                r[1][0] += a1[k] * b0[k]; r[1][1] += a1[k] * b1[k];
                r[1][2] += a1[k] * b2[k]; r[1][3] += a1[k] * b3[k];
                r[2][0] += a2[k] * b0[k]; r[2][1] += a2[k] * b1[k];
                r[2][2] += a2[k] * b2[k]; r[2][3] += a2[k] * b3[k];
            }
            for (int d = 0; d < 3; d++) {
                float* c = C + (int64_t)(i + d) * N + j0;
                if (acc) { c[0] += r[d][0]; c[1] += r[d][1]; c[2] += r[d][2]; c[3] += r[d][3]; }
                else     { c[0] = r[d][0];  c[1] = r[d][1];  c[2] = r[d][2];  c[3] = r[d][3];  }
            }
        }
        for (; i < M; i++) {
            const float* a = A + (int64_t)i * K;
            __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
            __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
            int k = 0;
            for (; k + 8 <= K; k += 8) {
                __m256 av = _mm256_loadu_ps(a + k);
                s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + k), s0);
                s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + k), s1);
                s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + k), s2);
                s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + k), s3);
            }
            float r0 = hsum8(s0), r1 = hsum8(s1), r2 = hsum8(s2), r3 = hsum8(s3);
            for (; k < K; k++) {
                r0 += a[k] * b0[k];
                r1 += a[k] * b1[k];
                r2 += a[k] * b2[k];
                r3 += a[k] * b3[k];
            }
            float* c = C + (int64_t)i * N + j0;
            if (acc) { c[0] += r0; c[1] += r1; c[2] += r2; c[3] += r3; }
            else     { c[0] = r0;  c[1] = r1;  c[2] = r2;  c[3] = r3;  }
        }
    }
    for (; j0 < N; j0++) {
        for (int i = 0; i < M; i++) {
            const float* a = A + (int64_t)i * K;
            const float* b = B + (int64_t)j0 * K;
            __m256 s = _mm256_setzero_ps();
            int k = 0;
            for (; k + 8 <= K; k += 8)
                s = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s);
            float r = hsum8(s);
            for (; k < K; k++) r += a[k] * b[k];
            float* c = C + (int64_t)i * N + j0;
            *c = acc ? *c + r : r;
        }
    }
}

void axpy_a(float a, const float* x, float* y, int64_t n) {
    __m256 av = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; i++) y[i] += a * x[i];
}
void vadd_a(const float* a, const float* b, float* y, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; i++) y[i] = a[i] + b[i];
}
void vmul_a(const float* a, const float* b, float* y, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; i++) y[i] = a[i] * b[i];
}
void vscale_a(const float* a, float s, float* y, int64_t n) {
    __m256 sv = _mm256_set1_ps(s);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(sv, _mm256_loadu_ps(a + i)));
    for (; i < n; i++) y[i] = s * a[i];
}
void silu_a(const float* x, float* y, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 xv = _mm256_loadu_ps(x + i);
        _mm256_storeu_ps(y + i, _mm256_mul_ps(xv, sigmoid256(xv)));
    }
    for (; i < n; i++) {
        float s = 1.f / (1.f + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
}
void silu_bwd_a(const float* x, const float* gy, float* gx, int64_t n) {
    const __m256 one = _mm256_set1_ps(1.f);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 xv = _mm256_loadu_ps(x + i);
        __m256 s = sigmoid256(xv);
        // s + x*s*(1-s)
        __m256 d = _mm256_fmadd_ps(_mm256_mul_ps(xv, s), _mm256_sub_ps(one, s), s);
        _mm256_storeu_ps(gx + i, _mm256_fmadd_ps(_mm256_loadu_ps(gy + i), d, _mm256_loadu_ps(gx + i)));
    }
    for (; i < n; i++) {
        float s = 1.f / (1.f + std::exp(-x[i]));
        gx[i] += gy[i] * (s + x[i] * s * (1.f - s));
    }
}
float dot_a(const float* a, const float* b, int64_t n) {
    __m256 s = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        s = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), s);
    float r = hsum8(s);
    for (; i < n; i++) r += a[i] * b[i];
    return r;
}
float vsum_a(const float* a, int64_t n) {
    __m256 s = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) s = _mm256_add_ps(s, _mm256_loadu_ps(a + i));
    float r = hsum8(s);
    for (; i < n; i++) r += a[i];
    return r;
}

}  // namespace

const Ops* avx2_table() {
    static const Ops t = {sgemm_a, sgemm_nt_a, axpy_a,   vadd_a, vmul_a,
                          vscale_a, silu_a,    silu_bwd_a, dot_a, vsum_a, "avx2"};
    return &t;
}

}  // namespace ms::kern
