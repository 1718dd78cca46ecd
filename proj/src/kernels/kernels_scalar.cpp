#include <cmath>
#include <cstring>

#include "kernels/kernels.h"

namespace ms::kern {

namespace {

void sgemm_s(const float* A, const float* B, float* C, int M, int N, int K, bool acc) {
    if (!acc) std::memset(C, 0, sizeof(float) * (size_t)M * N);
    for (int i = 0; i < M; i++) {
        float* c = C + (int64_t)i * N;
        const float* a = A + (int64_t)i * K;
        for (int k = 0; k < K; k++) {
            float av = a[k];
            const float* b = B + (int64_t)k * N;
            for (int j = 0; j < N; j++) c[j] += av * b[j];
        }
    }
}

void sgemm_nt_s(const float* A, const float* B, float* C, int M, int N, int K, bool acc) {
    for (int i = 0; i < M; i++) {
        const float* a = A + (int64_t)i * K;
        for (int j = 0; j < N; j++) {
            const float* b = B + (int64_t)j * K;
            float s = 0.f;
            for (int k = 0; k < K; k++) s += a[k] * b[k];
            float* c = C + (int64_t)i * N + j;
            *c = acc ? *c + s : s;
        }
    }
}

void axpy_s(float a, const float* x, float* y, int64_t n) {
    for (int64_t i = 0; i < n; i++) y[i] += a * x[i];
}
void vadd_s(const float* a, const float* b, float* y, int64_t n) {
    for (int64_t i = 0; i < n; i++) y[i] = a[i] + b[i];
}
void vmul_s(const float* a, const float* b, float* y, int64_t n) {
    for (int64_t i = 0; i < n; i++) y[i] = a[i] * b[i];
}
void vscale_s(const float* a, float s, float* y, int64_t n) {
    for (int64_t i = 0; i < n; i++) y[i] = s * a[i];
}
void silu_s(const float* x, float* y, int64_t n) {
    for (int64_t i = 0; i < n; i++) {
        float s = 1.f / (1.f + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
}
void silu_bwd_s(const float* x, const float* gy, float* gx, int64_t n) {
    for (int64_t i = 0; i < n; i++) {
        float s = 1.f / (1.f + std::exp(-x[i]));
        gx[i] += gy[i] * (s + x[i] * s * (1.f - s));
    }
}
float dot_s(const float* a, const float* b, int64_t n) {
    float s = 0.f;
    for (int64_t i = 0; i < n; i++) s += a[i] * b[i];
    return s;
}
float vsum_s(const float* a, int64_t n) {
    float s = 0.f;
    for (int64_t i = 0; i < n; i++) s += a[i];
    return s;
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops t = {sgemm_s, sgemm_nt_s, axpy_s,   vadd_s, vmul_s,
                          vscale_s, silu_s,    silu_bwd_s, dot_s, vsum_s, "scalar"};
    return t;
}

}  // namespace ms::kern
