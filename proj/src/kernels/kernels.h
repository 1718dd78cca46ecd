#pragma once
#include <cstdint>
#include <string>

namespace ms::kern {

// float kernel table, filled by dispatch with scalar or AVX2 variants.
// all row-major: A [M,K], B [K,N], C [M,N].
struct Ops {
    // C = A*B (accumulate ? C += A*B : C = A*B)
    void (*sgemm)(const float* A, const float* B, float* C, int M, int N, int K, bool accumulate);
    // C[M,N] = A[M,K] * B[N,K]^T — both inner loops contiguous
    void (*sgemm_nt)(const float* A, const float* B, float* C, int M, int N, int K, bool accumulate);
    void (*axpy)(float a, const float* x, float* y, int64_t n);          // y += a*x
    void (*vadd)(const float* a, const float* b, float* y, int64_t n);   // y = a+b
    void (*vmul)(const float* a, const float* b, float* y, int64_t n);   // y = a*b
    void (*vscale)(const float* a, float s, float* y, int64_t n);        // y = s*a
    void (*silu)(const float* x, float* y, int64_t n);                   // y = x*sigmoid(x)
    void (*silu_bwd)(const float* x, const float* gy, float* gx, int64_t n);  // gx += gy * dsilu(x)
    float (*dot)(const float* a, const float* b, int64_t n);
    float (*vsum)(const float* a, int64_t n);
    const char* name;
};

const Ops& ops();                 // selected at first use; MSLDM_KERNELS=scalar|avx2 overrides
const Ops& scalar_ops();          // always available, the reference implementation
const Ops* avx2_ops_if_supported();
std::string active_kernels();

// generic reference gemms used by the float64 gradcheck paths
template <typename T>
void gemm_ref(const T* A, const T* B, T* C, int M, int N, int K, bool accumulate) {
    for (int i = 0; i < M; i++) {
        for (int j = 0; j < N; j++) {
            double acc = accumulate ? (double)C[(int64_t)i * N + j] : 0.0;
            const T* a = A + (int64_t)i * K;
            for (int k = 0; k < K; k++) acc += (double)a[k] * (double)B[(int64_t)k * N + j];
            C[(int64_t)i * N + j] = (T)acc;
        }
    }
}

template <typename T>
void gemm_nt_ref(const T* A, const T* B, T* C, int M, int N, int K, bool accumulate) {
    for (int i = 0; i < M; i++) {
        for (int j = 0; j < N; j++) {
            double acc = accumulate ? (double)C[(int64_t)i * N + j] : 0.0;
            const T* a = A + (int64_t)i * K;
            const T* b = B + (int64_t)j * K;
            for (int k = 0; k < K; k++) acc += (double)a[k] * (double)b[k];
            C[(int64_t)i * N + j] = (T)acc;
        }
    }
}

}  // namespace ms::kern
