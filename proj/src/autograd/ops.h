#pragma once
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>

#include "autograd/tape.h"
#include "core/fft.h"
#include "kernels/kernels.h"

namespace ms {

// ---- gemm shims: float goes through the dispatched kernels, double through
// the scalar reference (gradcheck path) ----
template <typename T>
inline void mm_nn(const T* A, const T* B, T* C, int M, int N, int K, bool acc) {
    kern::gemm_ref<T>(A, B, C, M, N, K, acc);
}
template <>
inline void mm_nn<float>(const float* A, const float* B, float* C, int M, int N, int K, bool acc) {
    kern::ops().sgemm(A, B, C, M, N, K, acc);
}
template <typename T>
inline void mm_nt(const T* A, const T* B, T* C, int M, int N, int K, bool acc) {
    kern::gemm_nt_ref<T>(A, B, C, M, N, K, acc);
}
template <>
inline void mm_nt<float>(const float* A, const float* B, float* C, int M, int N, int K, bool acc) {
    kern::ops().sgemm_nt(A, B, C, M, N, K, acc);
}

template <typename T>
inline T sigmoid_s(T x) { return (T)(1.0 / (1.0 + std::exp(-(double)x))); }

// ======== elementwise ========

template <typename T>
Node<T>* add(Tape<T>& tp, Node<T>* a, Node<T>* b) {
    check(a->val.same_shape(b->val), ErrKind::validation, "add: shape mismatch");
    Ten<T> y = a->val;
    for (int64_t i = 0; i < y.numel(); i++) y.v[i] += b->val.v[i];
    return tp.make(std::move(y), {a, b}, [a, b](Node<T>& n) {
        if (a->needs_grad) { auto& g = a->ensure_grad(); for (int64_t i = 0; i < g.numel(); i++) g.v[i] += n.grad.v[i]; }
        if (b->needs_grad) { auto& g = b->ensure_grad(); for (int64_t i = 0; i < g.numel(); i++) g.v[i] += n.grad.v[i]; }
    });
}

template <typename T>
Node<T>* sub(Tape<T>& tp, Node<T>* a, Node<T>* b) {
    check(a->val.same_shape(b->val), ErrKind::validation, "sub: shape mismatch");
    Ten<T> y = a->val;
    for (int64_t i = 0; i < y.numel(); i++) y.v[i] -= b->val.v[i];
    return tp.make(std::move(y), {a, b}, [a, b](Node<T>& n) {
        if (a->needs_grad) { auto& g = a->ensure_grad(); for (int64_t i = 0; i < g.numel(); i++) g.v[i] += n.grad.v[i]; }
        if (b->needs_grad) { auto& g = b->ensure_grad(); for (int64_t i = 0; i < g.numel(); i++) g.v[i] -= n.grad.v[i]; }
    });
}

template <typename T>
Node<T>* mul(Tape<T>& tp, Node<T>* a, Node<T>* b) {
    check(a->val.same_shape(b->val), ErrKind::validation, "mul: shape mismatch");
    Ten<T> y = a->val;
    for (int64_t i = 0; i < y.numel(); i++) y.v[i] *= b->val.v[i];
    return tp.make(std::move(y), {a, b}, [a, b](Node<T>& n) {
        if (a->needs_grad) { auto& g = a->ensure_grad(); for (int64_t i = 0; i < g.numel(); i++) g.v[i] += n.grad.v[i] * b->val.v[i]; }
        if (b->needs_grad) { auto& g = b->ensure_grad(); for (int64_t i = 0; i < g.numel(); i++) g.v[i] += n.grad.v[i] * a->val.v[i]; }
    });
}

template <typename T>
Node<T>* add_scalar(Tape<T>& tp, Node<T>* a, double c) {
    Ten<T> y = a->val;
    for (auto& x : y.v) x += (T)c;
    return tp.make(std::move(y), {a}, [a](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < g.numel(); i++) g.v[i] += n.grad.v[i];
    });
}

template <typename T>
Node<T>* mul_scalar(Tape<T>& tp, Node<T>* a, double c) {
    Ten<T> y = a->val;
    for (auto& x : y.v) x *= (T)c;
    return tp.make(std::move(y), {a}, [a, c](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < g.numel(); i++) g.v[i] += n.grad.v[i] * (T)c;
    });
}

template <typename T>
Node<T>* silu_n(Tape<T>& tp, Node<T>* a) {
    Ten<T> y(a->val.shape);
    for (int64_t i = 0; i < y.numel(); i++) {
        T x = a->val.v[i];
        y.v[i] = x * sigmoid_s(x);
    }
    return tp.make(std::move(y), {a}, [a](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < g.numel(); i++) {
            T x = a->val.v[i];
            T s = sigmoid_s(x);
            g.v[i] += n.grad.v[i] * (s + x * s * ((T)1 - s));
        }
    });
}
// float training path uses the dispatched silu kernels
template <>
inline Node<float>* silu_n<float>(Tape<float>& tp, Node<float>* a) {
    Ten<float> y(a->val.shape);
    kern::ops().silu(a->val.data(), y.data(), y.numel());
    return tp.make(std::move(y), {a}, [a](Node<float>& n) {
        auto& g = a->ensure_grad();
        kern::ops().silu_bwd(a->val.data(), n.grad.data(), g.data(), g.numel());
    });
}

template <typename T>
Node<T>* tanh_n(Tape<T>& tp, Node<T>* a) {
    Ten<T> y(a->val.shape);
    for (int64_t i = 0; i < y.numel(); i++) y.v[i] = (T)std::tanh((double)a->val.v[i]);
    return tp.make(std::move(y), {a}, [a](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < g.numel(); i++) {
            T t = n.val.v[i];
            g.v[i] += n.grad.v[i] * ((T)1 - t * t);
        }
    });
}

template <typename T>
Node<T>* exp_n(Tape<T>& tp, Node<T>* a) {
    Ten<T> y(a->val.shape);
    for (int64_t i = 0; i < y.numel(); i++) y.v[i] = (T)std::exp((double)a->val.v[i]);
    return tp.make(std::move(y), {a}, [a](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < g.numel(); i++) g.v[i] += n.grad.v[i] * n.val.v[i];
    });
}

// log(x + eps)
template <typename T>
Node<T>* log_eps(Tape<T>& tp, Node<T>* a, double eps) {
    Ten<T> y(a->val.shape);
    for (int64_t i = 0; i < y.numel(); i++) y.v[i] = (T)std::log((double)a->val.v[i] + eps);
    return tp.make(std::move(y), {a}, [a, eps](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < g.numel(); i++) g.v[i] += n.grad.v[i] / (T)((double)a->val.v[i] + eps);
    });
}

template <typename T>
Node<T>* abs_n(Tape<T>& tp, Node<T>* a) {
    Ten<T> y(a->val.shape);
    for (int64_t i = 0; i < y.numel(); i++) y.v[i] = std::abs(a->val.v[i]);
    return tp.make(std::move(y), {a}, [a](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < g.numel(); i++) {
            T x = a->val.v[i];
            g.v[i] += n.grad.v[i] * (x > (T)0 ? (T)1 : (x < (T)0 ? (T)-1 : (T)0));
        }
    });
}

// clamp with pass-through gradient strictly inside the range
template <typename T>
Node<T>* clamp_n(Tape<T>& tp, Node<T>* a, double lo, double hi) {
    Ten<T> y(a->val.shape);
    for (int64_t i = 0; i < y.numel(); i++) {
        T x = a->val.v[i];
        y.v[i] = x < (T)lo ? (T)lo : (x > (T)hi ? (T)hi : x);
    }
    return tp.make(std::move(y), {a}, [a, lo, hi](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < g.numel(); i++) {
            T x = a->val.v[i];
            if (x >= (T)lo && x <= (T)hi) g.v[i] += n.grad.v[i];
        }
    });
}

// ======== reductions ========

template <typename T>
Node<T>* sum_all(Tape<T>& tp, Node<T>* a) {
    double s = 0;
    for (auto x : a->val.v) s += (double)x;
    Ten<T> y({1});
    y.v[0] = (T)s;
    return tp.make(std::move(y), {a}, [a](Node<T>& n) {
        auto& g = a->ensure_grad();
        T gy = n.grad.v[0];
        for (int64_t i = 0; i < g.numel(); i++) g.v[i] += gy;
    });
}

template <typename T>
Node<T>* mean_all(Tape<T>& tp, Node<T>* a) {
    double s = 0;
    for (auto x : a->val.v) s += (double)x;
    int64_t n_el = a->val.numel();
    Ten<T> y({1});
    y.v[0] = (T)(s / n_el);
    return tp.make(std::move(y), {a}, [a, n_el](Node<T>& n) {
        auto& g = a->ensure_grad();
        T gy = n.grad.v[0] / (T)n_el;
        for (int64_t i = 0; i < g.numel(); i++) g.v[i] += gy;
    });
}

// ======== shape ========

template <typename T>
Node<T>* reshape(Tape<T>& tp, Node<T>* a, std::vector<int64_t> shape) {
    check(Ten<T>::count(shape) == a->val.numel(), ErrKind::validation, "reshape: numel mismatch");
    Ten<T> y;
    y.shape = std::move(shape);
    y.v = a->val.v;
    return tp.make(std::move(y), {a}, [a](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < g.numel(); i++) g.v[i] += n.grad.v[i];
    });
}

template <typename T>
Node<T>* concat_c(Tape<T>& tp, Node<T>* a, Node<T>* b) {
    // [B,C1,T] + [B,C2,T] -> [B,C1+C2,T]
    int64_t B = a->val.shape[0], C1 = a->val.shape[1], Tq = a->val.shape[2], C2 = b->val.shape[1];
    check(b->val.shape[0] == B && b->val.shape[2] == Tq, ErrKind::validation, "concat_c: shape mismatch");
    Ten<T> y({B, C1 + C2, Tq});
    for (int64_t i = 0; i < B; i++) {
        std::copy(a->val.v.begin() + i * C1 * Tq, a->val.v.begin() + (i + 1) * C1 * Tq,
                  y.v.begin() + i * (C1 + C2) * Tq);
        std::copy(b->val.v.begin() + i * C2 * Tq, b->val.v.begin() + (i + 1) * C2 * Tq,
                  y.v.begin() + i * (C1 + C2) * Tq + C1 * Tq);
    }
    return tp.make(std::move(y), {a, b}, [a, b, B, C1, C2, Tq](Node<T>& n) {
        if (a->needs_grad) {
            auto& g = a->ensure_grad();
            for (int64_t i = 0; i < B; i++)
                for (int64_t j = 0; j < C1 * Tq; j++)
                    g.v[i * C1 * Tq + j] += n.grad.v[i * (C1 + C2) * Tq + j];
        }
        if (b->needs_grad) {
            auto& g = b->ensure_grad();
            for (int64_t i = 0; i < B; i++)
                for (int64_t j = 0; j < C2 * Tq; j++)
                    g.v[i * C2 * Tq + j] += n.grad.v[i * (C1 + C2) * Tq + C1 * Tq + j];
        }
    });
}

template <typename T>
Node<T>* slice_c(Tape<T>& tp, Node<T>* a, int64_t c0, int64_t c1) {
    // [B,C,T] -> [B,c1-c0,T]
    int64_t B = a->val.shape[0], C = a->val.shape[1], Tq = a->val.shape[2];
    check(0 <= c0 && c0 < c1 && c1 <= C, ErrKind::validation, "slice_c: bad range");
    int64_t Cs = c1 - c0;
    Ten<T> y({B, Cs, Tq});
    for (int64_t i = 0; i < B; i++)
        std::copy(a->val.v.begin() + (i * C + c0) * Tq, a->val.v.begin() + (i * C + c1) * Tq,
                  y.v.begin() + i * Cs * Tq);
    return tp.make(std::move(y), {a}, [a, B, C, Tq, c0, Cs](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < B; i++)
            for (int64_t j = 0; j < Cs * Tq; j++)
                g.v[(i * C + c0) * Tq + j] += n.grad.v[i * Cs * Tq + j];
    });
}

// [B,C,T] -> [B,T,C]
template <typename T>
Node<T>* permute_bct_btc(Tape<T>& tp, Node<T>* a) {
    int64_t B = a->val.shape[0], C = a->val.shape[1], Tq = a->val.shape[2];
    Ten<T> y({B, Tq, C});
    for (int64_t b = 0; b < B; b++)
        for (int64_t c = 0; c < C; c++)
            for (int64_t t = 0; t < Tq; t++)
                y.v[(b * Tq + t) * C + c] = a->val.v[(b * C + c) * Tq + t];
    return tp.make(std::move(y), {a}, [a, B, C, Tq](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t b = 0; b < B; b++)
            for (int64_t c = 0; c < C; c++)
                for (int64_t t = 0; t < Tq; t++)
                    g.v[(b * C + c) * Tq + t] += n.grad.v[(b * Tq + t) * C + c];
    });
}

// [B,T,C] -> [B,C,T]
template <typename T>
Node<T>* permute_btc_bct(Tape<T>& tp, Node<T>* a) {
    int64_t B = a->val.shape[0], Tq = a->val.shape[1], C = a->val.shape[2];
    Ten<T> y({B, C, Tq});
    for (int64_t b = 0; b < B; b++)
        for (int64_t t = 0; t < Tq; t++)
            for (int64_t c = 0; c < C; c++)
                y.v[(b * C + c) * Tq + t] = a->val.v[(b * Tq + t) * C + c];
    return tp.make(std::move(y), {a}, [a, B, C, Tq](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t b = 0; b < B; b++)
            for (int64_t t = 0; t < Tq; t++)
                for (int64_t c = 0; c < C; c++)
                    g.v[(b * Tq + t) * C + c] += n.grad.v[(b * C + c) * Tq + t];
    });
}

// slice along the last dim: [..., L] -> [..., l1-l0]
template <typename T>
Node<T>* slice_last(Tape<T>& tp, Node<T>* a, int64_t l0, int64_t l1) {
    int64_t L = a->val.shape.back();
    check(0 <= l0 && l0 < l1 && l1 <= L, ErrKind::validation, "slice_last: bad range");
    int64_t rows = a->val.numel() / L, Ls = l1 - l0;
    auto shape = a->val.shape;
    shape.back() = Ls;
    Ten<T> y(shape);
    for (int64_t r = 0; r < rows; r++)
        std::copy(a->val.v.begin() + r * L + l0, a->val.v.begin() + r * L + l1, y.v.begin() + r * Ls);
    return tp.make(std::move(y), {a}, [a, rows, L, l0, Ls](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t r = 0; r < rows; r++)
            for (int64_t j = 0; j < Ls; j++) g.v[r * L + l0 + j] += n.grad.v[r * Ls + j];
    });
}

// [B,T,H*dh] -> [B*H,T,dh]
template <typename T>
Node<T>* split_heads(Tape<T>& tp, Node<T>* a, int64_t H) {
    int64_t B = a->val.shape[0], Tq = a->val.shape[1], W = a->val.shape[2];
    check(W % H == 0, ErrKind::validation, "split_heads: width not divisible");
    int64_t dh = W / H;
    Ten<T> y({B * H, Tq, dh});
    for (int64_t b = 0; b < B; b++)
        for (int64_t t = 0; t < Tq; t++)
            for (int64_t h = 0; h < H; h++)
                std::copy(a->val.v.begin() + (b * Tq + t) * W + h * dh,
                          a->val.v.begin() + (b * Tq + t) * W + (h + 1) * dh,
                          y.v.begin() + ((b * H + h) * Tq + t) * dh);
    return tp.make(std::move(y), {a}, [a, B, Tq, W, H, dh](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t b = 0; b < B; b++)
            for (int64_t t = 0; t < Tq; t++)
                for (int64_t h = 0; h < H; h++)
                    for (int64_t d = 0; d < dh; d++)
                        g.v[(b * Tq + t) * W + h * dh + d] += n.grad.v[((b * H + h) * Tq + t) * dh + d];
    });
}

// [B*H,T,dh] -> [B,T,H*dh]
template <typename T>
Node<T>* merge_heads(Tape<T>& tp, Node<T>* a, int64_t H) {
    int64_t BH = a->val.shape[0], Tq = a->val.shape[1], dh = a->val.shape[2];
    check(BH % H == 0, ErrKind::validation, "merge_heads: batch not divisible");
    int64_t B = BH / H, W = H * dh;
    Ten<T> y({B, Tq, W});
    for (int64_t b = 0; b < B; b++)
        for (int64_t t = 0; t < Tq; t++)
            for (int64_t h = 0; h < H; h++)
                std::copy(a->val.v.begin() + ((b * H + h) * Tq + t) * dh,
                          a->val.v.begin() + ((b * H + h) * Tq + t + 1) * dh,
                          y.v.begin() + (b * Tq + t) * W + h * dh);
    return tp.make(std::move(y), {a}, [a, B, Tq, H, dh, W](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t b = 0; b < B; b++)
            for (int64_t t = 0; t < Tq; t++)
                for (int64_t h = 0; h < H; h++)
                    for (int64_t d = 0; d < dh; d++)
                        g.v[((b * H + h) * Tq + t) * dh + d] += n.grad.v[(b * Tq + t) * W + h * dh + d];
    });
}

// ======== linear algebra ========

namespace detail {
template <typename T>
void transpose(const T* a, T* at, int64_t R, int64_t C) {  // a[R,C] -> at[C,R]
    for (int64_t i = 0; i < R; i++)
        for (int64_t j = 0; j < C; j++) at[j * R + i] = a[i * C + j];
}
}  // namespace detail

// y[N,out] = x[N,in] @ w[out,in]^T + b[out]
template <typename T>
Node<T>* linear(Tape<T>& tp, Node<T>* x, Node<T>* w, Node<T>* b) {
    int64_t N = x->val.shape[0], in = x->val.shape[1];
    int64_t out = w->val.shape[0];
    check(w->val.shape[1] == in, ErrKind::validation, "linear: dim mismatch");
    Ten<T> y({N, out});
    mm_nt(x->val.data(), w->val.data(), y.data(), (int)N, (int)out, (int)in, false);
    if (b) {
        check(b->val.numel() == out, ErrKind::validation, "linear: bias dim");
        for (int64_t i = 0; i < N; i++)
            for (int64_t j = 0; j < out; j++) y.v[i * out + j] += b->val.v[j];
    }
    return tp.make(std::move(y), {x, w, b}, [x, w, b, N, in, out](Node<T>& n) {
        if (x->needs_grad) {
            auto& g = x->ensure_grad();
            mm_nn(n.grad.data(), w->val.data(), g.data(), (int)N, (int)in, (int)out, true);
        }
        if (w->needs_grad) {
            auto& g = w->ensure_grad();
            // dw[out,in] += gy^T[out,N] @ x[N,in]
            std::vector<T> gyT((size_t)out * N);
            detail::transpose(n.grad.data(), gyT.data(), N, out);
            mm_nn(gyT.data(), x->val.data(), g.data(), (int)out, (int)in, (int)N, true);
        }
        if (b && b->needs_grad) {
            auto& g = b->ensure_grad();
            for (int64_t i = 0; i < N; i++)
                for (int64_t j = 0; j < out; j++) g.v[j] += n.grad.v[i * out + j];
        }
    });
}

// c[S,P,R] = a[S,P,Q] @ b[S,Q,R]
template <typename T>
Node<T>* bmm(Tape<T>& tp, Node<T>* a, Node<T>* b) {
    int64_t S = a->val.shape[0], P = a->val.shape[1], Q = a->val.shape[2], R = b->val.shape[2];
    check(b->val.shape[0] == S && b->val.shape[1] == Q, ErrKind::validation, "bmm: shape mismatch");
    Ten<T> y({S, P, R});
    for (int64_t s = 0; s < S; s++)
        mm_nn(a->val.data() + s * P * Q, b->val.data() + s * Q * R, y.data() + s * P * R,
              (int)P, (int)R, (int)Q, false);
    return tp.make(std::move(y), {a, b}, [a, b, S, P, Q, R](Node<T>& n) {
        if (a->needs_grad) {
            auto& g = a->ensure_grad();
            // da = gy @ b^T : nt form
            for (int64_t s = 0; s < S; s++)
                mm_nt(n.grad.data() + s * P * R, b->val.data() + s * Q * R, g.data() + s * P * Q,
                      (int)P, (int)Q, (int)R, true);
        }
        if (b->needs_grad) {
            auto& g = b->ensure_grad();
            // db = a^T @ gy
            std::vector<T> aT((size_t)Q * P);
            for (int64_t s = 0; s < S; s++) {
                detail::transpose(a->val.data() + s * P * Q, aT.data(), P, Q);
                mm_nn(aT.data(), n.grad.data() + s * P * R, g.data() + s * Q * R,
                      (int)Q, (int)R, (int)P, true);
            }
        }
    });
}

// c[S,P,R] = a[S,P,Q] @ b[S,R,Q]^T
template <typename T>
Node<T>* bmm_nt(Tape<T>& tp, Node<T>* a, Node<T>* b) {
    int64_t S = a->val.shape[0], P = a->val.shape[1], Q = a->val.shape[2], R = b->val.shape[1];
    check(b->val.shape[0] == S && b->val.shape[2] == Q, ErrKind::validation, "bmm_nt: shape mismatch");
    Ten<T> y({S, P, R});
    for (int64_t s = 0; s < S; s++)
        mm_nt(a->val.data() + s * P * Q, b->val.data() + s * R * Q, y.data() + s * P * R,
              (int)P, (int)R, (int)Q, false);
    return tp.make(std::move(y), {a, b}, [a, b, S, P, Q, R](Node<T>& n) {
        if (a->needs_grad) {
            auto& g = a->ensure_grad();
            // da[P,Q] = gy[P,R] @ b[R,Q]
            for (int64_t s = 0; s < S; s++)
                mm_nn(n.grad.data() + s * P * R, b->val.data() + s * R * Q, g.data() + s * P * Q,
                      (int)P, (int)Q, (int)R, true);
        }
        if (b->needs_grad) {
            auto& g = b->ensure_grad();
            // db[R,Q] = gy^T[R,P] @ a[P,Q]
            std::vector<T> gyT((size_t)R * P);
            for (int64_t s = 0; s < S; s++) {
                detail::transpose(n.grad.data() + s * P * R, gyT.data(), P, R);
                mm_nn(gyT.data(), a->val.data() + s * P * Q, g.data() + s * R * Q,
                      (int)R, (int)Q, (int)P, true);
            }
        }
    });
}

template <typename T>
Node<T>* softmax_last(Tape<T>& tp, Node<T>* a) {
    int64_t L = a->val.shape.back(), rows = a->val.numel() / L;
    Ten<T> y(a->val.shape);
    for (int64_t r = 0; r < rows; r++) {
        const T* x = a->val.data() + r * L;
        T* o = y.data() + r * L;
        T mx = x[0];
        for (int64_t i = 1; i < L; i++) mx = std::max(mx, x[i]);
        double s = 0;
        for (int64_t i = 0; i < L; i++) { o[i] = (T)std::exp((double)(x[i] - mx)); s += (double)o[i]; }
        T inv = (T)(1.0 / s);
        for (int64_t i = 0; i < L; i++) o[i] *= inv;
    }
    return tp.make(std::move(y), {a}, [a, rows, L](Node<T>& n) {
        auto& g = a->ensure_grad();
        for (int64_t r = 0; r < rows; r++) {
            const T* yv = n.val.data() + r * L;
            const T* gy = n.grad.data() + r * L;
            double dot = 0;
            for (int64_t i = 0; i < L; i++) dot += (double)gy[i] * (double)yv[i];
            for (int64_t i = 0; i < L; i++) g.v[r * L + i] += ((T)((double)gy[i] - dot)) * yv[i];
        }
    });
}

// ======== conv ========

namespace detail {
// x[Ci,T] -> cols[Ci*k, To] with zero padding
template <typename T>
void im2col(const T* x, T* cols, int64_t Ci, int64_t Tlen, int64_t k, int64_t stride, int64_t pad, int64_t To) {
    if (stride == 1) {
        // each row is a shifted copy of the input row with zeroed edges
        for (int64_t c = 0; c < Ci; c++) {
            for (int64_t j = 0; j < k; j++) {
                T* dst = cols + (c * k + j) * To;
                int64_t base = j - pad;
                int64_t t0 = std::max<int64_t>(0, -base);
                int64_t t1 = std::min(To, Tlen - base);
                if (t1 < t0) t1 = t0;
                std::fill(dst, dst + t0, (T)0);
                std::memcpy(dst + t0, x + c * Tlen + base + t0, (size_t)(t1 - t0) * sizeof(T));
                std::fill(dst + t1, dst + To, (T)0);
            }
        }
        return;
    }
    for (int64_t c = 0; c < Ci; c++) {
        for (int64_t j = 0; j < k; j++) {
            T* dst = cols + (c * k + j) * To;
            int64_t base = j - pad;
            for (int64_t t = 0; t < To; t++) {
                int64_t src = base + t * stride;
                dst[t] = (src >= 0 && src < Tlen) ? x[c * Tlen + src] : (T)0;
            }
        }
    }
}
// reusable per-thread work buffers; slot keeps concurrent uses within one op apart.
// grows monotonically and never shrinks, so repeated graph builds stop allocating.
template <typename T>
std::vector<T>& scratch(int slot, size_t n) {
    static thread_local std::vector<T> bufs[3];
    auto& v = bufs[slot];
    if (v.size() < n) v.resize(n);
    return v;
}

template <typename T>
void col2im_acc(const T* cols, T* gx, int64_t Ci, int64_t Tlen, int64_t k, int64_t stride, int64_t pad, int64_t To) {
    if (stride == 1) {
        for (int64_t c = 0; c < Ci; c++) {
            for (int64_t j = 0; j < k; j++) {
                const T* src = cols + (c * k + j) * To;
                int64_t base = j - pad;
                int64_t t0 = std::max<int64_t>(0, -base);
                int64_t t1 = std::min(To, Tlen - base);
                T* dst = gx + c * Tlen + base;
                for (int64_t t = t0; t < t1; t++) dst[t] += src[t];
            }
        }
        return;
    }
    for (int64_t c = 0; c < Ci; c++) {
        for (int64_t j = 0; j < k; j++) {
            const T* src = cols + (c * k + j) * To;
            int64_t base = j - pad;
            for (int64_t t = 0; t < To; t++) {
                int64_t dst = base + t * stride;
                if (dst >= 0 && dst < Tlen) gx[c * Tlen + dst] += src[t];
            }
        }
    }
}
}  // namespace detail

// x[B,Ci,T], w[Co,Ci,k], b[Co] or null -> y[B,Co,To]
template <typename T>
Node<T>* conv1d(Tape<T>& tp, Node<T>* x, Node<T>* w, Node<T>* b, int64_t stride, int64_t pad) {
    int64_t B = x->val.shape[0], Ci = x->val.shape[1], Tlen = x->val.shape[2];
    int64_t Co = w->val.shape[0], k = w->val.shape[2];
    check(w->val.shape[1] == Ci, ErrKind::validation, "conv1d: channel mismatch");
    int64_t To = (Tlen + 2 * pad - k) / stride + 1;
    check(To >= 1, ErrKind::validation, "conv1d: output would be empty");
    Ten<T> y({B, Co, To});
    // pointwise conv is a plain matmul; skip the im2col copy
    const bool direct = (k == 1 && stride == 1 && pad == 0);
    auto& cols = detail::scratch<T>(0, direct ? 0 : (size_t)(Ci * k) * To);
    for (int64_t bi = 0; bi < B; bi++) {
        const T* cp = x->val.data() + bi * Ci * Tlen;
        if (!direct) {
            detail::im2col(cp, cols.data(), Ci, Tlen, k, stride, pad, To);
            cp = cols.data();
        }
        mm_nn(w->val.data(), cp, y.data() + bi * Co * To, (int)Co, (int)To, (int)(Ci * k), false);
        if (b)
            for (int64_t c = 0; c < Co; c++) {
                T bv = b->val.v[c];
                T* row = y.data() + (bi * Co + c) * To;
                for (int64_t t = 0; t < To; t++) row[t] += bv;
            }
    }
    return tp.make(std::move(y), {x, w, b},
                   [x, w, b, B, Ci, Tlen, Co, k, stride, pad, To, direct](Node<T>& n) {
        auto& cols = detail::scratch<T>(0, direct ? 0 : (size_t)(Ci * k) * To);
        auto& wT = detail::scratch<T>(1, x->needs_grad ? (size_t)(Ci * k) * Co : 0);
        if (x->needs_grad) detail::transpose(w->val.data(), wT.data(), Co, Ci * k);
        auto& dcols = detail::scratch<T>(2, direct ? 0 : (size_t)(Ci * k) * To);
        for (int64_t bi = 0; bi < B; bi++) {
            const T* gy = n.grad.data() + bi * Co * To;
            if (w->needs_grad) {
                const T* cp = x->val.data() + bi * Ci * Tlen;
                if (!direct) {
                    detail::im2col(cp, cols.data(), Ci, Tlen, k, stride, pad, To);
                    cp = cols.data();
                }
                // dW[Co, Ci*k] += gy[Co,To] @ cols[Ci*k,To]^T
                mm_nt(gy, cp, w->ensure_grad().data(), (int)Co, (int)(Ci * k), (int)To, true);
            }
            if (x->needs_grad) {
                if (direct) {
                    mm_nn(wT.data(), gy, x->ensure_grad().data() + bi * Ci * Tlen,
                          (int)Ci, (int)To, (int)Co, true);
                } else {
                    mm_nn(wT.data(), gy, dcols.data(), (int)(Ci * k), (int)To, (int)Co, false);
                    detail::col2im_acc(dcols.data(), x->ensure_grad().data() + bi * Ci * Tlen,
                                       Ci, Tlen, k, stride, pad, To);
                }
            }
            if (b && b->needs_grad) {
                auto& g = b->ensure_grad();
                for (int64_t c = 0; c < Co; c++) {
                    double s = 0;
                    for (int64_t t = 0; t < To; t++) s += (double)gy[c * To + t];
                    g.v[c] += (T)s;
                }
            }
        }
    });
}

template <typename T>
Node<T>* upsample_nearest(Tape<T>& tp, Node<T>* x, int64_t s) {
    int64_t B = x->val.shape[0], C = x->val.shape[1], Tlen = x->val.shape[2];
    Ten<T> y({B, C, Tlen * s});
    for (int64_t r = 0; r < B * C; r++)
        for (int64_t t = 0; t < Tlen; t++) {
            T v = x->val.v[r * Tlen + t];
            for (int64_t j = 0; j < s; j++) y.v[r * Tlen * s + t * s + j] = v;
        }
    return tp.make(std::move(y), {x}, [x, B, C, Tlen, s](Node<T>& n) {
        auto& g = x->ensure_grad();
        for (int64_t r = 0; r < B * C; r++)
            for (int64_t t = 0; t < Tlen; t++) {
                double acc = 0;
                for (int64_t j = 0; j < s; j++) acc += (double)n.grad.v[r * Tlen * s + t * s + j];
                g.v[r * Tlen + t] += (T)acc;
            }
    });
}

// ======== normalization / conditioning ========

// x[B,C,T], gamma[C], beta[C]; groups divide C
template <typename T>
Node<T>* group_norm(Tape<T>& tp, Node<T>* x, Node<T>* gamma, Node<T>* beta, int64_t groups, double eps = 1e-5) {
    int64_t B = x->val.shape[0], C = x->val.shape[1], Tlen = x->val.shape[2];
    check(C % groups == 0, ErrKind::validation, "group_norm: groups must divide channels");
    int64_t cg = C / groups, N = cg * Tlen;
    Ten<T> y({B, C, Tlen});
    auto mu = std::make_shared<std::vector<double>>(B * groups);
    auto istd = std::make_shared<std::vector<double>>(B * groups);
    for (int64_t b = 0; b < B; b++)
        for (int64_t g = 0; g < groups; g++) {
            const T* xs = x->val.data() + (b * C + g * cg) * Tlen;
            double m = 0;
            for (int64_t i = 0; i < N; i++) m += (double)xs[i];
            m /= N;
            double var = 0;
            for (int64_t i = 0; i < N; i++) { double d = (double)xs[i] - m; var += d * d; }
            var /= N;
            double is = 1.0 / std::sqrt(var + eps);
            (*mu)[b * groups + g] = m;
            (*istd)[b * groups + g] = is;
            T* ys = y.data() + (b * C + g * cg) * Tlen;
            for (int64_t c = 0; c < cg; c++) {
                double ga = (double)gamma->val.v[g * cg + c], be = (double)beta->val.v[g * cg + c];
                T sc = (T)(is * ga), sh = (T)(be - m * is * ga);
                const T* xr = xs + c * Tlen;
                T* yr = ys + c * Tlen;
                for (int64_t t = 0; t < Tlen; t++) yr[t] = xr[t] * sc + sh;
            }
        }
    return tp.make(std::move(y), {x, gamma, beta},
                   [x, gamma, beta, B, C, Tlen, groups, cg, N, mu, istd](Node<T>& n) {
        for (int64_t b = 0; b < B; b++)
            for (int64_t g = 0; g < groups; g++) {
                const T* xs = x->val.data() + (b * C + g * cg) * Tlen;
                const T* gy = n.grad.data() + (b * C + g * cg) * Tlen;
                double m = (*mu)[b * groups + g], is = (*istd)[b * groups + g];
                // one pass of per-channel sums gives dgamma/dbeta and the group means
                double hm = 0, hxm = 0;
                for (int64_t c = 0; c < cg; c++) {
                    const T* xr = xs + c * Tlen;
                    const T* gr = gy + c * Tlen;
                    double sg = 0, sgx = 0;
                    for (int64_t t = 0; t < Tlen; t++) {
                        sg += (double)gr[t];
                        sgx += (double)gr[t] * (double)xr[t];
                    }
                    double dg = is * (sgx - m * sg);
                    if (gamma->needs_grad) gamma->ensure_grad().v[g * cg + c] += (T)dg;
                    if (beta->needs_grad) beta->ensure_grad().v[g * cg + c] += (T)sg;
                    double ga = (double)gamma->val.v[g * cg + c];
                    hm += ga * sg;
                    hxm += ga * dg;
                }
                if (x->needs_grad) {
                    // dL/dx = is * (h - mean(h) - xhat * mean(h*xhat)), h = gy*gamma
                    hm /= N;
                    hxm /= N;
                    auto& gx = x->ensure_grad();
                    T* gxs = gx.data() + (b * C + g * cg) * Tlen;
                    for (int64_t c = 0; c < cg; c++) {
                        double ga = (double)gamma->val.v[g * cg + c];
                        T P = (T)(is * ga), Q = (T)(-is * is * hxm);
                        T R = (T)(is * (m * is * hxm - hm));
                        const T* xr = xs + c * Tlen;
                        const T* gr = gy + c * Tlen;
                        T* gxr = gxs + c * Tlen;
                        for (int64_t t = 0; t < Tlen; t++) gxr[t] += gr[t] * P + xr[t] * Q + R;
                    }
                }
            }
    });
}

// y = x * (1 + sc) + sh, sc/sh [B,C] broadcast over T
template <typename T>
Node<T>* scale_shift(Tape<T>& tp, Node<T>* x, Node<T>* sc, Node<T>* sh) {
    int64_t B = x->val.shape[0], C = x->val.shape[1], Tlen = x->val.shape[2];
    check(sc->val.shape[0] == B && sc->val.shape[1] == C, ErrKind::validation, "scale_shift: sc shape");
    check(sh->val.same_shape(sc->val), ErrKind::validation, "scale_shift: sh shape");
    Ten<T> y({B, C, Tlen});
    for (int64_t r = 0; r < B * C; r++) {
        T a = (T)1 + sc->val.v[r], bsh = sh->val.v[r];
        for (int64_t t = 0; t < Tlen; t++) y.v[r * Tlen + t] = x->val.v[r * Tlen + t] * a + bsh;
    }
    return tp.make(std::move(y), {x, sc, sh}, [x, sc, sh, B, C, Tlen](Node<T>& n) {
        for (int64_t r = 0; r < B * C; r++) {
            const T* gy = n.grad.data() + r * Tlen;
            if (x->needs_grad) {
                T a = (T)1 + sc->val.v[r];
                T* gx = x->ensure_grad().data() + r * Tlen;
                for (int64_t t = 0; t < Tlen; t++) gx[t] += gy[t] * a;
            }
            if (sc->needs_grad) {
                double acc = 0;
                const T* xv = x->val.data() + r * Tlen;
                for (int64_t t = 0; t < Tlen; t++) acc += (double)gy[t] * (double)xv[t];
                sc->ensure_grad().v[r] += (T)acc;
            }
            if (sh->needs_grad) {
                double acc = 0;
                for (int64_t t = 0; t < Tlen; t++) acc += (double)gy[t];
                sh->ensure_grad().v[r] += (T)acc;
            }
        }
    });
}

// y[B,R,Fr] = fb[R,F] @ x[B,F,Fr] with fb a fixed (non-trainable) matrix
template <typename T>
Node<T>* matmul_const_left(Tape<T>& tp, const std::shared_ptr<Ten<T>>& fb, Node<T>* x) {
    int64_t B = x->val.shape[0], F = x->val.shape[1], Fr = x->val.shape[2];
    int64_t R = fb->shape[0];
    check(fb->shape[1] == F, ErrKind::validation, "matmul_const_left: dim mismatch");
    Ten<T> y({B, R, Fr});
    for (int64_t b = 0; b < B; b++)
        mm_nn(fb->data(), x->val.data() + b * F * Fr, y.data() + b * R * Fr,
              (int)R, (int)Fr, (int)F, false);
    return tp.make(std::move(y), {x}, [x, fb, B, F, Fr, R](Node<T>& n) {
        auto& g = x->ensure_grad();
        std::vector<T> fbT((size_t)F * R);
        detail::transpose(fb->data(), fbT.data(), R, F);
        for (int64_t b = 0; b < B; b++)
            mm_nn(fbT.data(), n.grad.data() + b * R * Fr, g.data() + b * F * Fr,
                  (int)F, (int)Fr, (int)R, true);
    });
}

// ======== STFT magnitude ========

// x[B,L] -> |STFT| [B, nfft/2+1, frames], hann window, no centering.
// backward is the adjoint: per frame dL/dy = Re(n * ifft(G)) with
// G_k = g_k X_k/|X_k| on the retained bins and 0 above nfft/2 (the loss never
// reads the conjugate bins), then scaled by the window.
template <typename T>
Node<T>* stft_mag(Tape<T>& tp, Node<T>* x, int64_t nfft, int64_t hop) {
    int64_t B = x->val.shape[0], L = x->val.shape[1];
    check(is_pow2((int)nfft), ErrKind::validation, "stft: nfft must be a power of two");
    check(L >= nfft, ErrKind::validation, "stft: input shorter than window");
    int64_t F = nfft / 2 + 1, frames = (L - nfft) / hop + 1;
    auto win = std::make_shared<std::vector<double>>(nfft);
    for (int64_t i = 0; i < nfft; i++)
        (*win)[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / nfft);  // periodic hann
    Ten<T> y({B, F, frames});
    std::vector<std::complex<T>> buf(nfft);
    for (int64_t b = 0; b < B; b++)
        for (int64_t f = 0; f < frames; f++) {
            const T* xs = x->val.data() + b * L + f * hop;
            for (int64_t i = 0; i < nfft; i++) buf[i] = {(T)((double)xs[i] * (*win)[i]), (T)0};
            fft(buf.data(), (int)nfft, false);
            for (int64_t k = 0; k < F; k++)
                y.v[(b * F + k) * frames + f] = (T)std::abs(std::complex<double>(buf[k].real(), buf[k].imag()));
        }
    return tp.make(std::move(y), {x}, [x, B, L, nfft, hop, F, frames, win](Node<T>& n) {
        auto& gx = x->ensure_grad();
        std::vector<std::complex<T>> buf(nfft), gbuf(nfft);
        for (int64_t b = 0; b < B; b++)
            for (int64_t f = 0; f < frames; f++) {
                const T* xs = x->val.data() + b * L + f * hop;
                for (int64_t i = 0; i < nfft; i++) buf[i] = {(T)((double)xs[i] * (*win)[i]), (T)0};
                fft(buf.data(), (int)nfft, false);
                // CG_k = gy_k * X_k / |X_k| for k <= nfft/2, 0 above
                for (int64_t k = 0; k < nfft; k++) gbuf[k] = {(T)0, (T)0};
                for (int64_t k = 0; k < F; k++) {
                    double re = buf[k].real(), im = buf[k].imag();
                    double mag = std::sqrt(re * re + im * im);
                    if (mag < 1e-30) continue;
                    double gg = (double)n.grad.v[(b * F + k) * frames + f] / mag;
                    gbuf[k] = {(T)(gg * re), (T)(gg * im)};
                }
                fft(gbuf.data(), (int)nfft, true);  // inverse includes 1/n; undo it below
                T* gxs = gx.data() + b * L + f * hop;
                for (int64_t i = 0; i < nfft; i++)
                    gxs[i] += (T)((double)gbuf[i].real() * (double)nfft * (*win)[i]);
            }
    });
}

}  // namespace ms
