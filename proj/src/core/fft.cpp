#include "core/fft.h"

#include <cmath>
#include <map>

#include "core/error.h"

namespace ms {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// twiddles cached per size; trig evaluated in double for both precisions
static const std::vector<std::complex<double>>& twiddles(int n) {
    static std::map<int, std::vector<std::complex<double>>> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<std::complex<double>> w(n / 2);
    for (int k = 0; k < n / 2; k++) {
        double a = -2.0 * M_PI * k / n;
        w[k] = {std::cos(a), std::sin(a)};
    }
    return cache.emplace(n, std::move(w)).first->second;
}

template <typename T>
static void fft_impl(std::complex<T>* a, int n, bool inverse) {
    check(is_pow2(n), ErrKind::validation, "fft size must be a power of two");
    // bit-reversal permutation
    for (int i = 1, j = 0; i < n; i++) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const auto& w = twiddles(n);
    for (int len = 2; len <= n; len <<= 1) {
        int step = n / len;
        for (int i = 0; i < n; i += len) {
            for (int k = 0; k < len / 2; k++) {
                std::complex<double> tw = w[(size_t)k * step];
                if (inverse) tw = std::conj(tw);
                std::complex<double> u((double)a[i + k].real(), (double)a[i + k].imag());
                std::complex<double> vv((double)a[i + k + len / 2].real(), (double)a[i + k + len / 2].imag());
                std::complex<double> t = vv * tw;
                a[i + k] = {(T)(u.real() + t.real()), (T)(u.imag() + t.imag())};
                a[i + k + len / 2] = {(T)(u.real() - t.real()), (T)(u.imag() - t.imag())};
            }
        }
    }
    if (inverse) {
        T inv = (T)(1.0 / n);
        for (int i = 0; i < n; i++) a[i] *= inv;
    }
}

void fft(std::complex<float>* a, int n, bool inverse) { fft_impl(a, n, inverse); }
void fft(std::complex<double>* a, int n, bool inverse) { fft_impl(a, n, inverse); }

}  // namespace ms
