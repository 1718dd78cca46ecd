#pragma once
#include <complex>
#include <cstdint>
#include <vector>

namespace ms {

// iterative radix-2 Cooley-Tukey, n must be a power of two.
// forward: X_k = sum_t x_t e^{-2pi i kt/n}; inverse applies 1/n.
void fft(std::complex<float>* a, int n, bool inverse);
void fft(std::complex<double>* a, int n, bool inverse);

bool is_pow2(int n);

}  // namespace ms
