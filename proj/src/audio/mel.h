#pragma once
#include <vector>

#include "core/tensor.h"

namespace ms {

inline constexpr double kEpsMel = 1e-6;  // log(x + eps) everywhere mel spectra are logged

struct MelConfig {
    int nfft, hop, nmels;
};

// HTK mel scale triangular filterbank, [nmels, nfft/2+1]
TenF mel_filterbank(int sample_rate, int nfft, int nmels);

// |STFT| with periodic hann, no centering: [nfft/2+1, frames]
TenF stft_mag_f(const float* x, int64_t n, int nfft, int hop);

// log(fb @ |STFT| + eps): [nmels, frames]
TenF logmel_f(const float* x, int64_t n, int sample_rate, const MelConfig& cfg, double eps = kEpsMel);

// sum over configs of mean |logmel(a) - logmel(b)|
double mel_distance(const float* a, const float* b, int64_t n, int sample_rate,
                    const std::vector<MelConfig>& cfgs, double eps = kEpsMel);

// 12-bin pitch-class energy histogram (L2-normalized); returns all-zero if silent
std::vector<double> chroma_histogram(const float* x, int64_t n, int sample_rate);

}  // namespace ms
