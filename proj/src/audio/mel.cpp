#include "audio/mel.h"

#include <cmath>
#include <complex>

#include "core/error.h"
#include "core/fft.h"

namespace ms {

namespace {
double hz2mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel2hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }
}  // namespace

TenF mel_filterbank(int sr, int nfft, int nmels) {
    check(is_pow2(nfft), ErrKind::validation, "mel: nfft must be a power of two");
    check(nmels >= 1, ErrKind::validation, "mel: nmels must be positive");
    int F = nfft / 2 + 1;
    std::vector<double> pts(nmels + 2);
    double mmax = hz2mel(sr / 2.0);
    for (int i = 0; i < nmels + 2; i++) pts[(size_t)i] = mel2hz(mmax * i / (nmels + 1));
    TenF fb({nmels, F});
    for (int m = 1; m <= nmels; m++) {
        double lo = pts[(size_t)m - 1], c = pts[(size_t)m], hi = pts[(size_t)m + 1];
        for (int k = 0; k < F; k++) {
            double f = (double)k * sr / nfft;
            double up = (f - lo) / std::max(c - lo, 1e-9);
            double dn = (hi - f) / std::max(hi - c, 1e-9);
            fb.at(m - 1, k) = (float)std::max(0.0, std::min(up, dn));
        }
    }
    return fb;
}

TenF stft_mag_f(const float* x, int64_t n, int nfft, int hop) {
    check(n >= nfft, ErrKind::validation, "stft: input shorter than window");
    int F = nfft / 2 + 1;
    int64_t frames = (n - nfft) / hop + 1;
    std::vector<double> win(nfft);
    for (int i = 0; i < nfft; i++) win[(size_t)i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / nfft);
    TenF out({F, frames});
    std::vector<std::complex<float>> buf(nfft);
    for (int64_t f = 0; f < frames; f++) {
        for (int i = 0; i < nfft; i++)
            buf[(size_t)i] = {(float)(x[f * hop + i] * win[(size_t)i]), 0.f};
        fft(buf.data(), nfft, false);
        for (int k = 0; k < F; k++)
            out.at(k, f) = (float)std::hypot((double)buf[(size_t)k].real(), (double)buf[(size_t)k].imag());
    }
    return out;
}

TenF logmel_f(const float* x, int64_t n, int sr, const MelConfig& cfg, double eps) {
    TenF mag = stft_mag_f(x, n, cfg.nfft, cfg.hop);
    TenF fb = mel_filterbank(sr, cfg.nfft, cfg.nmels);
    int64_t F = mag.shape[0], frames = mag.shape[1];
    TenF out({cfg.nmels, frames});
    for (int m = 0; m < cfg.nmels; m++)
        for (int64_t t = 0; t < frames; t++) {
            double s = 0;
            for (int64_t k = 0; k < F; k++) s += (double)fb.at(m, k) * (double)mag.at(k, t);
            out.at(m, t) = (float)std::log(s + eps);
        }
    return out;
}

double mel_distance(const float* a, const float* b, int64_t n, int sr,
                    const std::vector<MelConfig>& cfgs, double eps) {
    double total = 0;
    for (auto& cfg : cfgs) {
        TenF la = logmel_f(a, n, sr, cfg, eps);
        TenF lb = logmel_f(b, n, sr, cfg, eps);
        double s = 0;
        for (int64_t i = 0; i < la.numel(); i++) s += std::abs((double)la.v[i] - (double)lb.v[i]);
        total += s / la.numel();
    }
    return total;
}

std::vector<double> chroma_histogram(const float* x, int64_t n, int sr) {
    const int nfft = 2048, hop = 512;
    std::vector<double> hist(12, 0.0);
    if (n < nfft) return hist;
    TenF mag = stft_mag_f(x, n, nfft, hop);
    int64_t F = mag.shape[0], frames = mag.shape[1];
    for (int64_t k = 1; k < F; k++) {
        double f = (double)k * sr / nfft;
        double midi = 12.0 * std::log2(f / 440.0) + 69.0;
        if (midi < 31.0) continue;  // below ~B0 the fft bins blur semitones
        int pc = ((int)std::lround(midi) % 12 + 12) % 12;
        double e = 0;
        for (int64_t t = 0; t < frames; t++) e += (double)mag.at(k, t) * (double)mag.at(k, t);
        hist[(size_t)pc] += e;
    }
    double norm = 0;
    for (double h : hist) norm += h * h;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (double& h : hist) h /= norm;
    return hist;
}

}  // namespace ms
