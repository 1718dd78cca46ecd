#pragma once
#include <string>
#include <vector>

#include "audio/synth.h"
#include "core/rng.h"

namespace ms {

struct Chunk {
    SourceSet stems;  // windowed stems, canonical order
    AudioSeg mix;
};

// `count` random fixed-length windows over the dataset's tracks. with
// require_all_stems only windows where all four stems are audible qualify.
std::vector<Chunk> chunk_dataset(const std::string& dir, double chunk_seconds, int64_t count,
                                 Rng& rng, bool require_all_stems = false);

// sample rate of the first track (stem wavs or mixture.wav)
int dataset_sample_rate(const std::string& dir);

// per-band mean ++ std of the log-mel spectrogram
std::vector<float> logmel_embed(const float* x, int64_t n, int sample_rate, int nmels, int nfft,
                                int hop);

struct Embedder {
    virtual ~Embedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<float> embed(const float* x, int64_t n) const = 0;
};

struct LogMelEmbedder : Embedder {
    int sample_rate, nmels, nfft, hop;
    explicit LogMelEmbedder(int sample_rate_, int nmels_ = 40, int nfft_ = 512, int hop_ = 128)
        : sample_rate(sample_rate_), nmels(nmels_), nfft(nfft_), hop(hop_) {}
    int dim() const override { return 2 * nmels; }
    std::vector<float> embed(const float* x, int64_t n) const override {
        return logmel_embed(x, n, sample_rate, nmels, nfft, hop);
    }
};

}  // namespace ms
