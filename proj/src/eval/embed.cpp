#include "eval/embed.h"

#include <cmath>
#include <filesystem>

#include "audio/mel.h"
#include "core/error.h"
#include "core/wav.h"

namespace ms {

namespace {
bool audible(const float* x, int64_t n) {
    for (int64_t i = 0; i < n; i++)
        if (std::fabs(x[i]) > 1e-6f) return true;
    return false;
}

// a track in either layout: stem wavs (dataset / generated items) or a lone
// mixture.wav (mixture-model items). windowing commutes with the per-sample
// stem sum, so slicing the full-track mix is exact.
struct TrackAudio {
    SourceSet stems;
    std::vector<float> mixv;
};

TrackAudio load_track(const std::string& d) {
    namespace fs = std::filesystem;
    TrackAudio t;
    bool any_stem = false;
    for (int k = 0; k < kNumSources; k++)
        any_stem = any_stem || fs::exists(d + "/" + kInstruments[(size_t)k] + ".wav");
    std::string mp = d + "/mixture.wav";
    if (any_stem) {
        t.stems = load_stems(d);
        t.mixv = mix(t.stems).samples;
    } else if (fs::exists(mp)) {
        Wav w = wav_read(mp);
        t.stems.sample_rate = w.sample_rate;
        t.stems.length = (int64_t)w.samples.size();
        for (auto& s : t.stems.stems) {
            s.sample_rate = w.sample_rate;
            s.samples.assign(w.samples.size(), 0.f);
        }
        t.mixv = std::move(w.samples);
    } else {
        fail_io("chunk_dataset: no stems or mixture.wav in " + d);
    }
    return t;
}
}  // namespace

int dataset_sample_rate(const std::string& dir) {
    auto dirs = list_track_dirs(dir);
    check(!dirs.empty(), ErrKind::data, "no tracks under " + dir);
    return load_track(dirs[0]).stems.sample_rate;
}

std::vector<Chunk> chunk_dataset(const std::string& dir, double chunk_seconds, int64_t count,
                                 Rng& rng, bool require_all_stems) {
    check(count >= 0, ErrKind::validation, "chunk_dataset: negative count");
    if (count == 0) return {};

    auto dirs = list_track_dirs(dir);
    check(!dirs.empty(), ErrKind::data, "chunk_dataset: no tracks under " + dir);
    std::vector<TrackAudio> tracks;
    for (auto& d : dirs) tracks.push_back(load_track(d));
    int sr = tracks[0].stems.sample_rate;
    for (auto& t : tracks)
        check(t.stems.sample_rate == sr, ErrKind::data, "chunk_dataset: mixed sample rates");
    int64_t clen = (int64_t)std::llround(chunk_seconds * sr);
    check(clen >= 1, ErrKind::validation, "chunk_dataset: chunk too short");

    std::vector<size_t> eligible;
    for (size_t i = 0; i < tracks.size(); i++)
        if (tracks[i].stems.length >= clen) eligible.push_back(i);
    check(!eligible.empty(), ErrKind::data,
          "chunk_dataset: no track is at least " + std::to_string(clen) + " samples long");

    std::vector<Chunk> out;
    int64_t attempts = 0, max_attempts = count * 200;
    while ((int64_t)out.size() < count && attempts < max_attempts) {
        attempts++;
        const TrackAudio& ta = tracks[eligible[(size_t)rng.randint((int64_t)eligible.size())]];
        const SourceSet& t = ta.stems;
        int64_t off = rng.randint(t.length - clen + 1);
        if (require_all_stems) {
            bool ok = true;
            for (int k = 0; k < kNumSources && ok; k++)
                ok = audible(t.stems[(size_t)k].samples.data() + off, clen);
            if (!ok) continue;
        }
        Chunk c;
        c.stems.sample_rate = sr;
        c.stems.length = clen;
        for (int k = 0; k < kNumSources; k++) {
            auto& s = t.stems[(size_t)k].samples;
            c.stems.stems[(size_t)k].sample_rate = sr;
            c.stems.stems[(size_t)k].samples.assign(s.begin() + off, s.begin() + off + clen);
        }
        c.mix.sample_rate = sr;
        c.mix.samples.assign(ta.mixv.begin() + off, ta.mixv.begin() + off + clen);
        out.push_back(std::move(c));
    }
    check((int64_t)out.size() == count, ErrKind::data,
          "chunk_dataset: needed " + std::to_string(count) + " chunks, found only " +
              std::to_string(out.size()) + " after " + std::to_string(attempts) + " attempts");
    return out;
}

std::vector<float> logmel_embed(const float* x, int64_t n, int sample_rate, int nmels, int nfft,
                                int hop) {
    check(n >= nfft, ErrKind::validation,
          "logmel_embed: audio length " + std::to_string(n) + " < fft size " +
              std::to_string(nfft));
    TenF lm = logmel_f(x, n, sample_rate, {nfft, hop, nmels});
    int64_t F = lm.shape[1];
    std::vector<float> e((size_t)(2 * nmels));
    for (int m = 0; m < nmels; m++) {
        const float* row = lm.data() + (int64_t)m * F;
        double s = 0;
        for (int64_t f = 0; f < F; f++) s += row[f];
        double mean = s / F;
        double v = 0;
        for (int64_t f = 0; f < F; f++) {
            double d = row[f] - mean;
            v += d * d;
        }
        e[(size_t)m] = (float)mean;
        e[(size_t)(nmels + m)] = (float)std::sqrt(v / F);
    }
    return e;
}

}  // namespace ms
