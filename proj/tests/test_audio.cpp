#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>

#include "audio/mel.h"
#include "audio/synth.h"
#include "core/fft.h"
#include "core/rng.h"
#include "core/wav.h"
#include "util.h"

using namespace ms;
namespace fs = std::filesystem;

namespace {

constexpr double TAU = 6.283185307179586;

std::vector<float> sine(double hz, double amp, double secs, int sr) {
    std::vector<float> x((size_t)(secs * sr));
    for (size_t i = 0; i < x.size(); i++) x[i] = (float)(amp * std::sin(TAU * hz * i / sr));
    return x;
}

// independent double-precision logmel: naive O(n^2) DFT per frame plus a
// from-scratch filterbank, mirroring the documented conventions
std::vector<std::vector<double>> logmel_ref(const float* x, int64_t n, int sr,
                                            int nfft, int hop, int nmels, double eps) {
    auto hz2mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto mel2hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    int F = nfft / 2 + 1;
    int frames = (int)((n - nfft) / hop + 1);

    std::vector<double> pts(nmels + 2);
    double mmax = hz2mel(sr / 2.0);
    for (int i = 0; i < nmels + 2; i++) pts[i] = mel2hz(mmax * i / (nmels + 1));
    std::vector<std::vector<double>> fb(nmels, std::vector<double>(F, 0.0));
    for (int m = 0; m < nmels; m++) {
        double lo = pts[m], c = pts[m + 1], hi = pts[m + 2];
        for (int k = 0; k < F; k++) {
            double f = (double)k * sr / nfft;
            double w = std::min((f - lo) / std::max(c - lo, 1e-9), (hi - f) / std::max(hi - c, 1e-9));
            fb[m][k] = std::max(0.0, w);
        }
    }

    std::vector<double> win(nfft);
    for (int i = 0; i < nfft; i++) win[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / nfft);

    std::vector<std::vector<double>> out(nmels, std::vector<double>(frames));
    std::vector<double> mag(F);
    for (int f = 0; f < frames; f++) {
        for (int k = 0; k < F; k++) {
            double re = 0, im = 0;
            for (int t = 0; t < nfft; t++) {
                double v = (double)x[f * hop + t] * win[t];
                double ph = -TAU * k * t / nfft;
                re += v * std::cos(ph);
                im += v * std::sin(ph);
            }
            mag[k] = std::hypot(re, im);
        }
        for (int m = 0; m < nmels; m++) {
            double s = 0;
            for (int k = 0; k < F; k++) s += fb[m][k] * mag[k];
            out[m][f] = std::log(s + eps);
        }
    }
    return out;
}

bool audible(const std::vector<float>& v) {
    for (float x : v)
        if (std::abs(x) > 1e-6f) return true;
    return false;
}

}  // namespace

TEST_CASE("instrument_index: canonical order") {
    CHECK(instrument_index("bass") == 0);
    CHECK(instrument_index("drums") == 1);
    CHECK(instrument_index("guitar") == 2);
    CHECK(instrument_index("piano") == 3);
    CHECK(instrument_index("vocals") == -1);
    CHECK(instrument_index("") == -1);
    CHECK(kNumSources == 4);
}

TEST_CASE("synth: deterministic and bounded") {
    TrackSpec spec;
    spec.seed = 11;
    spec.key = 4;
    spec.duration_s = 1.5;
    SourceSet a = synth_track(spec, 8000);
    SourceSet b = synth_track(spec, 8000);
    CHECK(a.sample_rate == 8000);
    CHECK(a.length == 12000);
    for (int k = 0; k < 4; k++) {
        REQUIRE(a.stems[k].samples.size() == 12000);
        CHECK(std::memcmp(a.stems[k].samples.data(), b.stems[k].samples.data(), 12000 * 4) == 0);
        CHECK(audible(a.stems[k].samples));
        for (float x : a.stems[k].samples) CHECK(std::abs(x) <= 1.0f);
    }
}

TEST_CASE("synth: silence flags and probability") {
    TrackSpec spec;
    spec.seed = 3;
    spec.duration_s = 1.0;
    SourceSet s = synth_track_flags(spec, 8000, {false, true, false, true});
    CHECK(audible(s.stems[0].samples));
    CHECK(!audible(s.stems[1].samples));
    CHECK(audible(s.stems[2].samples));
    CHECK(!audible(s.stems[3].samples));

    spec.silence_prob = 1.0;
    SourceSet all = synth_track(spec, 8000);
    for (int k = 0; k < 4; k++) CHECK(!audible(all.stems[k].samples));
}

TEST_CASE("synth: validation") {
    TrackSpec s;
    s.key = 12;
    CHECK_THROWS_AS(synth_track(s, 8000), Error);
    TrackSpec t;
    t.tempo_bpm = 0;
    CHECK_THROWS_AS(synth_track(t, 8000), Error);
    TrackSpec u;
    u.chord_progression.clear();
    CHECK_THROWS_AS(synth_track(u, 8000), Error);
}

TEST_CASE("synth: bass fundamental is C2 for key 0") {
    TrackSpec spec;
    spec.seed = 21;
    spec.key = 0;
    spec.tempo_bpm = 120.0;
    spec.duration_s = 2.0;  // one bar: the root stays on the tonic
    SourceSet s = synth_track(spec, 8000);

    const int N = 65536;
    std::vector<std::complex<double>> buf(N, 0.0);
    for (size_t i = 0; i < s.stems[0].samples.size(); i++) buf[i] = s.stems[0].samples[i];
    fft(buf.data(), N, false);
    int k_lo = (int)(20.0 * N / 8000), k_hi = (int)(200.0 * N / 8000);
    int best = k_lo;
    for (int k = k_lo; k <= k_hi; k++)
        if (std::abs(buf[k]) > std::abs(buf[best])) best = k;
    double hz = (double)best * 8000 / N;
    CHECK(hz == doctest::Approx(65.41).epsilon(0).scale(0).epsilon(1.0 / 65.41));  // within 1 Hz
    CHECK(std::abs(hz - 65.41) < 1.0);
}

TEST_CASE("mix: canonical per-sample sum with clip flag") {
    SourceSet s;
    s.sample_rate = 8000;
    s.length = 4;
    for (int k = 0; k < 4; k++) {
        s.stems[k].sample_rate = 8000;
        s.stems[k].samples = {0.05f * (k + 1), -0.05f, 0.05f, 0.1f};
    }
    bool clipped = true;
    AudioSeg m = mix(s, &clipped);
    CHECK(m.sample_rate == 8000);
    REQUIRE(m.samples.size() == 4);
    CHECK(m.samples[0] == doctest::Approx(0.5f).epsilon(1e-6));
    CHECK(m.samples[1] == doctest::Approx(-0.2f).epsilon(1e-6));
    CHECK(m.samples[2] == doctest::Approx(0.2f).epsilon(1e-6));
    CHECK(!clipped);

    s.stems[0].samples[3] = 0.9f;  // sum 1.8 at index 3
    bool c2 = false;
    mix(s, &c2);
    CHECK(c2);
}

TEST_CASE("dataset: layout and bit-identical manifest regeneration") {
    tu::TmpDir td("ds");
    TrackSpec tmpl;
    tmpl.duration_s = 1.0;
    tmpl.silence_prob = 0.3;
    std::string manifest = make_dataset(tmpl, 3, 8000, 77, td / "a");

    auto dirs = list_track_dirs(td / "a");
    REQUIRE(dirs.size() == 3);
    for (auto& d : dirs)
        for (auto* inst : kInstruments) CHECK(fs::exists(fs::path(d) / (std::string(inst) + ".wav")));
    CHECK(tu::read_file(td / "a/manifest.json") == manifest);

    make_dataset_from_manifest(td / "a/manifest.json", td / "b");
    auto dirs2 = list_track_dirs(td / "b");
    REQUIRE(dirs2.size() == 3);
    for (size_t i = 0; i < 3; i++)
        for (auto* inst : kInstruments) {
            std::string w = std::string(inst) + ".wav";
            CHECK(tu::fnv1a_file((fs::path(dirs[i]) / w).string()) ==
                  tu::fnv1a_file((fs::path(dirs2[i]) / w).string()));
        }

    // distinct master seeds give distinct audio
    make_dataset(tmpl, 1, 8000, 78, td / "c");
    CHECK(tu::fnv1a_file(td / "a/track_0000/bass.wav") != tu::fnv1a_file(td / "c/track_0000/bass.wav"));
}

TEST_CASE("load_stems: missing as silence, truncation, errors") {
    tu::TmpDir td("ls");
    fs::create_directories(td / "t");
    auto a = sine(220, 0.4, 0.05, 8000);  // 400 samples
    auto b = sine(330, 0.4, 0.0525, 8000);  // 420 samples
    wav_write(td / "t/bass.wav", a.data(), 400, 8000);
    wav_write(td / "t/piano.wav", b.data(), 420, 8000);

    SourceSet s = load_stems(td / "t");
    CHECK(s.length == 400);  // truncated to the shortest present stem
    CHECK(s.sample_rate == 8000);
    for (int k = 0; k < 4; k++) REQUIRE((int64_t)s.stems[k].samples.size() == 400);
    CHECK(audible(s.stems[0].samples));
    CHECK(!audible(s.stems[1].samples));  // missing -> silence
    CHECK(!audible(s.stems[2].samples));
    CHECK(audible(s.stems[3].samples));
    CHECK(std::memcmp(s.stems[0].samples.data(), a.data(), 400 * 4) == 0);

    fs::create_directories(td / "empty");
    CHECK_THROWS_AS(load_stems(td / "empty"), Error);
    try {
        load_stems(td / "empty");
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::io);
    }

    fs::create_directories(td / "mixed");
    wav_write(td / "mixed/bass.wav", a.data(), 400, 8000);
    wav_write(td / "mixed/drums.wav", a.data(), 400, 16000);
    try {
        load_stems(td / "mixed");
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind == ErrKind::data);
    }
}

TEST_CASE("mel: float pipeline matches the double reference on broadband input") {
    Rng r(55);
    std::vector<float> x(4000);
    for (auto& v : x) v = (float)r.uniform(-0.3, 0.3);

    TenF got = logmel_f(x.data(), (int64_t)x.size(), 8000, {512, 128, 40});
    auto want = logmel_ref(x.data(), (int64_t)x.size(), 8000, 512, 128, 40, kEpsMel);
    REQUIRE(got.shape[0] == 40);
    REQUIRE(got.shape[1] == (int64_t)want[0].size());
    double worst = 0;
    for (int m = 0; m < 40; m++)
        for (int64_t f = 0; f < got.shape[1]; f++)
            worst = std::max(worst, std::abs((double)got.at(m, f) - want[m][f]));
    CHECK(worst < 1e-4);
}

TEST_CASE("mel: filterbank triangles match the reference formula") {
    TenF fb = mel_filterbank(8000, 512, 40);
    REQUIRE(fb.shape == std::vector<int64_t>{40, 257});
    // reproduce in double
    auto hz2mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto mel2hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    std::vector<double> pts(42);
    for (int i = 0; i < 42; i++) pts[i] = mel2hz(hz2mel(4000.0) * i / 41);
    double colsum = 0;
    for (int m = 0; m < 40; m++) {
        double rowmax = 0;
        for (int k = 0; k < 257; k++) {
            double f = k * 8000.0 / 512;
            double w = std::max(0.0, std::min((f - pts[m]) / (pts[m + 1] - pts[m]),
                                              (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1])));
            CHECK(std::abs((double)fb.at(m, k) - w) < 1e-6);
            rowmax = std::max(rowmax, w);
            colsum += w;
        }
        CHECK(rowmax > 0.0);  // every band catches at least one bin at this resolution
    }
    CHECK(colsum > 0);
    CHECK_THROWS_AS(mel_filterbank(8000, 500, 40), Error);  // nfft must be pow2
}

TEST_CASE("mel: sine peaks land in the expected bands") {
    auto a440 = sine(440, 0.5, 1.0, 8000);
    auto a880 = sine(880, 0.5, 1.0, 8000);
    TenF l440 = logmel_f(a440.data(), 8000, 8000, {512, 128, 40});
    TenF l880 = logmel_f(a880.data(), 8000, 8000, {512, 128, 40});
    // average over frames, take argmax band
    auto argmax_band = [](const TenF& l) {
        int best = 0;
        double bv = -1e30;
        for (int m = 0; m < (int)l.shape[0]; m++) {
            double s = 0;
            for (int64_t f = 0; f < l.shape[1]; f++) s += l.at(m, f);
            if (s > bv) { bv = s; best = m; }
        }
        return best;
    };
    CHECK(argmax_band(l440) == 9);
    CHECK(argmax_band(l880) == 17);

    // raw stft peak bin: 440/8000*512 = 28.16
    TenF mag = stft_mag_f(a440.data(), 8000, 512, 128);
    CHECK(mag.shape[0] == 257);
    CHECK(mag.shape[1] == (8000 - 512) / 128 + 1);
    int kbest = 0;
    for (int k = 0; k < 257; k++)
        if (mag.at(k, 0) > mag.at(kbest, 0)) kbest = k;
    CHECK(kbest == 28);
}

TEST_CASE("mel_distance: identity, symmetry, discrimination") {
    auto a = sine(440, 0.5, 0.5, 8000);
    std::vector<float> z(a.size(), 0.f);
    std::vector<MelConfig> cfgs = {{512, 128, 40}, {128, 32, 16}};
    CHECK(mel_distance(a.data(), a.data(), (int64_t)a.size(), 8000, cfgs) == 0.0);
    double dz = mel_distance(a.data(), z.data(), (int64_t)a.size(), 8000, cfgs);
    double zd = mel_distance(z.data(), a.data(), (int64_t)a.size(), 8000, cfgs);
    CHECK(dz > 0.1);
    CHECK(dz == doctest::Approx(zd).epsilon(1e-12));
    auto b = sine(523.25, 0.5, 0.5, 8000);
    CHECK(mel_distance(a.data(), b.data(), (int64_t)a.size(), 8000, cfgs) > 0.01);
}

TEST_CASE("chroma: pitch class energy") {
    auto a440 = sine(440, 0.5, 1.0, 8000);
    auto h = chroma_histogram(a440.data(), (int64_t)a440.size(), 8000);
    REQUIRE(h.size() == 12);
    int best = 0;
    double n2 = 0;
    for (int i = 0; i < 12; i++) {
        if (h[i] > h[best]) best = i;
        n2 += h[i] * h[i];
    }
    CHECK(best == 9);  // A
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-9));

    // amplitude invariance after L2 normalization
    auto quiet = a440;
    for (auto& v : quiet) v *= 0.25f;
    auto hq = chroma_histogram(quiet.data(), (int64_t)quiet.size(), 8000);
    for (int i = 0; i < 12; i++) CHECK(std::abs(h[i] - hq[i]) < 1e-6);

    // silence (and too-short input) stay all-zero
    std::vector<float> z(8000, 0.f);
    auto hz = chroma_histogram(z.data(), 8000, 8000);
    for (double v : hz) CHECK(v == 0.0);
    auto hshort = chroma_histogram(a440.data(), 100, 8000);
    for (double v : hshort) CHECK(v == 0.0);

    // C major vs F# major triads share no pitch classes
    auto tri = [](std::initializer_list<double> hzs) {
        std::vector<float> x(16000, 0.f);
        for (double f : hzs)
            for (size_t i = 0; i < x.size(); i++)
                x[i] += (float)(0.2 * std::sin(TAU * f * i / 8000));
        return x;
    };
    auto cmaj = tri({261.63, 329.63, 392.00});
    auto fsh = tri({369.99, 466.16, 554.37});
    auto hc = chroma_histogram(cmaj.data(), 16000, 8000);
    auto hf = chroma_histogram(fsh.data(), 16000, 8000);
    double dot = 0, dcc = 0;
    for (int i = 0; i < 12; i++) {
        dot += hc[i] * hf[i];
        dcc += hc[i] * hc[i];
    }
    CHECK(dcc == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(dot < 0.5);
}
