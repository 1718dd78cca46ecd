#include "audio/synth.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/error.h"
#include "core/wav.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ms {

int instrument_index(const std::string& name) {
    for (int i = 0; i < kNumSources; i++)
        if (name == kInstruments[i]) return i;
    return -1;
}

namespace {

constexpr int SCALE[7] = {0, 2, 4, 5, 7, 9, 11};

int degree_to_semis(int deg) {
    int o = deg / 7, d = deg % 7;
    if (d < 0) { d += 7; o -= 1; }
    return 12 * o + SCALE[d];
}

double midi_hz(double m) { return 440.0 * std::pow(2.0, (m - 69.0) / 12.0); }

constexpr double TAU = 6.283185307179586476925286766559;

struct Chord {
    int root, third, fifth;
};

Chord chord_at(const std::vector<int>& prog, int64_t bar_i) {
    int deg = prog[(size_t)(bar_i % (int64_t)prog.size())];
    return {degree_to_semis(deg), degree_to_semis(deg + 2), degree_to_semis(deg + 4)};
}

}  // namespace

SourceSet synth_track_flags(const TrackSpec& spec, int sr, const std::array<bool, 4>& silent) {
    check(spec.tempo_bpm > 0 && spec.duration_s > 0 && sr > 0, ErrKind::validation,
          "synth_track: tempo, duration, sample rate must be positive");
    check(!spec.chord_progression.empty(), ErrKind::validation, "synth_track: empty progression");
    check(spec.key >= 0 && spec.key < 12, ErrKind::validation, "synth_track: key must be 0..11");
    const int64_t n = (int64_t)std::llround(spec.duration_s * sr);
    const double beat = 60.0 / spec.tempo_bpm, bar = 4.0 * beat;
    const auto& prog = spec.chord_progression;

    SourceSet out;
    out.sample_rate = sr;
    out.length = n;
    for (auto& s : out.stems) {
        s.sample_rate = sr;
        s.samples.assign(n, 0.f);
    }
    auto& bass = out.stems[0].samples;
    auto& drums = out.stems[1].samples;
    auto& guitar = out.stems[2].samples;
    auto& piano = out.stems[3].samples;

    int64_t nb = (int64_t)std::ceil(spec.duration_s / beat);

    // bass: sine at the chord root, one note per beat, octave 2
    for (int64_t b = 0; b < nb; b++) {
        int64_t s0 = (int64_t)(b * beat * sr), s1 = std::min((int64_t)((b + 1) * beat * sr), n);
        if (s0 >= n) break;
        int root = chord_at(prog, (int64_t)(b * beat / bar)).root;
        double f = midi_hz(36 + spec.key + root);
        for (int64_t i = 0; i < s1 - s0; i++) {
            double t = (double)i / sr;
            double env = std::min(1.0, t * 200.0) * std::exp(-2.0 * t);
            bass[s0 + i] = (float)(0.30 * env * std::sin(TAU * f * t));
        }
    }

    // drums: kick (pitch-swept sine) on even beats, snare (noise burst) on odd
    for (int64_t b = 0; b < nb; b++) {
        int64_t s0 = (int64_t)(b * beat * sr);
        if (s0 >= n) break;
        int64_t L = std::min((int64_t)(0.18 * sr), n - s0);
        if (b % 2 == 0) {
            double phase = 0.0;
            for (int64_t i = 0; i < L; i++) {
                double t = (double)i / sr;
                double f0 = 100.0 * std::exp(-t * 18.0) + 40.0;
                phase += f0 / sr;
                drums[s0 + i] += (float)(0.5 * std::exp(-t * 22.0) * std::sin(TAU * phase));
            }
        } else {
            Rng nz = Rng(spec.seed).stream("snare", (uint64_t)b);
            for (int64_t i = 0; i < L; i++) {
                double t = (double)i / sr;
                drums[s0 + i] += (float)(0.25 * std::exp(-t * 30.0) * nz.normal());
            }
        }
    }

    // piano: additive harmonics on the triad, one chord hit per half-bar
    int64_t nh = (int64_t)std::ceil(spec.duration_s / (bar / 2));
    for (int64_t h = 0; h < nh; h++) {
        int64_t s0 = (int64_t)(h * bar / 2 * sr), s1 = std::min((int64_t)((h + 1) * bar / 2 * sr), n);
        if (s0 >= n) break;
        Chord ch = chord_at(prog, h / 2);
        for (int tone : {ch.root, ch.third, ch.fifth}) {
            double f = midi_hz(60 + spec.key + tone);
            static constexpr double HARM[3][2] = {{1, 1.0}, {2, 0.5}, {3, 0.25}};
            for (auto& [k, a] : HARM) {
                if (f * k >= sr / 2.0 * 0.95) continue;
                for (int64_t i = 0; i < s1 - s0; i++) {
                    double t = (double)i / sr;
                    double env = std::min(1.0, t * 150.0) * std::exp(-1.5 * t);
                    piano[s0 + i] += (float)(0.08 * a * env * std::sin(TAU * f * k * t));
                }
            }
        }
    }

    // guitar: plucked arpeggio over the triad at eighth notes
    int64_t na = (int64_t)std::ceil(spec.duration_s / (beat / 2));
    for (int64_t a_i = 0; a_i < na; a_i++) {
        int64_t s0 = (int64_t)(a_i * beat / 2 * sr);
        if (s0 >= n) break;
        Chord ch = chord_at(prog, (int64_t)(a_i * beat / 2 / bar));
        int tones[3] = {ch.root, ch.third, ch.fifth};
        double f = midi_hz(48 + spec.key + tones[a_i % 3]);
        int64_t L = std::min((int64_t)(beat * sr * 0.9), n - s0);
        static constexpr double HARM[4][2] = {{1, 1.0}, {2, 0.6}, {3, 0.35}, {4, 0.2}};
        for (int64_t i = 0; i < L; i++) {
            double t = (double)i / sr;
            double w = 0.0;
            for (auto& [k, amp] : HARM)
                if (f * k < sr / 2.0 * 0.95) w += amp * std::sin(TAU * f * k * t);
            guitar[s0 + i] += (float)(0.12 * std::exp(-6.0 * t) * w);
        }
    }

    for (int k = 0; k < kNumSources; k++)
        if (silent[(size_t)k]) std::fill(out.stems[(size_t)k].samples.begin(), out.stems[(size_t)k].samples.end(), 0.f);
    return out;
}

SourceSet synth_track(const TrackSpec& spec, int sr) {
    Rng rng = Rng(spec.seed).stream("silence");
    std::array<bool, 4> silent{};
    for (auto& s : silent) s = rng.uniform() < spec.silence_prob;
    return synth_track_flags(spec, sr, silent);
}

AudioSeg mix(const SourceSet& s, bool* clipped) {
    AudioSeg m;
    m.sample_rate = s.sample_rate;
    m.samples.assign(s.length, 0.f);
    for (auto& st : s.stems)
        for (int64_t i = 0; i < s.length; i++) m.samples[i] += st.samples[i];
    if (clipped) {
        *clipped = false;
        for (float x : m.samples)
            if (std::abs(x) > 1.f) { *clipped = true; break; }
    }
    return m;
}

namespace {
json spec_to_json(int track_id, const TrackSpec& spec, const std::array<bool, 4>& silent) {
    json j;
    j["track_id"] = track_id;
    j["seed"] = spec.seed;
    j["key"] = spec.key;
    j["tempo_bpm"] = spec.tempo_bpm;
    j["duration_s"] = spec.duration_s;
    j["chord_progression"] = spec.chord_progression;
    json sf;
    for (int k = 0; k < kNumSources; k++) sf[kInstruments[(size_t)k]] = silent[(size_t)k];
    j["silence"] = sf;
    return j;
}

void write_track(const std::string& dir, const SourceSet& s) {
    fs::create_directories(dir);
    for (int k = 0; k < kNumSources; k++)
        wav_write(dir + "/" + kInstruments[(size_t)k] + ".wav", s.stems[(size_t)k].samples.data(),
                  (int64_t)s.stems[(size_t)k].samples.size(), s.sample_rate);
}
}  // namespace

std::string make_dataset(const TrackSpec& tmpl, int num_tracks, int sample_rate,
                         uint64_t master_seed, const std::string& out_dir) {
    check(num_tracks >= 0, ErrKind::validation, "make_dataset: negative track count");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    check(!ec, ErrKind::io, "cannot create " + out_dir);

    static constexpr int KEYS[6] = {0, 2, 4, 5, 7, 9};
    static const std::vector<std::vector<int>> PROGS = {{0, 5, 3, 4}, {0, 3, 4, 0}, {0, 4, 5, 3}};

    Rng master(master_seed);
    json manifest;
    manifest["sample_rate"] = sample_rate;
    manifest["tracks"] = json::array();
    for (int i = 0; i < num_tracks; i++) {
        Rng pick = master.stream("track", (uint64_t)i);
        TrackSpec spec = tmpl;
        spec.seed = master_seed * 100000ull + (uint64_t)i;
        spec.key = KEYS[pick.randint(6)];
        spec.tempo_bpm = pick.uniform(70.0, 140.0);
        spec.chord_progression = PROGS[(size_t)pick.randint(3)];

        Rng srng = Rng(spec.seed).stream("silence");
        std::array<bool, 4> silent{};
        for (auto& s : silent) s = srng.uniform() < spec.silence_prob;

        SourceSet s = synth_track_flags(spec, sample_rate, silent);
        char name[32];
        std::snprintf(name, sizeof(name), "track_%04d", i);
        write_track(out_dir + "/" + name, s);
        manifest["tracks"].push_back(spec_to_json(i, spec, silent));
    }
    std::string text = manifest.dump(2);
    std::ofstream f(out_dir + "/manifest.json");
    check(f.good(), ErrKind::io, "cannot write manifest");
    f << text;
    return text;
}

void make_dataset_from_manifest(const std::string& manifest_path, const std::string& out_dir) {
    std::ifstream f(manifest_path);
    check(f.good(), ErrKind::io, "cannot open manifest: " + manifest_path);
    json manifest;
    try {
        manifest = json::parse(f);
    } catch (const std::exception& e) {
        fail_data(std::string("bad manifest json: ") + e.what());
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    check(!ec, ErrKind::io, "cannot create " + out_dir);
    int sr = manifest.at("sample_rate").get<int>();
    for (auto& jt : manifest.at("tracks")) {
        TrackSpec spec;
        spec.seed = jt.at("seed").get<uint64_t>();
        spec.key = jt.at("key").get<int>();
        spec.tempo_bpm = jt.at("tempo_bpm").get<double>();
        spec.duration_s = jt.at("duration_s").get<double>();
        spec.chord_progression = jt.at("chord_progression").get<std::vector<int>>();
        std::array<bool, 4> silent{};
        for (int k = 0; k < kNumSources; k++)
            silent[(size_t)k] = jt.at("silence").at(kInstruments[(size_t)k]).get<bool>();
        SourceSet s = synth_track_flags(spec, sr, silent);
        char name[32];
        std::snprintf(name, sizeof(name), "track_%04d", jt.at("track_id").get<int>());
        write_track(out_dir + "/" + name, s);
    }
}

SourceSet load_stems(const std::string& track_dir) {
    SourceSet out;
    int found = 0;
    std::array<Wav, 4> wavs;
    for (int k = 0; k < kNumSources; k++) {
        std::string p = track_dir + "/" + kInstruments[(size_t)k] + ".wav";
        if (fs::exists(p)) {
            wavs[(size_t)k] = wav_read(p);
            found++;
        }
    }
    check(found > 0, ErrKind::io, "no stems found in " + track_dir);
    int sr = 0;
    int64_t len = INT64_MAX;
    for (auto& w : wavs) {
        if (w.samples.empty()) continue;
        if (sr == 0) sr = w.sample_rate;
        check(w.sample_rate == sr, ErrKind::data, "mixed sample rates in " + track_dir);
        len = std::min(len, (int64_t)w.samples.size());
    }
    out.sample_rate = sr;
    out.length = len;
    for (int k = 0; k < kNumSources; k++) {
        auto& st = out.stems[(size_t)k];
        st.sample_rate = sr;
        if (wavs[(size_t)k].samples.empty()) {
            st.samples.assign(len, 0.f);  // missing stem loads as silence
        } else {
            st.samples.assign(wavs[(size_t)k].samples.begin(), wavs[(size_t)k].samples.begin() + len);
        }
    }
    return out;
}

std::vector<std::string> list_track_dirs(const std::string& dataset_dir) {
    check(fs::is_directory(dataset_dir), ErrKind::io, "not a directory: " + dataset_dir);
    std::vector<std::string> dirs;
    for (auto& e : fs::directory_iterator(dataset_dir))
        if (e.is_directory()) dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

}  // namespace ms
