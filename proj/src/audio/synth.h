#pragma once
#include <array>
#include <string>
#include <vector>

#include "core/rng.h"

namespace ms {

inline constexpr std::array<const char*, 4> kInstruments = {"bass", "drums", "guitar", "piano"};
inline constexpr int kNumSources = 4;
int instrument_index(const std::string& name);  // -1 if unknown

struct AudioSeg {
    std::vector<float> samples;
    int sample_rate = 0;
};

struct SourceSet {
    std::array<AudioSeg, kNumSources> stems;  // canonical order bass,drums,guitar,piano
    int sample_rate = 0;
    int64_t length = 0;
};

struct TrackSpec {
    uint64_t seed = 0;
    int key = 0;  // pitch class 0..11
    double tempo_bpm = 120.0;
    double duration_s = 8.0;
    std::vector<int> chord_progression = {0, 5, 3, 4};  // scale degrees
    double silence_prob = 0.0;
};

SourceSet synth_track(const TrackSpec& spec, int sample_rate);
// variant with pinned silence decisions (manifest regeneration)
SourceSet synth_track_flags(const TrackSpec& spec, int sample_rate, const std::array<bool, 4>& silent);

AudioSeg mix(const SourceSet& s, bool* clipped = nullptr);

// writes num_tracks dirs of <instrument>.wav + manifest.json; returns manifest text
std::string make_dataset(const TrackSpec& tmpl, int num_tracks, int sample_rate,
                         uint64_t master_seed, const std::string& out_dir);
// re-render bit-identically from a manifest
void make_dataset_from_manifest(const std::string& manifest_path, const std::string& out_dir);

// loads stems from a track dir; missing instruments come back as silence
SourceSet load_stems(const std::string& track_dir);
std::vector<std::string> list_track_dirs(const std::string& dataset_dir);

}  // namespace ms
