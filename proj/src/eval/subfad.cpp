#include "eval/subfad.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "audio/mel.h"
#include "core/error.h"

namespace ms {

namespace {
constexpr char kLetters[kNumSources] = {'B', 'D', 'G', 'P'};

int letter_index(char c) {
    for (int i = 0; i < kNumSources; i++)
        if (kLetters[i] == c) return i;
    return -1;
}
}  // namespace

std::vector<std::string> subset_names() {
    // all non-empty proper subsets, ordered by size then lexicographically
    std::vector<std::string> out;
    for (int sz = 1; sz < kNumSources; sz++) {
        std::vector<std::string> tier;
        for (int m = 1; m < (1 << kNumSources) - 1; m++) {
            if (__builtin_popcount((unsigned)m) != sz) continue;
            std::string s;
            for (int i = 0; i < kNumSources; i++)
                if (m & (1 << i)) s += kLetters[i];
            tier.push_back(s);
        }
        std::sort(tier.begin(), tier.end());
        out.insert(out.end(), tier.begin(), tier.end());
    }
    return out;
}

std::vector<int> subset_indices(const std::string& name) {
    check(!name.empty(), ErrKind::validation, "subset: empty name");
    std::vector<int> idx;
    for (char c : name) {
        int i = letter_index((char)std::toupper((unsigned char)c));
        check(i >= 0, ErrKind::validation,
              "subset: unknown instrument letter '" + std::string(1, c) + "' in \"" + name + "\"");
        idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end());
    check(std::adjacent_find(idx.begin(), idx.end()) == idx.end(), ErrKind::validation,
          "subset: duplicate instrument in \"" + name + "\"");
    check((int)idx.size() < kNumSources, ErrKind::validation,
          "subset: \"" + name + "\" is the complete set, nothing to generate");
    return idx;
}

std::string subset_name(const std::vector<int>& gen_idx) {
    check(!gen_idx.empty() && (int)gen_idx.size() < kNumSources, ErrKind::validation,
          "subset: need a non-empty proper subset");
    std::vector<int> idx = gen_idx;
    std::sort(idx.begin(), idx.end());
    std::string s;
    for (int i : idx) {
        check(i >= 0 && i < kNumSources, ErrKind::validation, "subset: index out of range");
        s += kLetters[i];
    }
    check(std::adjacent_find(idx.begin(), idx.end()) == idx.end(), ErrKind::validation,
          "subset: duplicate index");
    return s;
}

double sub_fad_with(const std::string& test_dir, const std::vector<int>& gen_idx,
                    const Embedder& e, int64_t count, uint64_t seed, const Completer& complete,
                    double chunk_seconds) {
    std::vector<int> gen = subset_indices(subset_name(gen_idx));  // validates + sorts
    std::vector<int> given;
    for (int k = 0; k < kNumSources; k++)
        if (std::find(gen.begin(), gen.end(), k) == gen.end()) given.push_back(k);

    Rng master(seed);
    Rng crng = master.stream("chunks");
    auto chunks = chunk_dataset(test_dir, chunk_seconds, count, crng, /*require_all_stems=*/true);

    Rng irng = master.stream("items");
    std::vector<AudioSeg> ref, cand;
    ref.reserve(chunks.size());
    cand.reserve(chunks.size());
    for (auto& ch : chunks) {
        SourceSet done = complete(ch, given, gen, irng.next_u64());
        for (int k : given) {
            const auto& a = ch.stems.stems[(size_t)k].samples;
            const auto& b = done.stems[(size_t)k].samples;
            check(a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin()),
                  ErrKind::validation,
                  "sub-fad: completer altered given stem " + std::string(kInstruments[(size_t)k]));
        }
        ref.push_back(ch.mix);
        cand.push_back(mix(done));
    }
    return fad(ref, cand, e);
}

double sub_fad(const std::string& diff_ckpt, const std::string& vae_ckpt,
               const std::string& test_dir, const std::vector<int>& gen_idx, const Embedder& e,
               int64_t count, uint64_t seed, double chunk_seconds, const SampleOverrides& ov,
               bool verbose) {
    int64_t item = 0;
    Completer c = [&](const Chunk& ch, const std::vector<int>& given_idx,
                      const std::vector<int>& g, uint64_t item_seed) {
        (void)g;
        if (verbose)
            std::fprintf(stderr, "sub-fad %s: chunk %lld/%lld\n",
                         subset_name(gen_idx).c_str(), (long long)(item + 1), (long long)count);
        item++;
        GenItem it = generate_partial(ch.stems, given_idx, diff_ckpt, vae_ckpt, item_seed, ov,
                                      nullptr, false);
        SourceSet out;
        out.sample_rate = ch.stems.sample_rate;
        out.length = ch.stems.length;
        for (int k = 0; k < kNumSources; k++) out.stems[(size_t)k] = it.stems[(size_t)k];
        return out;
    };
    return sub_fad_with(test_dir, gen_idx, e, count, seed, c, chunk_seconds);
}

double coherence_proxy(const SourceSet& s) {
    const AudioSeg& bass = s.stems[0];
    const AudioSeg& piano = s.stems[3];
    auto hb = chroma_histogram(bass.samples.data(), (int64_t)bass.samples.size(), s.sample_rate);
    auto hp = chroma_histogram(piano.samples.data(), (int64_t)piano.samples.size(), s.sample_rate);
    auto zero = [](const std::vector<double>& h) {
        for (double v : h)
            if (v != 0.0) return false;
        return true;
    };
    if (zero(hb) || zero(hp))
        fail_numeric("coherence_proxy: silent pitched stem, chroma undefined");
    double dot = 0;
    for (size_t i = 0; i < hb.size(); i++) dot += hb[i] * hp[i];
    return std::clamp(dot, 0.0, 1.0);
}

}  // namespace ms
