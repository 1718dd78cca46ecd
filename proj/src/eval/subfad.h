#pragma once
#include <functional>
#include <string>
#include <vector>

#include "eval/embed.h"
#include "eval/frechet.h"
#include "gen/generate.h"

namespace ms {

// the 14 non-trivial generated-source subsets for K=4, in column order B..DGP
std::vector<std::string> subset_names();
std::vector<int> subset_indices(const std::string& name);  // generated source indices, sorted
std::string subset_name(const std::vector<int>& gen_idx);

// fills the gen_idx stems of a chunk; given stems must pass through untouched
using Completer = std::function<SourceSet(const Chunk& chunk, const std::vector<int>& given_idx,
                                          const std::vector<int>& gen_idx, uint64_t item_seed)>;

// shared harness: candidates are mixtures of completed stems, reference = the
// same chunks' real mixtures
double sub_fad_with(const std::string& test_dir, const std::vector<int>& gen_idx,
                    const Embedder& e, int64_t count, uint64_t seed, const Completer& complete,
                    double chunk_seconds);

// production path: completer wraps generate_partial on the checkpoint pair
double sub_fad(const std::string& diff_ckpt, const std::string& vae_ckpt,
               const std::string& test_dir, const std::vector<int>& gen_idx, const Embedder& e,
               int64_t count, uint64_t seed, double chunk_seconds,
               const SampleOverrides& ov = {}, bool verbose = true);

// chroma cosine between the bass and piano stems, in [0, 1]
double coherence_proxy(const SourceSet& s);

}  // namespace ms
