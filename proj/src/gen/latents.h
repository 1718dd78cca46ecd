#pragma once
#include <string>

namespace ms {

struct EncodeStats {
    int64_t count = 0;
    int K = 0, C = 0, T = 0;
    std::string out_path;
};

// encode every track in dataset_dir with the VAE's posterior mean.
// mixture=false: one [K,C,T] item per track (stems in canonical order);
// mixture=true: the summed mixture as a single-source [1,C,T] item.
EncodeStats encode_latents(const std::string& dataset_dir, const std::string& vae_ckpt,
                           const std::string& out_path, bool mixture = false,
                           bool verbose = true);

}  // namespace ms
