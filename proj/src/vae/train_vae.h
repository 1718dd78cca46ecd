#pragma once
#include <string>

#include "vae/source_vae.h"

namespace ms {

struct VaeTrainStats {
    double first_total = 0, final_total = 0;
    int64_t steps = 0;
    std::string ckpt_path, csv_path;
};

// trains a shared VAE on every stem of every track under data_dir
VaeTrainStats train_vae(const std::string& data_dir, const VaeConfig& cfg, int64_t steps,
                        uint64_t seed, const std::string& out_dir, bool verbose = true);

}  // namespace ms
