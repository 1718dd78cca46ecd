#pragma once
#include <string>
#include <vector>

#include "diffusion/edm.h"
#include "diffusion/unet.h"

namespace ms {

enum class DiffusionMode { multi_source, independent, mixture };

DiffusionMode diffusion_mode_parse(const std::string& s);
std::string diffusion_mode_name(DiffusionMode m);

struct DiffTrainOpts {
    DiffusionMode mode = DiffusionMode::multi_source;
    double lr = 1e-4;
    int64_t batch = 16;
    int64_t crop = 64;  // latent frames per training example
    double grad_clip = 5.0;
};

struct DiffTrainStats {
    int64_t steps = 0;
    double first_loss = 0, final_loss = 0;
    double ema100 = 0, ema_final = 0;  // smoothed loss at step 100 and at the end
    std::vector<std::string> ckpt_paths;
    std::string csv_path;
};

// trains on a precomputed latent dataset; independent mode trains one model
// per source and writes K checkpoints.
DiffTrainStats train_diffusion(const std::string& latents_path, const DiffusionConfig& dcfg,
                               const UNetConfig& net_cfg, int64_t steps, uint64_t seed,
                               const std::string& out_dir, const DiffTrainOpts& opts,
                               bool verbose = true);

}  // namespace ms
