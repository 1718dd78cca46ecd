#pragma once
#include <memory>
#include <string>
#include <vector>

#include "audio/synth.h"
#include "core/rng.h"
#include "core/tensor.h"
#include "diffusion/sampler.h"
#include "diffusion/unet.h"

namespace ms {

// loaded diffusion checkpoint: net + normalization stats + sampling defaults
struct DiffCkpt {
    std::string mode;  // multi-source | independent | mixture
    int K = 0, C = 0;  // sources jointly modeled, latent channels per source
    int source_index = -1;
    int64_t step = 0;
    DiffusionConfig diff;
    std::shared_ptr<UNet<float>> net;
    TenF norm_mean, norm_std;  // [in_channels]
};

DiffCkpt diff_ckpt_load(const std::string& path);

// invert the training normalization, channels along dim 0 of [ch,T] or dim 1 of [B,ch,T]
TenF denormalize(const TenF& z, const DiffCkpt& ck);

struct ImputationSpec {
    std::vector<int> given;  // source indices I, each in [0, K)
    int K = 0, C = 0;
    TenF z_given;  // [K*C, T] normalized clean latents; only rows of `given` are read
    Rng rng{0};
};

// replace given-source channels with Z_I(0) + sigma_hat * fresh noise; others untouched.
// z is [K*C, T] or [B, K*C, T].
void impute_step(TenF& z, ImputationSpec& spec, double sigma_hat);

struct SampleOverrides {
    int64_t n_steps = -1;  // <0: use checkpoint default
    double s_churn = -1;   // <0: use checkpoint default
};

struct GenItem {
    std::vector<AudioSeg> stems;  // canonical order; empty for mixture-mode checkpoints
    AudioSeg mixture;
    std::vector<int> given;  // indices of conditioning stems (partial generation only)
};

struct GenMeta {
    std::string mode;
    int64_t n_steps = 0;
    double sigma_min = 0, sigma_max = 0, rho = 0, s_churn = 0;
};

// one checkpoint for multi-source/mixture, K checkpoints for independent
std::vector<GenItem> generate_total(const std::vector<std::string>& diff_ckpts,
                                    const std::string& vae_ckpt, double duration_s,
                                    uint64_t seed, int count, const SampleOverrides& ov = {},
                                    GenMeta* meta = nullptr, bool verbose = true);

// conditions on track's stems at indices given_idx; multi-source checkpoints only
GenItem generate_partial(const SourceSet& track, const std::vector<int>& given_idx,
                         const std::string& diff_ckpt, const std::string& vae_ckpt,
                         uint64_t seed, const SampleOverrides& ov = {}, GenMeta* meta = nullptr,
                         bool verbose = true);

// item_<k>/<instrument>.wav + mixture.wav + meta.json under out_dir
void write_gen_items(const std::string& out_dir, const std::vector<GenItem>& items,
                     uint64_t seed, const GenMeta& meta);

}  // namespace ms
