#pragma once
#include <string>
#include <vector>

namespace ms {

// latent dataset: header {K, C, T, count}, then count contiguous [K,C,T] f32 items
struct LatentFile {
    int K = 0, C = 0, T = 0;
    int64_t count = 0;
    std::vector<float> data;  // count*K*C*T

    float* item(int64_t i) { return data.data() + i * (int64_t)K * C * T; }
    const float* item(int64_t i) const { return data.data() + i * (int64_t)K * C * T; }
};

void latents_save(const std::string& path, const LatentFile& lf);
LatentFile latents_load(const std::string& path);

// embeddings: header {count, d}, then count d-vectors f32
struct EmbFile {
    int64_t count = 0;
    int d = 0;
    std::vector<float> data;
};

void emb_save(const std::string& path, const EmbFile& e);
EmbFile emb_load(const std::string& path);

}  // namespace ms
