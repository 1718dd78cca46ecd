#pragma once
#include <vector>

#include "core/tensor.h"
#include "eval/embed.h"

namespace ms {

struct GaussianStats {
    std::vector<double> mean;
    TenD cov;  // [d, d] symmetric, unbiased
    int64_t count = 0;
    int d = 0;
};

GaussianStats gaussian_stats(const std::vector<std::vector<float>>& emb);

// cyclic Jacobi eigensolver for symmetric A; evecs columns are eigenvectors
void jacobi_eigh(const TenD& A, std::vector<double>& evals, TenD& evecs);

double frechet_distance(const GaussianStats& a, const GaussianStats& b);

double fad(const std::vector<AudioSeg>& reference, const std::vector<AudioSeg>& candidate,
           const Embedder& e);

}  // namespace ms
