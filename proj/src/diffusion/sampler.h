#pragma once
#include <functional>

#include "diffusion/edm.h"
#include "diffusion/schedule.h"

namespace ms {

// called after churn noise, before the denoiser — imputation replaces channels here
using StepHook = std::function<void(TenF& z, double sigma_hat, int64_t step)>;

// stochastic Euler sampler; returns the state after the final (sigma = 0) step
TenF sample(Denoiser& den, const std::vector<int64_t>& shape, const SigmaSchedule& sch,
            double s_churn, Rng& rng, const StepHook& hook = {});

}  // namespace ms
