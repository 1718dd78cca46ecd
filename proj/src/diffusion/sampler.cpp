#include "diffusion/sampler.h"

#include <cmath>
#include <string>

namespace ms {

TenF sample(Denoiser& den, const std::vector<int64_t>& shape, const SigmaSchedule& sch,
            double s_churn, Rng& rng, const StepHook& hook) {
    check(sch.n_steps >= 2 && (int64_t)sch.sigmas.size() == sch.n_steps + 1, ErrKind::validation,
          "sample: bad schedule");
    check(s_churn >= 0, ErrKind::validation, "sample: s_churn must be >= 0");

    TenF z(shape);
    rng.fill_normal(z.v.data(), z.numel());
    for (auto& x : z.v) x = (float)((double)x * sch.sigmas[0]);

    int64_t n = sch.n_steps;
    double gamma = s_churn > 0 ? std::min(s_churn / (double)n, std::sqrt(2.0) - 1.0) : 0.0;
    TenF noise(shape);
    for (int64_t i = 0; i < n; i++) {
        double sigma = sch.sigmas[i], sigma_next = sch.sigmas[i + 1];
        double sigma_hat = sigma * (1.0 + gamma);
        if (gamma > 0) {
            double amp = std::sqrt(sigma_hat * sigma_hat - sigma * sigma);
            rng.fill_normal(noise.v.data(), noise.numel());
            for (int64_t j = 0; j < z.numel(); j++) z.v[j] += (float)(amp * (double)noise.v[j]);
        }
        if (hook) hook(z, sigma_hat, i);
        TenF d = den.denoise(z, sigma_hat);
        check(d.same_shape(z), ErrKind::validation, "sample: denoiser changed shape");
        double h = sigma_next - sigma_hat;
        for (int64_t j = 0; j < z.numel(); j++) {
            double dz = ((double)z.v[j] - (double)d.v[j]) / sigma_hat;
            z.v[j] = (float)((double)z.v[j] + h * dz);
        }
        check(z.all_finite(), ErrKind::numeric,
              "sample: non-finite state at step " + std::to_string(i));
    }
    return z;
}

}  // namespace ms
