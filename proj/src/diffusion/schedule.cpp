#include "diffusion/schedule.h"

#include <cmath>

#include "core/error.h"

namespace ms {

SigmaSchedule karras_schedule(int64_t n_steps, double sigma_min, double sigma_max, double rho) {
    check(n_steps >= 2, ErrKind::validation, "schedule: n_steps must be >= 2");
    check(sigma_min > 0 && sigma_min < sigma_max, ErrKind::validation,
          "schedule: need 0 < sigma_min < sigma_max");
    check(rho > 0, ErrKind::validation, "schedule: rho must be positive");
    SigmaSchedule s;
    s.n_steps = n_steps;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.rho = rho;
    s.sigmas.resize(n_steps + 1);
    double a = std::pow(sigma_max, 1.0 / rho), b = std::pow(sigma_min, 1.0 / rho);
    for (int64_t i = 0; i < n_steps; i++) {
        double u = (double)i / (double)(n_steps - 1);
        s.sigmas[i] = std::pow(a + u * (b - a), rho);
    }
    s.sigmas[0] = sigma_max;            // exact endpoints
    s.sigmas[n_steps - 1] = sigma_min;  // (pow round-trip wobbles in the last ulp)
    s.sigmas[n_steps] = 0.0;
    for (int64_t i = 0; i < n_steps; i++)
        check(s.sigmas[i] > s.sigmas[i + 1], ErrKind::validation,
              "schedule: sigmas not strictly decreasing");
    return s;
}

}  // namespace ms
