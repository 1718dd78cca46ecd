#pragma once
#include <cstdint>
#include <vector>

namespace ms {

struct SigmaSchedule {
    std::vector<double> sigmas;  // n_steps+1 entries, strictly decreasing, terminal exactly 0
    int64_t n_steps = 0;
    double sigma_min = 0, sigma_max = 0, rho = 0;
};

SigmaSchedule karras_schedule(int64_t n_steps, double sigma_min, double sigma_max, double rho);

}  // namespace ms
