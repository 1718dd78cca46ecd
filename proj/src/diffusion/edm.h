#pragma once
#include <functional>
#include <vector>

#include "core/error.h"
#include "core/rng.h"
#include "core/tensor.h"

namespace ms {

struct DiffusionConfig {
    double sigma_data = 0.4;
    double sigma_train_min = 1e-4, sigma_train_max = 3.0;  // p_train = U(min, max)
    double s_churn = 0.0;
    int64_t n_steps = 50;
    double sigma_min = 0.01, sigma_max = 3.0, rho = 7.0;
    int64_t K = 4, C = 16;
};

struct Precond {
    double c_skip, c_out, c_in, c_noise;
};

Precond precondition_coeffs(double sigma, double sigma_data);
double edm_weight(double sigma, double sigma_data);  // lambda(sigma)

TenF perturb(const TenF& z0, double sigma, const TenF& eps);

struct Denoiser {
    virtual ~Denoiser() = default;
    virtual TenF denoise(const TenF& z, double sigma) = 0;
};

// EDM wrapper: D(z) = c_skip*z + c_out*net(c_in*z, c_noise)
struct PrecondDenoiser : Denoiser {
    std::function<TenF(const TenF&, double)> net;
    double sigma_data;
    PrecondDenoiser(std::function<TenF(const TenF&, double)> net_, double sigma_data_)
        : net(std::move(net_)), sigma_data(sigma_data_) {}
    TenF denoise(const TenF& z, double sigma) override;
};

// Bayes-optimal denoiser for data ~ N(0, sd^2 I)
struct AnalyticGaussianDenoiser : Denoiser {
    double sd;
    explicit AnalyticGaussianDenoiser(double sigma_d) : sd(sigma_d) {}
    TenF denoise(const TenF& z, double sigma) override;
};

// Bayes-optimal denoiser for rows ~ N(mean, cov), cov [d,d]; input [..., d]
struct FullGaussianDenoiser : Denoiser {
    TenD cov;
    std::vector<double> mean;
    FullGaussianDenoiser(TenD cov_, std::vector<double> mean_ = {});
    TenF denoise(const TenF& z, double sigma) override;
};

TenF score(Denoiser& d, const TenF& z, double sigma);

// single-draw training loss: sigma ~ U(train_min, train_max), eps ~ N(0, I)
double edm_loss(Denoiser& d, const TenF& z0, Rng& rng, const DiffusionConfig& cfg);

}  // namespace ms
