#include "diffusion/edm.h"

#include <cmath>

namespace ms {

Precond precondition_coeffs(double sigma, double sigma_data) {
    check(sigma >= 0, ErrKind::validation, "precondition: sigma must be >= 0");
    check(sigma_data > 0, ErrKind::validation, "precondition: sigma_data must be > 0");
    double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
    Precond p;
    p.c_skip = d2 / (s2 + d2);
    p.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
    p.c_in = 1.0 / std::sqrt(s2 + d2);
    p.c_noise = sigma > 0 ? 0.25 * std::log(sigma) : 0.0;
    return p;
}

double edm_weight(double sigma, double sigma_data) {
    double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
    return (s2 + d2) / (s2 * d2);
}

TenF perturb(const TenF& z0, double sigma, const TenF& eps) {
    check(z0.same_shape(eps), ErrKind::validation, "perturb: shape mismatch");
    TenF z(z0.shape);
    for (int64_t i = 0; i < z.numel(); i++) z.v[i] = z0.v[i] + (float)(sigma * (double)eps.v[i]);
    return z;
}

TenF PrecondDenoiser::denoise(const TenF& z, double sigma) {
    Precond p = precondition_coeffs(sigma, sigma_data);
    TenF zin(z.shape);
    for (int64_t i = 0; i < z.numel(); i++) zin.v[i] = (float)(p.c_in * (double)z.v[i]);
    TenF f = net(zin, p.c_noise);
    check(f.same_shape(z), ErrKind::validation, "denoise: network changed shape");
    check(f.all_finite(), ErrKind::numeric, "denoise: non-finite network output");
    TenF d(z.shape);
    for (int64_t i = 0; i < z.numel(); i++)
        d.v[i] = (float)(p.c_skip * (double)z.v[i] + p.c_out * (double)f.v[i]);
    return d;
}

TenF AnalyticGaussianDenoiser::denoise(const TenF& z, double sigma) {
    double g = sd * sd / (sd * sd + sigma * sigma);
    TenF d(z.shape);
    for (int64_t i = 0; i < z.numel(); i++) d.v[i] = (float)(g * (double)z.v[i]);
    return d;
}

FullGaussianDenoiser::FullGaussianDenoiser(TenD cov_, std::vector<double> mean_)
    : cov(std::move(cov_)), mean(std::move(mean_)) {
    check(cov.ndim() == 2 && cov.shape[0] == cov.shape[1], ErrKind::validation,
          "full gaussian denoiser: cov must be square");
    if (mean.empty()) mean.assign((size_t)cov.shape[0], 0.0);
    check((int64_t)mean.size() == cov.shape[0], ErrKind::validation,
          "full gaussian denoiser: mean dim mismatch");
}

TenF FullGaussianDenoiser::denoise(const TenF& z, double sigma) {
    int64_t d = cov.shape[0];
    check(z.numel() % d == 0 && z.shape.back() == d, ErrKind::validation,
          "full gaussian denoiser: last axis must match cov dim");
    int64_t rows = z.numel() / d;
    // A = cov + sigma^2 I, factored once per call
    std::vector<double> A((size_t)(d * d));
    for (int64_t i = 0; i < d * d; i++) A[(size_t)i] = cov.v[i];
    for (int64_t i = 0; i < d; i++) A[(size_t)(i * d + i)] += sigma * sigma;
    // LU with partial pivoting
    std::vector<int64_t> piv(d);
    for (int64_t i = 0; i < d; i++) piv[(size_t)i] = i;
    for (int64_t k = 0; k < d; k++) {
        int64_t p = k;
        for (int64_t i = k + 1; i < d; i++)
            if (std::abs(A[(size_t)(i * d + k)]) > std::abs(A[(size_t)(p * d + k)])) p = i;
        if (p != k) {
            for (int64_t j = 0; j < d; j++) std::swap(A[(size_t)(k * d + j)], A[(size_t)(p * d + j)]);
            std::swap(piv[(size_t)k], piv[(size_t)p]);
        }
        check(A[(size_t)(k * d + k)] != 0.0, ErrKind::numeric, "full gaussian denoiser: singular system");
        for (int64_t i = k + 1; i < d; i++) {
            A[(size_t)(i * d + k)] /= A[(size_t)(k * d + k)];
            for (int64_t j = k + 1; j < d; j++)
                A[(size_t)(i * d + j)] -= A[(size_t)(i * d + k)] * A[(size_t)(k * d + j)];
        }
    }
    TenF out(z.shape);
    std::vector<double> r(d), y(d);
    for (int64_t n = 0; n < rows; n++) {
        const float* zr = z.data() + n * d;
        for (int64_t i = 0; i < d; i++) r[(size_t)i] = (double)zr[piv[(size_t)i]] - mean[(size_t)piv[(size_t)i]];
        for (int64_t i = 0; i < d; i++) {  // forward
            double s = r[(size_t)i];
            for (int64_t j = 0; j < i; j++) s -= A[(size_t)(i * d + j)] * y[(size_t)j];
            y[(size_t)i] = s;
        }
        for (int64_t i = d - 1; i >= 0; i--) {  // back
            double s = y[(size_t)i];
            for (int64_t j = i + 1; j < d; j++) s -= A[(size_t)(i * d + j)] * y[(size_t)j];
            y[(size_t)i] = s / A[(size_t)(i * d + i)];
        }
        // D = mean + cov @ y
        for (int64_t i = 0; i < d; i++) {
            double s = mean[(size_t)i];
            for (int64_t j = 0; j < d; j++) s += cov.v[i * d + j] * y[(size_t)j];
            out.v[n * d + i] = (float)s;
        }
    }
    return out;
}

TenF score(Denoiser& den, const TenF& z, double sigma) {
    check(sigma > 0, ErrKind::validation, "score: sigma must be > 0");
    TenF d = den.denoise(z, sigma);
    TenF s(z.shape);
    double inv = 1.0 / (sigma * sigma);
    for (int64_t i = 0; i < z.numel(); i++) s.v[i] = (float)(((double)d.v[i] - (double)z.v[i]) * inv);
    return s;
}

double edm_loss(Denoiser& den, const TenF& z0, Rng& rng, const DiffusionConfig& cfg) {
    check(z0.all_finite(), ErrKind::validation, "edm_loss: non-finite input");
    double sigma = rng.uniform(cfg.sigma_train_min, cfg.sigma_train_max);
    TenF eps(z0.shape);
    rng.fill_normal(eps.v.data(), eps.numel());
    TenF d = den.denoise(perturb(z0, sigma, eps), sigma);
    double acc = 0;
    for (int64_t i = 0; i < z0.numel(); i++) {
        double e = (double)d.v[i] - (double)z0.v[i];
        acc += e * e;
    }
    return edm_weight(sigma, cfg.sigma_data) * acc / (double)z0.numel();
}

}  // namespace ms
