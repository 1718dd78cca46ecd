#include "eval/frechet.h"

#include <cmath>

#include "core/error.h"

namespace ms {

GaussianStats gaussian_stats(const std::vector<std::vector<float>>& emb) {
    check(emb.size() >= 2, ErrKind::data,
          "gaussian_stats: need at least 2 embeddings, got " + std::to_string(emb.size()));
    int d = (int)emb[0].size();
    for (auto& e : emb)
        check((int)e.size() == d, ErrKind::validation, "gaussian_stats: ragged embedding dims");
    int64_t n = (int64_t)emb.size();

    GaussianStats g;
    g.count = n;
    g.d = d;
    g.mean.assign((size_t)d, 0.0);
    for (auto& e : emb)
        for (int i = 0; i < d; i++) g.mean[(size_t)i] += (double)e[(size_t)i];
    for (int i = 0; i < d; i++) g.mean[(size_t)i] /= (double)n;

    g.cov = TenD({d, d});
    for (auto& e : emb) {
        for (int i = 0; i < d; i++) {
            double di = (double)e[(size_t)i] - g.mean[(size_t)i];
            for (int j = i; j < d; j++)
                g.cov.v[(size_t)(i * d + j)] += di * ((double)e[(size_t)j] - g.mean[(size_t)j]);
        }
    }
    for (int i = 0; i < d; i++)
        for (int j = i; j < d; j++) {
            double v = g.cov.v[(size_t)(i * d + j)] / (double)(n - 1);
            g.cov.v[(size_t)(i * d + j)] = v;
            g.cov.v[(size_t)(j * d + i)] = v;
        }
    return g;
}

void jacobi_eigh(const TenD& A, std::vector<double>& evals, TenD& evecs) {
    int d = (int)A.shape[0];
    check(A.shape.size() == 2 && A.shape[1] == d, ErrKind::validation, "jacobi: square matrix");
    TenD M = A;
    evecs = TenD({d, d});
    for (int i = 0; i < d; i++) evecs.v[(size_t)(i * d + i)] = 1.0;

    auto off = [&]() {
        double s = 0;
        for (int i = 0; i < d; i++)
            for (int j = i + 1; j < d; j++) s += M.v[(size_t)(i * d + j)] * M.v[(size_t)(i * d + j)];
        return s;
    };
    double norm = 0;
    for (auto v : M.v) norm += v * v;
    double tol = 1e-24 * (norm > 0 ? norm : 1.0);

    for (int sweep = 0; sweep < 64 && off() > tol; sweep++) {
        for (int p = 0; p < d - 1; p++)
            for (int q = p + 1; q < d; q++) {
                double apq = M.v[(size_t)(p * d + q)];
                if (std::fabs(apq) < 1e-300) continue;
                double app = M.v[(size_t)(p * d + p)], aqq = M.v[(size_t)(q * d + q)];
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int i = 0; i < d; i++) {
                    double mip = M.v[(size_t)(i * d + p)], miq = M.v[(size_t)(i * d + q)];
                    M.v[(size_t)(i * d + p)] = c * mip - s * miq;
                    M.v[(size_t)(i * d + q)] = s * mip + c * miq;
                }
                for (int i = 0; i < d; i++) {
                    double mpi = M.v[(size_t)(p * d + i)], mqi = M.v[(size_t)(q * d + i)];
                    M.v[(size_t)(p * d + i)] = c * mpi - s * mqi;
                    M.v[(size_t)(q * d + i)] = s * mpi + c * mqi;
                }
                for (int i = 0; i < d; i++) {
                    double vip = evecs.v[(size_t)(i * d + p)], viq = evecs.v[(size_t)(i * d + q)];
                    evecs.v[(size_t)(i * d + p)] = c * vip - s * viq;
                    evecs.v[(size_t)(i * d + q)] = s * vip + c * viq;
                }
            }
    }
    evals.assign((size_t)d, 0.0);
    for (int i = 0; i < d; i++) evals[(size_t)i] = M.v[(size_t)(i * d + i)];
}

namespace {

// eigenvalue policy for matrices that are PSD up to rounding
double clamp_eig(double l, const char* what) {
    if (l < -1e-8)
        fail_numeric(std::string(what) + ": eigenvalue " + std::to_string(l) +
                     " below tolerance -1e-8");
    return l < 0 ? 0.0 : l;
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    check(a.d == b.d, ErrKind::validation,
          "frechet: dimension mismatch " + std::to_string(a.d) + " vs " + std::to_string(b.d));
    int d = a.d;

    double dmu = 0;
    for (int i = 0; i < d; i++) {
        double diff = a.mean[(size_t)i] - b.mean[(size_t)i];
        dmu += diff * diff;
    }
    double tra = 0, trb = 0;
    for (int i = 0; i < d; i++) {
        tra += a.cov.v[(size_t)(i * d + i)];
        trb += b.cov.v[(size_t)(i * d + i)];
    }

    // S = sqrt(cov_a) via eigendecomposition
    std::vector<double> la;
    TenD Va;
    jacobi_eigh(a.cov, la, Va);
    for (auto& l : la) l = std::sqrt(clamp_eig(l, "frechet sqrt(cov_a)"));
    TenD S({d, d});
    for (int i = 0; i < d; i++)
        for (int j = 0; j < d; j++) {
            double s = 0;
            for (int k = 0; k < d; k++)
                s += Va.v[(size_t)(i * d + k)] * la[(size_t)k] * Va.v[(size_t)(j * d + k)];
            S.v[(size_t)(i * d + j)] = s;
        }

    // M = S cov_b S, symmetrized against rounding
    TenD SB({d, d}), M({d, d});
    for (int i = 0; i < d; i++)
        for (int j = 0; j < d; j++) {
            double s = 0;
            for (int k = 0; k < d; k++)
                s += S.v[(size_t)(i * d + k)] * b.cov.v[(size_t)(k * d + j)];
            SB.v[(size_t)(i * d + j)] = s;
        }
    for (int i = 0; i < d; i++)
        for (int j = 0; j < d; j++) {
            double s = 0;
            for (int k = 0; k < d; k++)
                s += SB.v[(size_t)(i * d + k)] * S.v[(size_t)(k * d + j)];
            M.v[(size_t)(i * d + j)] = s;
        }
    for (int i = 0; i < d; i++)
        for (int j = i + 1; j < d; j++) {
            double s = 0.5 * (M.v[(size_t)(i * d + j)] + M.v[(size_t)(j * d + i)]);
            M.v[(size_t)(i * d + j)] = s;
            M.v[(size_t)(j * d + i)] = s;
        }

    std::vector<double> lm;
    TenD Vm;
    jacobi_eigh(M, lm, Vm);
    double tr_sqrt = 0;
    for (auto l : lm) tr_sqrt += std::sqrt(clamp_eig(l, "frechet sqrt(product)"));

    double r = dmu + tra + trb - 2.0 * tr_sqrt;
    return r < 0 ? 0.0 : r;
}

double fad(const std::vector<AudioSeg>& reference, const std::vector<AudioSeg>& candidate,
           const Embedder& e) {
    check(!reference.empty() && !candidate.empty(), ErrKind::data, "fad: empty chunk set");
    std::vector<std::vector<float>> ra, ca;
    ra.reserve(reference.size());
    ca.reserve(candidate.size());
    for (auto& s : reference) ra.push_back(e.embed(s.samples.data(), (int64_t)s.samples.size()));
    for (auto& s : candidate) ca.push_back(e.embed(s.samples.data(), (int64_t)s.samples.size()));
    return frechet_distance(gaussian_stats(ra), gaussian_stats(ca));
}

}  // namespace ms
