#pragma once
#include <deque>
#include <string>

#include "autograd/ops.h"
#include "core/archive.h"
#include "core/rng.h"

namespace ms {

template <typename T>
struct Param {
    std::string name;
    Node<T> node;  // lives outside any tape; val = weights, grad accumulates
    Ten<T> m, v;   // adam moments
};

template <typename T>
class ParamStore {
public:
    Param<T>* add(const std::string& name, Ten<T> init) {
        params_.push_back({});
        Param<T>& p = params_.back();
        p.name = name;
        p.node.val = std::move(init);
        p.node.needs_grad = true;
        p.m = Ten<T>(p.node.val.shape);
        p.v = Ten<T>(p.node.val.shape);
        return &p;
    }
    std::deque<Param<T>>& all() { return params_; }
    const std::deque<Param<T>>& all() const { return params_; }

    int64_t count() const {
        int64_t n = 0;
        for (auto& p : params_) n += p.node.val.numel();
        return n;
    }
    void zero_grad() {
        for (auto& p : params_) p.node.zero_grad();
    }
    std::vector<std::pair<std::string, std::vector<int64_t>>> shapes() const {
        std::vector<std::pair<std::string, std::vector<int64_t>>> out;
        for (auto& p : params_) out.emplace_back(p.name, p.node.val.shape);
        return out;
    }

    void to_archive(Archive& a) const {
        for (auto& p : params_) {
            TenF t(p.node.val.shape);
            for (int64_t i = 0; i < t.numel(); i++) t.v[i] = (float)p.node.val.v[i];
            a.put(p.name, std::move(t));
        }
    }
    void from_archive(const Archive& a) {
        for (auto& p : params_) {
            const TenF* t = a.find(p.name);
            check(t != nullptr, ErrKind::data, "checkpoint missing parameter " + p.name);
            check(t->shape == p.node.val.shape, ErrKind::data, "checkpoint shape mismatch for " + p.name);
            for (int64_t i = 0; i < p.node.val.numel(); i++) p.node.val.v[i] = (T)t->v[i];
        }
    }

private:
    std::deque<Param<T>> params_;  // deque: stable addresses
};

// ---- init helpers (torch-style kaiming uniform, bound 1/sqrt(fan_in)) ----
template <typename T>
Ten<T> init_uniform(Rng& rng, std::vector<int64_t> shape, double bound) {
    Ten<T> t(std::move(shape));
    for (auto& x : t.v) x = (T)rng.uniform(-bound, bound);
    return t;
}

// ---- modules: thin param holders whose forward() writes graph nodes ----

template <typename T>
struct Conv1dM {
    Param<T>*w = nullptr, *b = nullptr;
    int64_t stride = 1, pad = 0;

    Conv1dM() = default;
    Conv1dM(ParamStore<T>& ps, Rng& rng, const std::string& name, int64_t ci, int64_t co,
            int64_t k, int64_t stride_ = 1, int64_t pad_ = 0, bool zero_init = false)
        : stride(stride_), pad(pad_) {
        double bound = 1.0 / std::sqrt((double)(ci * k));
        w = ps.add(name + ".w", init_uniform<T>(rng, {co, ci, k}, zero_init ? 0.0 : bound));
        b = ps.add(name + ".b", init_uniform<T>(rng, {co}, zero_init ? 0.0 : bound));
    }
    Node<T>* fwd(Tape<T>& tp, Node<T>* x) { return conv1d(tp, x, &w->node, &b->node, stride, pad); }
};

template <typename T>
struct LinearM {
    Param<T>*w = nullptr, *b = nullptr;

    LinearM() = default;
    LinearM(ParamStore<T>& ps, Rng& rng, const std::string& name, int64_t in, int64_t out,
            bool zero_init = false) {
        double bound = 1.0 / std::sqrt((double)in);
        w = ps.add(name + ".w", init_uniform<T>(rng, {out, in}, zero_init ? 0.0 : bound));
        b = ps.add(name + ".b", init_uniform<T>(rng, {out}, zero_init ? 0.0 : bound));
    }
    Node<T>* fwd(Tape<T>& tp, Node<T>* x) { return linear(tp, x, &w->node, &b->node); }
};

template <typename T>
struct GroupNormM {
    Param<T>*gamma = nullptr, *beta = nullptr;
    int64_t groups = 1;

    GroupNormM() = default;
    GroupNormM(ParamStore<T>& ps, const std::string& name, int64_t c, int64_t groups_)
        : groups(groups_) {
        gamma = ps.add(name + ".g", Ten<T>({c}, (T)1));
        beta = ps.add(name + ".b", Ten<T>({c}, (T)0));
    }
    Node<T>* fwd(Tape<T>& tp, Node<T>* x) {
        return group_norm(tp, x, &gamma->node, &beta->node, groups);
    }
};

inline int64_t gn_groups(int64_t c) { return c < 8 ? c : 8; }

// ---- optimizer: Adam with bias correction and optional global-norm clip ----
template <typename T>
struct Adam {
    double lr, beta1, beta2, eps;
    int64_t t = 0;

    Adam(double lr_, double b1, double b2, double eps_ = 1e-8)
        : lr(lr_), beta1(b1), beta2(b2), eps(eps_) {}

    // returns the pre-clip global grad norm
    double step(ParamStore<T>& ps, double lr_now, double clip = 0.0) {
        double sq = 0;
        for (auto& p : ps.all()) {
            if (!p.node.grad_live) continue;
            for (auto g : p.node.grad.v) sq += (double)g * (double)g;
        }
        double norm = std::sqrt(sq);
        double scale = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
        t++;
        double bc1 = 1.0 - std::pow(beta1, (double)t);
        double bc2 = 1.0 - std::pow(beta2, (double)t);
        for (auto& p : ps.all()) {
            if (!p.node.grad_live) continue;
            for (int64_t i = 0; i < p.node.val.numel(); i++) {
                double g = (double)p.node.grad.v[i] * scale;
                double m = beta1 * (double)p.m.v[i] + (1.0 - beta1) * g;
                double v = beta2 * (double)p.v.v[i] + (1.0 - beta2) * g * g;
                p.m.v[i] = (T)m;
                p.v.v[i] = (T)v;
                p.node.val.v[i] -= (T)(lr_now * (m / bc1) / (std::sqrt(v / bc2) + eps));
            }
        }
        return norm;
    }
};

// cosine decay from peak to floor_frac*peak across total steps
inline double cosine_lr(double peak, int64_t step, int64_t total, double floor_frac = 0.05) {
    if (total <= 1) return peak;
    double c = 0.5 * (1.0 + std::cos(M_PI * (double)step / (double)total));
    return peak * (floor_frac + (1.0 - floor_frac) * c);
}

// one line per tensor plus a total, for --dry-run and size ledgers
std::string param_table(const std::vector<std::pair<std::string, std::vector<int64_t>>>& shapes);

}  // namespace ms
