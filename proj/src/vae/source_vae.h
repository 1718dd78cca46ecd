#pragma once
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "audio/mel.h"
#include "core/rng.h"
#include "nn/modules.h"

namespace ms {

struct VaeConfig {
    int64_t latent_channels = 16;  // C
    std::vector<int64_t> strides = {2, 4, 8};
    int64_t base_channels = 24;
    std::vector<MelConfig> mel_configs = {{512, 128, 40}, {128, 32, 16}};
    double lw_mel = 15, lw_feature = 2, lw_adv = 1, lw_kl = 1;
    bool adversarial = false;
    int64_t sample_rate = 8000;
    // training
    double lr = 1.5e-3;
    int64_t batch = 8;
    int64_t segment = 4096;
    double grad_clip = 5.0;

    int64_t hop() const {  // D: total downsampling
        int64_t d = 1;
        for (auto s : strides) d *= s;
        return d;
    }
    void validate() const;
};

VaeConfig vae_desk();
VaeConfig vae_paper();
std::string vae_config_json(const VaeConfig& c);
VaeConfig vae_config_parse(const std::string& text);

struct Posterior {
    TenF mean, log_var;  // [C, T]
};

// pre-activation residual unit: h + c2(silu(n2(c1(silu(n1(h))))))
template <typename T>
struct VaeResUnit {
    GroupNormM<T> n1, n2;
    Conv1dM<T> c1, c2;

    VaeResUnit() = default;
    VaeResUnit(ParamStore<T>& ps, Rng& rng, const std::string& nm, int64_t c)
        : n1(ps, nm + ".n1", c, gn_groups(c)),
          n2(ps, nm + ".n2", c, gn_groups(c)),
          c1(ps, rng, nm + ".c1", c, c, 3, 1, 1),
          c2(ps, rng, nm + ".c2", c, c, 1, 1, 0) {}
    Node<T>* fwd(Tape<T>& tp, Node<T>* h) {
        auto* r = c2.fwd(tp, silu_n(tp, n2.fwd(tp, c1.fwd(tp, silu_n(tp, n1.fwd(tp, h))))));
        return add(tp, h, r);
    }
};

template <typename T>
struct SourceVae {
    VaeConfig cfg;
    ParamStore<T> ps;
    int64_t step = 0;

    Conv1dM<T> e_stem;
    struct EStage {
        VaeResUnit<T> res;
        Conv1dM<T> down;
    };
    std::vector<EStage> enc;
    GroupNormM<T> e_hn;
    Conv1dM<T> e_head;  // -> 2C, fully zero-init: silence encodes to exactly zero

    Conv1dM<T> d_stem;
    struct DStage {
        int64_t scale;
        Conv1dM<T> up;
        VaeResUnit<T> r1, r2;
    };
    std::vector<DStage> dec;  // deepest first
    GroupNormM<T> d_on;
    Conv1dM<T> d_out;

    explicit SourceVae(const VaeConfig& c, uint64_t init_seed = 7) : cfg(c) {
        cfg.validate();
        Rng rng(init_seed);
        int64_t C = cfg.latent_channels;
        std::vector<int64_t> chs{cfg.base_channels};
        for (size_t i = 0; i < cfg.strides.size(); i++) chs.push_back(cfg.base_channels << (i + 1));

        e_stem = Conv1dM<T>(ps, rng, "enc.stem", 1, chs[0], 7, 1, 3);
        for (size_t i = 0; i < cfg.strides.size(); i++) {
            int64_t st = cfg.strides[i];
            std::string nm = "enc." + std::to_string(i);
            EStage s;
            s.res = VaeResUnit<T>(ps, rng, nm, chs[i]);
            s.down = Conv1dM<T>(ps, rng, nm + ".dn", chs[i], chs[i + 1], 2 * st, st, st / 2);
            enc.push_back(std::move(s));
        }
        e_hn = GroupNormM<T>(ps, "enc.hn", chs.back(), gn_groups(chs.back()));
        e_head = Conv1dM<T>(ps, rng, "enc.head", chs.back(), 2 * C, 3, 1, 1, /*zero_init=*/true);

        d_stem = Conv1dM<T>(ps, rng, "dec.stem", C, chs.back(), 3, 1, 1);
        for (int64_t i = (int64_t)cfg.strides.size() - 1; i >= 0; i--) {
            int64_t st = cfg.strides[i];
            std::string nm = "dec." + std::to_string(i);
            DStage s;
            s.scale = st;
            s.up = Conv1dM<T>(ps, rng, nm + ".up", chs[i + 1], chs[i], 2 * st + 1, 1, st);
            s.r1 = VaeResUnit<T>(ps, rng, nm + ".a", chs[i]);
            s.r2 = VaeResUnit<T>(ps, rng, nm + ".b", chs[i]);
            dec.push_back(std::move(s));
        }
        d_on = GroupNormM<T>(ps, "dec.on", chs[0], gn_groups(chs[0]));
        d_out = Conv1dM<T>(ps, rng, "dec.out", chs[0], 1, 7, 1, 3);
    }

    // x [B,1,N] (N a multiple of hop()) -> (mu, log_var) each [B,C,T]
    std::pair<Node<T>*, Node<T>*> encode_graph(Tape<T>& tp, Node<T>* x) {
        auto* h = e_stem.fwd(tp, x);
        for (auto& s : enc) h = s.down.fwd(tp, s.res.fwd(tp, h));
        auto* out = e_head.fwd(tp, silu_n(tp, e_hn.fwd(tp, h)));
        int64_t C = cfg.latent_channels;
        auto* mu = slice_c(tp, out, 0, C);
        auto* lv = clamp_n(tp, slice_c(tp, out, C, 2 * C), -14.0, 7.0);
        return {mu, lv};
    }

    // z [B,C,T] -> [B,1,T*hop()]
    Node<T>* decode_graph(Tape<T>& tp, Node<T>* z) {
        auto* h = d_stem.fwd(tp, z);
        for (auto& s : dec) {
            h = s.up.fwd(tp, upsample_nearest(tp, h, s.scale));
            h = s.r1.fwd(tp, h);
            h = s.r2.fwd(tp, h);
        }
        return tanh_n(tp, d_out.fwd(tp, silu_n(tp, d_on.fwd(tp, h))));
    }
};

// right-zero-pad to a multiple of d
std::vector<float> pad_to_multiple(const std::vector<float>& x, int64_t d);

// inference on a float model (deterministic, batch of one)
Posterior vae_encode(SourceVae<float>& m, const std::vector<float>& wav, int64_t sample_rate = 0);
TenF vae_latent_features(SourceVae<float>& m, const std::vector<float>& wav, int64_t sample_rate = 0);
std::vector<float> vae_decode(SourceVae<float>& m, const TenF& z);  // z [C,T]
TenF vae_sample_posterior(const Posterior& p, Rng& rng);

// mean over all elements of 0.5*(mu^2 + e^lv - 1 - lv)
template <typename T>
Node<T>* kl_node(Tape<T>& tp, Node<T>* mu, Node<T>* lv) {
    auto* t = add(tp, mul(tp, mu, mu), exp_n(tp, lv));
    t = add_scalar(tp, t, -1.0);
    t = sub(tp, t, lv);
    return mul_scalar(tp, mean_all(tp, t), 0.5);
}

double kl_loss(const Posterior& p);

// multi-scale log-mel L1; filterbanks precomputed once
template <typename T>
struct MelBank {
    std::vector<MelConfig> cfgs;
    std::vector<std::shared_ptr<Ten<T>>> fb;
};

template <typename T>
MelBank<T> make_mel_bank(const std::vector<MelConfig>& cfgs, int64_t sample_rate) {
    MelBank<T> b;
    b.cfgs = cfgs;
    for (auto& c : cfgs) {
        TenF f = mel_filterbank((int)sample_rate, c.nfft, c.nmels);
        auto t = std::make_shared<Ten<T>>(f.shape);
        for (int64_t i = 0; i < f.numel(); i++) t->v[i] = (T)f.v[i];
        b.fb.push_back(std::move(t));
    }
    return b;
}

// y, x: [B, L] waveform nodes
template <typename T>
Node<T>* mel_loss_node(Tape<T>& tp, const MelBank<T>& bank, Node<T>* y, Node<T>* x) {
    Node<T>* total = nullptr;
    for (size_t i = 0; i < bank.cfgs.size(); i++) {
        auto& c = bank.cfgs[i];
        auto* sy = log_eps(tp, matmul_const_left(tp, bank.fb[i], stft_mag(tp, y, c.nfft, c.hop)), kEpsMel);
        auto* sx = log_eps(tp, matmul_const_left(tp, bank.fb[i], stft_mag(tp, x, c.nfft, c.hop)), kEpsMel);
        auto* term = mean_all(tp, abs_n(tp, sub(tp, sy, sx)));
        total = total ? add(tp, total, term) : term;
    }
    return total;
}

double mel_loss(const std::vector<float>& a, const std::vector<float>& b,
                const std::vector<MelConfig>& cfgs, int64_t sample_rate);

// single-scale STFT-magnitude discriminator (least-squares GAN)
template <typename T>
struct Discriminator {
    int64_t nfft = 512, hop = 128;
    Conv1dM<T> c1, c2, c3;

    Discriminator() = default;
    Discriminator(ParamStore<T>& ps, Rng& rng, int64_t nfft_ = 512, int64_t hop_ = 128)
        : nfft(nfft_), hop(hop_) {
        int64_t F = nfft / 2 + 1;
        c1 = Conv1dM<T>(ps, rng, "disc.c1", F, 64, 3, 1, 1);
        c2 = Conv1dM<T>(ps, rng, "disc.c2", 64, 64, 3, 2, 1);
        c3 = Conv1dM<T>(ps, rng, "disc.c3", 64, 1, 3, 1, 1);
    }
    // x [B,L] -> (score [B,1,Fr'], features)
    std::pair<Node<T>*, std::vector<Node<T>*>> fwd(Tape<T>& tp, Node<T>* x) {
        auto* s = stft_mag(tp, x, nfft, hop);  // [B,F,Fr]
        auto* h1 = silu_n(tp, c1.fwd(tp, s));
        auto* h2 = silu_n(tp, c2.fwd(tp, h1));
        auto* out = c3.fwd(tp, h2);
        return {out, {h1, h2}};
    }
};

// least-squares GAN terms: generator loss (fake -> 1), feature match, disc loss (real -> 1, fake -> 0)
template <typename T>
struct GanNodes {
    Node<T>*adv = nullptr, *feature = nullptr, *disc = nullptr;
};

template <typename T>
GanNodes<T> discriminator_losses(Tape<T>& tp, Discriminator<T>& d, Node<T>* real, Node<T>* fake) {
    check(real->val.shape == fake->val.shape, ErrKind::validation, "discriminator: shape mismatch");
    auto [sr, fr] = d.fwd(tp, real);
    auto [sf, ff] = d.fwd(tp, fake);
    GanNodes<T> g;
    g.adv = mean_all(tp, mul(tp, add_scalar(tp, sf, -1.0), add_scalar(tp, sf, -1.0)));
    Node<T>* fm = nullptr;
    for (size_t i = 0; i < fr.size(); i++) {
        auto* t = mean_all(tp, abs_n(tp, sub(tp, fr[i], ff[i])));
        fm = fm ? add(tp, fm, t) : t;
    }
    g.feature = mul_scalar(tp, fm, 1.0 / (double)fr.size());
    auto* dr = mean_all(tp, mul(tp, add_scalar(tp, sr, -1.0), add_scalar(tp, sr, -1.0)));
    auto* df = mean_all(tp, mul(tp, sf, sf));
    g.disc = add(tp, mul_scalar(tp, dr, 0.5), mul_scalar(tp, df, 0.5));
    return g;
}

struct VaeLossTerms {
    double total = 0, mel = 0, kl = 0, feature = 0, adv = 0;
    bool adv_enabled = false;
};

// full training loss graph for one batch x [B,1,L]; eps is the reparameterization draw
template <typename T>
Node<T>* vae_loss_graph(Tape<T>& tp, SourceVae<T>& m, const MelBank<T>& bank, Node<T>* x,
                        Node<T>* eps, VaeLossTerms* terms, Discriminator<T>* disc = nullptr,
                        Node<T>** disc_loss_out = nullptr) {
    check(!m.cfg.adversarial || disc != nullptr, ErrKind::validation,
          "adversarial training enabled but no discriminator");
    auto [mu, lv] = m.encode_graph(tp, x);
    auto* z = add(tp, mu, mul(tp, exp_n(tp, mul_scalar(tp, lv, 0.5)), eps));
    auto* y = m.decode_graph(tp, z);
    int64_t B = x->val.shape[0], L = x->val.shape[2];
    auto* yb = reshape(tp, y, {B, L});
    auto* xb = reshape(tp, x, {B, L});
    auto* lm = mel_loss_node(tp, bank, yb, xb);
    auto* lkl = kl_node(tp, mu, lv);
    auto* total = add(tp, mul_scalar(tp, lm, m.cfg.lw_mel), mul_scalar(tp, lkl, m.cfg.lw_kl));
    if (terms) {
        terms->mel = (double)lm->val.v[0];
        terms->kl = (double)lkl->val.v[0];
        terms->feature = terms->adv = 0;
        terms->adv_enabled = m.cfg.adversarial;
    }
    if (m.cfg.adversarial) {
        auto g = discriminator_losses(tp, *disc, xb, yb);
        total = add(tp, total, add(tp, mul_scalar(tp, g.feature, m.cfg.lw_feature),
                                   mul_scalar(tp, g.adv, m.cfg.lw_adv)));
        if (terms) {
            terms->feature = (double)g.feature->val.v[0];
            terms->adv = (double)g.adv->val.v[0];
        }
        if (disc_loss_out) *disc_loss_out = g.disc;
    }
    if (terms) terms->total = (double)total->val.v[0];
    return total;
}

// checkpoint I/O (archive: config.json + named float32 tensors)
void vae_save(const SourceVae<float>& m, const std::string& path,
              const ParamStore<float>* disc_ps = nullptr);
std::unique_ptr<SourceVae<float>> vae_load(const std::string& path);

}  // namespace ms
