#pragma once
#include <cmath>
#include <string>
#include <vector>

#include "diffusion/edm.h"
#include "nn/modules.h"

namespace ms {

struct UNetConfig {
    int64_t in_channels = 64;  // K*C
    std::vector<int64_t> channels = {64, 128, 256};
    std::vector<int64_t> down = {1, 2, 2};
    std::vector<uint8_t> attn = {0, 0, 1};
    int64_t heads = 4, head_dim = 32;
    int64_t emb_dim = 128;
    int64_t res_blocks = 2;

    int64_t down_product() const {
        int64_t p = 1;
        for (auto d : down) p *= d;
        return p;
    }
    void validate() const;
};

UNetConfig unet_desk(int64_t in_channels);
UNetConfig unet_paper(int64_t in_channels);
std::string unet_config_json(const UNetConfig& c);
UNetConfig unet_config_parse(const std::string& text);

// sinusoidal features of the (scalar) noise conditioning value
template <typename T>
void noise_features(double c_noise, int64_t dim, T* out) {
    int64_t half = dim / 2;
    for (int64_t j = 0; j < half; j++) {
        double f = std::exp(-std::log(10000.0) * (double)j / (double)(half > 1 ? half - 1 : 1));
        out[j] = (T)std::sin(c_noise * f);
        out[half + j] = (T)std::cos(c_noise * f);
    }
    if (dim % 2) out[dim - 1] = (T)0;
}

template <typename T>
struct UNet {
    UNetConfig cfg;
    ParamStore<T> ps;

    LinearM<T> emb1, emb2;

    struct Res {
        GroupNormM<T> n1, n2;
        Conv1dM<T> c1, c2, cs;
        LinearM<T> film;
        bool chan_change = false;
        int64_t cout = 0;

        Res() = default;
        Res(ParamStore<T>& ps, Rng& rng, const std::string& nm, int64_t ci, int64_t co, int64_t emb)
            : n1(ps, nm + ".n1", ci, gn_groups(ci)),
              n2(ps, nm + ".n2", co, gn_groups(co)),
              c1(ps, rng, nm + ".c1", ci, co, 3, 1, 1),
              c2(ps, rng, nm + ".c2", co, co, 3, 1, 1, /*zero_init=*/true),
              film(ps, rng, nm + ".film", emb, 2 * co),
              chan_change(ci != co),
              cout(co) {
            if (chan_change) cs = Conv1dM<T>(ps, rng, nm + ".cs", ci, co, 1, 1, 0);
        }
        Node<T>* fwd(Tape<T>& tp, Node<T>* x, Node<T>* e) {
            auto* h = c1.fwd(tp, silu_n(tp, n1.fwd(tp, x)));
            auto* f = film.fwd(tp, e);  // [B, 2co]
            auto* sc = slice_last(tp, f, 0, cout);
            auto* sh = slice_last(tp, f, cout, 2 * cout);
            h = c2.fwd(tp, silu_n(tp, scale_shift(tp, n2.fwd(tp, h), sc, sh)));
            return add(tp, h, chan_change ? cs.fwd(tp, x) : x);
        }
    };

    struct Attn {
        GroupNormM<T> norm;
        LinearM<T> qkv, out;
        int64_t heads = 1, width = 0, ch = 0;

        Attn() = default;
        Attn(ParamStore<T>& ps, Rng& rng, const std::string& nm, int64_t c, int64_t heads_,
             int64_t head_dim)
            : norm(ps, nm + ".n", c, gn_groups(c)),
              qkv(ps, rng, nm + ".qkv", c, 3 * heads_ * head_dim),
              out(ps, rng, nm + ".out", heads_ * head_dim, c),
              heads(heads_),
              width(heads_ * head_dim),
              ch(c) {}
        Node<T>* fwd(Tape<T>& tp, Node<T>* x) {
            int64_t B = x->val.shape[0], Tn = x->val.shape[2];
            auto* t = permute_bct_btc(tp, norm.fwd(tp, x));          // [B,T,C]
            auto* q3 = reshape(tp, qkv.fwd(tp, reshape(tp, t, {B * Tn, ch})), {B, Tn, 3 * width});
            auto* q = split_heads(tp, slice_last(tp, q3, 0, width), heads);
            auto* k = split_heads(tp, slice_last(tp, q3, width, 2 * width), heads);
            auto* v = split_heads(tp, slice_last(tp, q3, 2 * width, 3 * width), heads);
            double scale = 1.0 / std::sqrt((double)(width / heads));
            auto* att = softmax_last(tp, mul_scalar(tp, bmm_nt(tp, q, k), scale));
            auto* o = merge_heads(tp, bmm(tp, att, v), heads);       // [B,T,W]
            o = reshape(tp, out.fwd(tp, reshape(tp, o, {B * Tn, width})), {B, Tn, ch});
            return add(tp, x, permute_btc_bct(tp, o));
        }
    };

    struct Stage {
        Conv1dM<T> entry;  // stride = down, prev channels -> stage channels
        int64_t down = 1;
        std::vector<Res> res;
        bool use_attn = false;
        Attn attn;
    };
    std::vector<Stage> enc;
    Res mid;
    struct DStage {
        std::vector<Res> res;  // res[0] maps 2*ch -> ch (skip concat)
        bool use_attn = false;
        Attn attn;
        bool has_up = false;
        int64_t up = 1;
        Conv1dM<T> upc;  // ch_i -> ch_{i-1}
    };
    std::vector<DStage> dec;  // deepest first
    GroupNormM<T> out_n;
    Conv1dM<T> out_c;
    bool out_up = false;
    int64_t out_up_by = 1;

    explicit UNet(const UNetConfig& c, uint64_t init_seed = 11) : cfg(c) {
        cfg.validate();
        Rng rng(init_seed);
        int64_t E = cfg.emb_dim;
        emb1 = LinearM<T>(ps, rng, "emb.l1", E, E);
        emb2 = LinearM<T>(ps, rng, "emb.l2", E, E);
        int64_t ns = (int64_t)cfg.channels.size();
        for (int64_t i = 0; i < ns; i++) {
            int64_t prev = i == 0 ? cfg.in_channels : cfg.channels[i - 1];
            int64_t ch = cfg.channels[i], d = cfg.down[i];
            std::string nm = "enc." + std::to_string(i);
            Stage s;
            s.down = d;
            s.entry = d > 1 ? Conv1dM<T>(ps, rng, nm + ".entry", prev, ch, 2 * d, d, d / 2)
                            : Conv1dM<T>(ps, rng, nm + ".entry", prev, ch, 3, 1, 1);
            for (int64_t r = 0; r < cfg.res_blocks; r++)
                s.res.emplace_back(ps, rng, nm + ".r" + std::to_string(r), ch, ch, E);
            s.use_attn = cfg.attn[i] != 0;
            if (s.use_attn) s.attn = Attn(ps, rng, nm + ".att", ch, cfg.heads, cfg.head_dim);
            enc.push_back(std::move(s));
        }
        mid = Res(ps, rng, "mid", cfg.channels.back(), cfg.channels.back(), E);
        for (int64_t i = ns - 1; i >= 0; i--) {
            int64_t ch = cfg.channels[i];
            std::string nm = "dec." + std::to_string(i);
            DStage s;
            s.res.emplace_back(ps, rng, nm + ".r0", 2 * ch, ch, E);
            for (int64_t r = 1; r < cfg.res_blocks; r++)
                s.res.emplace_back(ps, rng, nm + ".r" + std::to_string(r), ch, ch, E);
            s.use_attn = cfg.attn[i] != 0;
            if (s.use_attn) s.attn = Attn(ps, rng, nm + ".att", ch, cfg.heads, cfg.head_dim);
            if (i > 0) {
                s.has_up = true;
                s.up = cfg.down[i];
                s.upc = Conv1dM<T>(ps, rng, nm + ".up", ch, cfg.channels[i - 1], 3, 1, 1);
            }
            dec.push_back(std::move(s));
        }
        out_n = GroupNormM<T>(ps, "out.n", cfg.channels[0], gn_groups(cfg.channels[0]));
        out_c = Conv1dM<T>(ps, rng, "out.c", cfg.channels[0], cfg.in_channels, 3, 1, 1,
                           /*zero_init=*/true);
        out_up = cfg.down[0] > 1;
        out_up_by = cfg.down[0];
    }

    // x [B, in_channels, T], one c_noise value per batch item
    Node<T>* fwd(Tape<T>& tp, Node<T>* x, const std::vector<double>& c_noise) {
        int64_t B = x->val.shape[0], Tn = x->val.shape[2];
        check(x->val.shape[1] == cfg.in_channels, ErrKind::validation,
              "unet: expected " + std::to_string(cfg.in_channels) + " input channels");
        check((int64_t)c_noise.size() == B, ErrKind::validation, "unet: c_noise per batch item");
        int64_t dp = cfg.down_product();
        check(Tn % dp == 0, ErrKind::validation,
              "unet: T must be divisible by " + std::to_string(dp));

        Ten<T> ef({B, cfg.emb_dim});
        for (int64_t b = 0; b < B; b++) noise_features(c_noise[b], cfg.emb_dim, ef.data() + b * cfg.emb_dim);
        auto* e = emb2.fwd(tp, silu_n(tp, emb1.fwd(tp, tp.leaf(std::move(ef)))));

        std::vector<Node<T>*> skips;
        auto* h = x;
        for (auto& s : enc) {
            h = s.entry.fwd(tp, h);
            for (auto& r : s.res) h = r.fwd(tp, h, e);
            if (s.use_attn) h = s.attn.fwd(tp, h);
            skips.push_back(h);
        }
        h = mid.fwd(tp, h, e);
        for (auto& s : dec) {
            h = concat_c(tp, h, skips.back());
            skips.pop_back();
            for (auto& r : s.res) h = r.fwd(tp, h, e);
            if (s.use_attn) h = s.attn.fwd(tp, h);
            if (s.has_up) {
                if (s.up > 1) h = upsample_nearest(tp, h, s.up);
                h = s.upc.fwd(tp, h);
            }
        }
        if (out_up) h = upsample_nearest(tp, h, out_up_by);
        return out_c.fwd(tp, silu_n(tp, out_n.fwd(tp, h)));
    }
};

int64_t unet_param_count(const UNetConfig& cfg);

// training loss graph for a batch: z0/eps [B, KC, T], one sigma per item;
// returns mean_b lambda(sigma_b) * mean((D_b - z0_b)^2)
template <typename T>
Node<T>* edm_loss_graph(Tape<T>& tp, UNet<T>& net, const Ten<T>& z0, const Ten<T>& eps,
                        const std::vector<double>& sigmas, double sigma_data) {
    check(z0.same_shape(eps), ErrKind::validation, "edm loss: shape mismatch");
    int64_t B = z0.shape[0], M = z0.numel() / B;
    check((int64_t)sigmas.size() == B, ErrKind::validation, "edm loss: one sigma per item");

    Ten<T> zn(z0.shape), cin(z0.shape), cskip(z0.shape), cout(z0.shape), w(z0.shape);
    std::vector<double> c_noise(B);
    for (int64_t b = 0; b < B; b++) {
        Precond p = precondition_coeffs(sigmas[b], sigma_data);
        c_noise[b] = p.c_noise;
        double lam = edm_weight(sigmas[b], sigma_data);
        for (int64_t j = 0; j < M; j++) {
            int64_t i = b * M + j;
            zn.v[i] = z0.v[i] + (T)(sigmas[b] * (double)eps.v[i]);
            cin.v[i] = (T)p.c_in;
            cskip.v[i] = (T)p.c_skip;
            cout.v[i] = (T)p.c_out;
            w.v[i] = (T)(lam / (double)z0.numel());
        }
    }
    auto* znl = tp.leaf(std::move(zn));
    auto* fo = net.fwd(tp, mul(tp, znl, tp.leaf(std::move(cin))), c_noise);
    auto* d = add(tp, mul(tp, znl, tp.leaf(std::move(cskip))), mul(tp, fo, tp.leaf(std::move(cout))));
    auto* err = sub(tp, d, tp.leaf(Ten<T>(z0)));
    return sum_all(tp, mul(tp, mul(tp, err, err), tp.leaf(std::move(w))));
}

}  // namespace ms
