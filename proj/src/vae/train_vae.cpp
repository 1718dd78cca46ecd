#include "vae/train_vae.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "audio/synth.h"

namespace ms {

namespace {
struct SegRef {
    int32_t wave;
    int64_t off;
};
}  // namespace

VaeTrainStats train_vae(const std::string& data_dir, const VaeConfig& cfg, int64_t steps,
                        uint64_t seed, const std::string& out_dir, bool verbose) {
    cfg.validate();
    check(steps >= 0, ErrKind::validation, "train-vae: negative steps");

    std::vector<std::vector<float>> waves;
    std::vector<SegRef> segs;
    for (auto& dir : list_track_dirs(data_dir)) {
        SourceSet s = load_stems(dir);
        check(s.sample_rate == (int)cfg.sample_rate, ErrKind::data,
              "train-vae: dataset sample rate " + std::to_string(s.sample_rate) +
                  " != config " + std::to_string(cfg.sample_rate));
        for (auto& stem : s.stems) {
            waves.push_back(std::move(stem.samples));
            auto& w = waves.back();
            for (int64_t o = 0; o + cfg.segment <= (int64_t)w.size(); o += cfg.segment)
                segs.push_back({(int32_t)(waves.size() - 1), o});
        }
    }
    check(!segs.empty(), ErrKind::data, "train-vae: no training segments under " + data_dir);

    SourceVae<float> m(cfg, seed);
    ParamStore<float> disc_ps;
    std::unique_ptr<Discriminator<float>> disc;
    if (cfg.adversarial) {
        Rng drng(seed ^ 0x9e3779b97f4a7c15ull);
        disc.reset(new Discriminator<float>(disc_ps, drng));
    }
    MelBank<float> bank = make_mel_bank<float>(cfg.mel_configs, cfg.sample_rate);

    int64_t D = cfg.hop();
    int64_t L = ((cfg.segment + D - 1) / D) * D;  // padded window length
    int64_t B = cfg.batch, C = cfg.latent_channels, T = L / D;

    Rng master(seed);
    Rng batch_rng = master.stream("batch");
    Rng eps_rng = master.stream("reparam");

    std::filesystem::create_directories(out_dir);
    VaeTrainStats st;
    st.steps = steps;
    st.ckpt_path = out_dir + "/vae.ckpt";
    st.csv_path = out_dir + "/loss.csv";
    std::ofstream csv(st.csv_path);
    check(csv.good(), ErrKind::io, "train-vae: cannot write " + st.csv_path);
    csv << "step,total,mel,kl,feature,adversarial\n";

    Adam<float> opt(cfg.lr, 0.8, 0.99);
    Adam<float> dopt(cfg.lr, 0.8, 0.99);
    auto t0 = std::chrono::steady_clock::now();

    for (int64_t step = 0; step < steps; step++) {
        TenF x({B, 1, L});
        for (int64_t b = 0; b < B; b++) {
            const SegRef& r = segs[(size_t)batch_rng.randint((int64_t)segs.size())];
            const auto& w = waves[(size_t)r.wave];
            std::copy(w.begin() + r.off, w.begin() + r.off + cfg.segment, x.v.begin() + b * L);
        }
        TenF ep({B, C, T});
        eps_rng.fill_normal(ep.v.data(), ep.numel());

        Tape<float> tp;
        auto* xn = tp.leaf(std::move(x));
        auto* en = tp.leaf(std::move(ep));
        VaeLossTerms terms;
        auto* total = vae_loss_graph(tp, m, bank, xn, en, &terms, disc.get());
        if (!std::isfinite(terms.total))
            fail_numeric("train-vae: non-finite loss at step " + std::to_string(step));

        m.ps.zero_grad();
        tp.backward(total);
        double lr_now = cosine_lr(cfg.lr, step, steps);
        opt.step(m.ps, lr_now, cfg.grad_clip);

        if (cfg.adversarial) {
            // discriminator step on detached reconstructions (fresh forward, post-update weights)
            TenF fake({B, L});
            {
                Tape<float> tf;
                TenF x2({B, 1, L});
                x2.v = xn->val.v;
                TenF e2({B, C, T});
                e2.v = en->val.v;
                auto [mu2, lv2] = m.encode_graph(tf, tf.leaf(std::move(x2)));
                auto* z = add(tf, mu2, mul(tf, exp_n(tf, mul_scalar(tf, lv2, 0.5)),
                                           tf.leaf(std::move(e2))));
                fake.v = m.decode_graph(tf, z)->val.v;
            }
            TenF real({B, L});
            real.v = xn->val.v;
            Tape<float> t2;
            auto g = discriminator_losses(t2, *disc, t2.leaf(std::move(real)),
                                          t2.leaf(std::move(fake)));
            disc_ps.zero_grad();
            t2.backward(g.disc);
            dopt.step(disc_ps, lr_now, cfg.grad_clip);
        }

        csv << step << "," << terms.total << "," << terms.mel << "," << terms.kl << ","
            << terms.feature << "," << terms.adv << "\n";
        if (step == 0) st.first_total = terms.total;
        st.final_total = terms.total;

        if (verbose && (step % 100 == 0 || step == steps - 1)) {
            double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("[vae] step %lld/%lld total %.4f mel %.4f kl %.5f lr %.2e (%.0fs)\n",
                        (long long)step, (long long)steps, terms.total, terms.mel, terms.kl,
                        lr_now, el);
            std::fflush(stdout);
        }
    }

    m.step = steps;
    vae_save(m, st.ckpt_path, cfg.adversarial ? &disc_ps : nullptr);
    csv.close();
    return st;
}

}  // namespace ms
