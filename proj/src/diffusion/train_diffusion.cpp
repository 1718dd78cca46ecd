#include "diffusion/train_diffusion.h"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "core/archive.h"
#include "core/blob.h"

namespace ms {

using nlohmann::json;

DiffusionMode diffusion_mode_parse(const std::string& s) {
    if (s == "multi-source") return DiffusionMode::multi_source;
    if (s == "independent") return DiffusionMode::independent;
    if (s == "mixture") return DiffusionMode::mixture;
    fail_validation("unknown diffusion mode '" + s +
                    "' (expected multi-source, independent, or mixture)");
}

std::string diffusion_mode_name(DiffusionMode m) {
    switch (m) {
        case DiffusionMode::multi_source: return "multi-source";
        case DiffusionMode::independent: return "independent";
        case DiffusionMode::mixture: return "mixture";
    }
    return "?";
}

namespace {

// per-channel mean/std over the whole training set
void channel_stats(const LatentFile& lf, std::vector<double>& mean, std::vector<double>& sd) {
    int64_t KC = (int64_t)lf.K * lf.C, T = lf.T;
    int64_t n = lf.count * T;
    mean.assign(KC, 0.0);
    sd.assign(KC, 0.0);
    for (int64_t i = 0; i < lf.count; i++) {
        const float* it = lf.item(i);
        for (int64_t c = 0; c < KC; c++) {
            const float* row = it + c * T;
            double s = 0;
            for (int64_t t = 0; t < T; t++) s += row[t];
            mean[c] += s;
        }
    }
    for (int64_t c = 0; c < KC; c++) mean[c] /= (double)n;
    for (int64_t i = 0; i < lf.count; i++) {
        const float* it = lf.item(i);
        for (int64_t c = 0; c < KC; c++) {
            const float* row = it + c * T;
            double s = 0;
            for (int64_t t = 0; t < T; t++) {
                double d = (double)row[t] - mean[c];
                s += d * d;
            }
            sd[c] += s;
        }
    }
    for (int64_t c = 0; c < KC; c++) sd[c] = std::sqrt(sd[c] / (double)n);
}

struct ModelSlot {
    std::unique_ptr<UNet<float>> net;
    std::unique_ptr<Adam<float>> opt;
    std::string ckpt_path;
    int source_index = -1;  // >= 0 only in independent mode
};

void save_ckpt(const ModelSlot& ms_, const DiffusionConfig& dcfg, const DiffTrainOpts& opts,
               int K_model, int C, int64_t step, const std::vector<double>& mean,
               const std::vector<double>& sd, int64_t ch0) {
    Archive a;
    json j;
    j["kind"] = "diffusion";
    j["mode"] = diffusion_mode_name(opts.mode);
    j["K"] = K_model;
    j["C"] = C;
    j["step"] = step;
    if (ms_.source_index >= 0) j["source_index"] = ms_.source_index;
    j["sigma_data"] = dcfg.sigma_data;
    j["schedule"] = {{"n_steps", dcfg.n_steps},
                     {"sigma_min", dcfg.sigma_min},
                     {"sigma_max", dcfg.sigma_max},
                     {"rho", dcfg.rho}};
    j["s_churn"] = dcfg.s_churn;
    j["unet"] = json::parse(unet_config_json(ms_.net->cfg));
    a.config = j.dump(2);

    int64_t in = ms_.net->cfg.in_channels;
    TenF nm({in}), ns({in});
    for (int64_t c = 0; c < in; c++) {
        nm.v[c] = (float)mean[ch0 + c];
        ns.v[c] = (float)sd[ch0 + c];
    }
    a.put("norm.mean", std::move(nm));
    a.put("norm.std", std::move(ns));
    ms_.net->ps.to_archive(a);
    archive_save(ms_.ckpt_path, a);
}

}  // namespace

DiffTrainStats train_diffusion(const std::string& latents_path, const DiffusionConfig& dcfg,
                               const UNetConfig& net_cfg, int64_t steps, uint64_t seed,
                               const std::string& out_dir, const DiffTrainOpts& opts,
                               bool verbose) {
    check(steps >= 0, ErrKind::validation, "train-diffusion: negative steps");
    net_cfg.validate();
    check(opts.batch >= 1, ErrKind::validation, "train-diffusion: batch must be >= 1");
    check(opts.crop >= 1, ErrKind::validation, "train-diffusion: crop must be >= 1");
    check(opts.crop % net_cfg.down_product() == 0, ErrKind::validation,
          "train-diffusion: crop " + std::to_string(opts.crop) + " not divisible by " +
              std::to_string(net_cfg.down_product()));

    LatentFile lf = latents_load(latents_path);
    check(lf.count > 0, ErrKind::data, "train-diffusion: empty latent dataset " + latents_path);
    check(lf.T >= opts.crop, ErrKind::data,
          "train-diffusion: latent length " + std::to_string(lf.T) + " shorter than crop " +
              std::to_string(opts.crop));
    if (opts.mode == DiffusionMode::mixture)
        check(lf.K == 1, ErrKind::data,
              "train-diffusion: mixture mode expects a K=1 latent file, got K=" +
                  std::to_string(lf.K));

    int64_t want_in = opts.mode == DiffusionMode::multi_source ? (int64_t)lf.K * lf.C : lf.C;
    check(net_cfg.in_channels == want_in, ErrKind::validation,
          "train-diffusion: net in_channels " + std::to_string(net_cfg.in_channels) +
              " != required " + std::to_string(want_in) + " for mode " +
              diffusion_mode_name(opts.mode));

    std::vector<double> mean, sd;
    channel_stats(lf, mean, sd);
    // normalize in place: per-channel zero mean, std sigma_data
    {
        int64_t KC = (int64_t)lf.K * lf.C, T = lf.T;
        for (int64_t i = 0; i < lf.count; i++) {
            float* it = lf.item(i);
            for (int64_t c = 0; c < KC; c++) {
                float m = (float)mean[c];
                float s = (float)(dcfg.sigma_data / std::max(sd[c], 1e-6));
                float* row = it + c * T;
                for (int64_t t = 0; t < T; t++) row[t] = (row[t] - m) * s;
            }
        }
    }

    std::filesystem::create_directories(out_dir);
    int n_models = opts.mode == DiffusionMode::independent ? lf.K : 1;
    int K_model = opts.mode == DiffusionMode::multi_source ? lf.K : 1;

    std::vector<ModelSlot> models((size_t)n_models);
    for (int k = 0; k < n_models; k++) {
        auto& m = models[(size_t)k];
        m.net.reset(new UNet<float>(net_cfg, seed + (uint64_t)k * 1000003ull));
        m.opt.reset(new Adam<float>(opts.lr, 0.9, 0.999));
        if (opts.mode == DiffusionMode::independent) {
            m.source_index = k;
            m.ckpt_path = out_dir + "/diffusion_" + std::to_string(k) + ".ckpt";
        } else {
            m.ckpt_path = out_dir + "/diffusion.ckpt";
        }
    }

    Rng master(seed);
    Rng batch_rng = master.stream("batch");
    Rng sigma_rng = master.stream("sigma");
    Rng eps_rng = master.stream("eps");

    DiffTrainStats st;
    st.steps = steps;
    st.csv_path = out_dir + "/diffusion_loss.csv";
    std::ofstream csv(st.csv_path);
    check(csv.good(), ErrKind::io, "train-diffusion: cannot write " + st.csv_path);
    csv << "step,loss,ema\n";

    int64_t B = opts.batch, Tc = opts.crop, T = lf.T;
    const double ema_alpha = 0.02;
    double ema = 0;
    auto t0 = std::chrono::steady_clock::now();

    for (int64_t step = 0; step < steps; step++) {
        double step_loss = 0;
        for (int k = 0; k < n_models; k++) {
            auto& m = models[(size_t)k];
            int64_t in = net_cfg.in_channels;
            int64_t ch0 = opts.mode == DiffusionMode::independent ? (int64_t)k * lf.C : 0;

            TenF z0({B, in, Tc});
            for (int64_t b = 0; b < B; b++) {
                int64_t item = batch_rng.randint(lf.count);
                int64_t off = batch_rng.randint(T - Tc + 1);
                const float* src = lf.item(item) + ch0 * T;
                for (int64_t c = 0; c < in; c++)
                    std::copy(src + c * T + off, src + c * T + off + Tc,
                              z0.v.begin() + (b * in + c) * Tc);
            }
            std::vector<double> sigmas((size_t)B);
            for (auto& s : sigmas) s = sigma_rng.uniform(dcfg.sigma_train_min, dcfg.sigma_train_max);
            TenF eps({B, in, Tc});
            eps_rng.fill_normal(eps.v.data(), eps.numel());

            Tape<float> tp;
            auto* loss = edm_loss_graph(tp, *m.net, z0, eps, sigmas, dcfg.sigma_data);
            double lv = (double)loss->val.v[0];
            if (!std::isfinite(lv))
                fail_numeric("train-diffusion: non-finite loss at step " + std::to_string(step));
            step_loss += lv;

            m.net->ps.zero_grad();
            tp.backward(loss);
            m.opt->step(m.net->ps, opts.lr, opts.grad_clip);
        }
        step_loss /= n_models;

        ema = step == 0 ? step_loss : (1.0 - ema_alpha) * ema + ema_alpha * step_loss;
        if (step == 0) st.first_loss = step_loss;
        if (step == 100) st.ema100 = ema;
        st.final_loss = step_loss;
        st.ema_final = ema;
        csv << step << "," << step_loss << "," << ema << "\n";

        if (verbose && (step % 100 == 0 || step == steps - 1)) {
            double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("[diffusion] step %lld/%lld loss %.5f ema %.5f (%.0fs)\n", (long long)step,
                        (long long)steps, step_loss, ema, el);
            std::fflush(stdout);
        }
    }
    if (steps > 0 && steps <= 100) st.ema100 = ema;

    for (auto& m : models) {
        int64_t ch0 = m.source_index >= 0 ? (int64_t)m.source_index * lf.C : 0;
        save_ckpt(m, dcfg, opts, K_model, lf.C, steps, mean, sd, ch0);
        st.ckpt_paths.push_back(m.ckpt_path);
    }
    csv.close();
    return st;
}

}  // namespace ms
