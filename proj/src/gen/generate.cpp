#include "gen/generate.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/archive.h"
#include "core/wav.h"
#include "vae/source_vae.h"

namespace ms {

using nlohmann::json;

DiffCkpt diff_ckpt_load(const std::string& path) {
    Archive a = archive_load(path);
    json j = json::parse(a.config);
    check(j.value("kind", "") == std::string("diffusion"), ErrKind::data,
          "not a diffusion checkpoint: " + path);
    DiffCkpt ck;
    ck.mode = j.at("mode").get<std::string>();
    ck.K = j.at("K").get<int>();
    ck.C = j.at("C").get<int>();
    ck.step = j.value("step", 0);
    ck.source_index = j.value("source_index", -1);
    ck.diff.sigma_data = j.at("sigma_data").get<double>();
    auto& s = j.at("schedule");
    ck.diff.n_steps = s.at("n_steps").get<int64_t>();
    ck.diff.sigma_min = s.at("sigma_min").get<double>();
    ck.diff.sigma_max = s.at("sigma_max").get<double>();
    ck.diff.rho = s.at("rho").get<double>();
    ck.diff.s_churn = j.value("s_churn", 0.0);
    ck.diff.K = ck.K;
    ck.diff.C = ck.C;

    UNetConfig nc = unet_config_parse(j.at("unet").dump());
    ck.net = std::make_shared<UNet<float>>(nc);
    ck.net->ps.from_archive(a);

    const TenF* nm = a.find("norm.mean");
    const TenF* ns = a.find("norm.std");
    check(nm && ns, ErrKind::data, "checkpoint missing normalization stats: " + path);
    ck.norm_mean = *nm;
    ck.norm_std = *ns;
    check(ck.norm_mean.numel() == nc.in_channels && ck.norm_std.numel() == nc.in_channels,
          ErrKind::data, "normalization stats shape mismatch: " + path);
    return ck;
}

TenF denormalize(const TenF& z, const DiffCkpt& ck) {
    TenF out = z;
    int64_t ch = z.shape.size() == 3 ? z.shape[1] : z.shape[0];
    check(ch == ck.norm_mean.numel(), ErrKind::validation, "denormalize: channel mismatch");
    int64_t B = z.shape.size() == 3 ? z.shape[0] : 1;
    int64_t T = z.shape.back();
    for (int64_t b = 0; b < B; b++)
        for (int64_t c = 0; c < ch; c++) {
            float sc = (float)((double)ck.norm_std.v[c] / ck.diff.sigma_data);
            float m = ck.norm_mean.v[c];
            float* row = out.data() + (b * ch + c) * T;
            for (int64_t t = 0; t < T; t++) row[t] = row[t] * sc + m;
        }
    return out;
}

void impute_step(TenF& z, ImputationSpec& spec, double sigma_hat) {
    check(sigma_hat >= 0, ErrKind::validation, "impute: sigma_hat must be >= 0");
    check(!spec.given.empty(), ErrKind::validation, "impute: empty given set");
    int64_t ch = z.shape.size() == 3 ? z.shape[1] : z.shape[0];
    int64_t B = z.shape.size() == 3 ? z.shape[0] : 1;
    int64_t T = z.shape.back();
    check(ch == (int64_t)spec.K * spec.C, ErrKind::validation, "impute: channel count mismatch");
    check(spec.z_given.shape.size() == 2 && spec.z_given.shape[0] == ch &&
              spec.z_given.shape[1] == T,
          ErrKind::validation, "impute: given latent shape mismatch");
    for (int g : spec.given)
        check(g >= 0 && g < spec.K, ErrKind::validation,
              "impute: source index " + std::to_string(g) + " out of range");
    for (int64_t b = 0; b < B; b++)
        for (int g : spec.given)
            for (int64_t c = (int64_t)g * spec.C; c < (int64_t)(g + 1) * spec.C; c++) {
                const float* src = spec.z_given.data() + c * T;
                float* dst = z.data() + (b * ch + c) * T;
                for (int64_t t = 0; t < T; t++)
                    dst[t] = src[t] + (float)(sigma_hat * spec.rng.normal());
            }
}

namespace {

// batched no-grad wrapper around the U-Net
PrecondDenoiser net_denoiser(UNet<float>& net, double sigma_data) {
    return PrecondDenoiser(
        [&net](const TenF& x, double c_noise) {
            Tape<float> tp;
            std::vector<double> cn((size_t)x.shape[0], c_noise);
            return net.fwd(tp, tp.leaf(TenF(x)), cn)->val;
        },
        sigma_data);
}

int64_t round_up(int64_t v, int64_t d) { return (v + d - 1) / d * d; }

std::vector<float> decode_trim(SourceVae<float>& vae, const TenF& z, int64_t n_out) {
    std::vector<float> y = vae_decode(vae, z);
    if ((int64_t)y.size() > n_out) y.resize((size_t)n_out);
    return y;
}

TenF slice_item(const TenF& zb, int64_t b, int64_t ch0, int64_t nch) {
    int64_t T = zb.shape.back(), ch = zb.shape[1];
    TenF z({nch, T});
    std::copy(zb.data() + (b * ch + ch0) * T, zb.data() + (b * ch + ch0 + nch) * T, z.data());
    return z;
}

void fill_meta(GenMeta* meta, const DiffCkpt& ck, const SigmaSchedule& sch, double churn) {
    if (!meta) return;
    meta->mode = ck.mode;
    meta->n_steps = sch.n_steps;
    meta->sigma_min = sch.sigma_min;
    meta->sigma_max = sch.sigma_max;
    meta->rho = sch.rho;
    meta->s_churn = churn;
}

}  // namespace

std::vector<GenItem> generate_total(const std::vector<std::string>& diff_ckpts,
                                    const std::string& vae_ckpt, double duration_s,
                                    uint64_t seed, int count, const SampleOverrides& ov,
                                    GenMeta* meta, bool verbose) {
    check(!diff_ckpts.empty(), ErrKind::validation, "generate: no diffusion checkpoint given");
    check(count >= 1, ErrKind::validation, "generate: count must be >= 1");
    check(duration_s > 0, ErrKind::validation, "generate: duration must be positive");

    auto vae = vae_load(vae_ckpt);
    std::vector<DiffCkpt> cks;
    for (auto& p : diff_ckpts) cks.push_back(diff_ckpt_load(p));
    for (auto& ck : cks) {
        check(ck.mode == cks[0].mode, ErrKind::validation, "generate: mixed checkpoint modes");
        check(ck.C == (int)vae->cfg.latent_channels, ErrKind::validation,
              "generate: checkpoint C=" + std::to_string(ck.C) + " incompatible with vae C=" +
                  std::to_string(vae->cfg.latent_channels));
    }
    if (cks[0].mode == "independent") {
        std::sort(cks.begin(), cks.end(),
                  [](const DiffCkpt& a, const DiffCkpt& b) { return a.source_index < b.source_index; });
        for (size_t k = 0; k < cks.size(); k++)
            check(cks[k].source_index == (int)k, ErrKind::validation,
                  "generate: independent checkpoints must cover source indices 0..K-1");
    } else {
        check(cks.size() == 1, ErrKind::validation,
              "generate: mode " + cks[0].mode + " takes exactly one checkpoint");
    }

    int sr = (int)vae->cfg.sample_rate;
    int64_t D = vae->cfg.hop();
    int64_t n_out = (int64_t)std::llround(duration_s * sr);
    int64_t T_req = (n_out + D - 1) / D;
    int64_t dp = cks[0].net->cfg.down_product();
    int64_t T = round_up(T_req, dp);

    const DiffCkpt& c0 = cks[0];
    SigmaSchedule sch = karras_schedule(ov.n_steps >= 0 ? ov.n_steps : c0.diff.n_steps,
                                        c0.diff.sigma_min, c0.diff.sigma_max, c0.diff.rho);
    double churn = ov.s_churn >= 0 ? ov.s_churn : c0.diff.s_churn;
    fill_meta(meta, c0, sch, churn);

    Rng master(seed);
    std::vector<GenItem> items((size_t)count);
    for (auto& it : items) it.mixture.sample_rate = sr;

    auto decode_sources = [&](const TenF& zb, int nsrc, bool as_stems) {
        for (int64_t b = 0; b < count; b++) {
            GenItem& it = items[(size_t)b];
            for (int k = 0; k < nsrc; k++) {
                TenF z = slice_item(zb, b, (int64_t)k * c0.C, c0.C);
                std::vector<float> y = decode_trim(*vae, z, n_out);
                if (as_stems) {
                    it.stems.push_back({std::move(y), sr});
                } else {
                    it.mixture.samples = std::move(y);
                }
            }
        }
    };

    if (c0.mode == "multi-source") {
        auto den = net_denoiser(*c0.net, c0.diff.sigma_data);
        Rng srng = master.stream("sample");
        TenF zb = sample(den, {count, (int64_t)c0.K * c0.C, T}, sch, churn, srng);
        zb = denormalize(zb, c0);
        decode_sources(zb, c0.K, true);
    } else if (c0.mode == "independent") {
        for (size_t k = 0; k < cks.size(); k++) {
            auto den = net_denoiser(*cks[k].net, cks[k].diff.sigma_data);
            Rng srng = master.stream("sample", (uint64_t)k);
            TenF zb = sample(den, {count, (int64_t)cks[k].C, T}, sch, churn, srng);
            zb = denormalize(zb, cks[k]);
            for (int64_t b = 0; b < count; b++) {
                TenF z = slice_item(zb, b, 0, cks[k].C);
                items[(size_t)b].stems.push_back({decode_trim(*vae, z, n_out), sr});
            }
            if (verbose) {
                std::printf("[generate] source %zu/%zu done\n", k + 1, cks.size());
                std::fflush(stdout);
            }
        }
    } else {  // mixture
        auto den = net_denoiser(*c0.net, c0.diff.sigma_data);
        Rng srng = master.stream("sample");
        TenF zb = sample(den, {count, (int64_t)c0.C, T}, sch, churn, srng);
        zb = denormalize(zb, c0);
        decode_sources(zb, 1, false);
    }

    // mixture = exact elementwise sum of returned stems
    for (auto& it : items) {
        if (it.stems.empty()) continue;
        it.mixture.samples.assign((size_t)n_out, 0.f);
        for (auto& s : it.stems)
            for (int64_t i = 0; i < n_out; i++) it.mixture.samples[(size_t)i] += s.samples[(size_t)i];
    }
    return items;
}

GenItem generate_partial(const SourceSet& track, const std::vector<int>& given_idx,
                         const std::string& diff_ckpt, const std::string& vae_ckpt,
                         uint64_t seed, const SampleOverrides& ov, GenMeta* meta, bool verbose) {
    check(!given_idx.empty() && (int)given_idx.size() < kNumSources, ErrKind::validation,
          "generate-partial: given set must be a non-empty proper subset");
    for (int g : given_idx)
        check(g >= 0 && g < kNumSources, ErrKind::validation,
              "generate-partial: bad source index " + std::to_string(g));

    auto vae = vae_load(vae_ckpt);
    DiffCkpt ck = diff_ckpt_load(diff_ckpt);
    check(ck.mode == "multi-source", ErrKind::validation,
          "generate-partial: requires a multi-source checkpoint, got mode " + ck.mode);
    check(ck.C == (int)vae->cfg.latent_channels, ErrKind::validation,
          "generate-partial: checkpoint C incompatible with vae");
    check(track.sample_rate == (int)vae->cfg.sample_rate, ErrKind::data,
          "generate-partial: track sample rate mismatch");

    int sr = track.sample_rate;
    int64_t n_out = track.length;
    int64_t KC = (int64_t)ck.K * ck.C;
    int64_t dp = ck.net->cfg.down_product();

    // encode the given stems and place normalized latents at their channel blocks
    int64_t T = 0;
    TenF z_given;
    for (int g : given_idx) {
        TenF z = vae_latent_features(*vae, track.stems[(size_t)g].samples);
        if (T == 0) {
            T = round_up(z.shape[1], dp);
            z_given = TenF({KC, T});
        }
        for (int64_t c = 0; c < ck.C; c++) {
            int64_t row = (int64_t)g * ck.C + c;
            double m = ck.norm_mean.v[row], sd = ck.norm_std.v[row];
            float sc = (float)(ck.diff.sigma_data / std::max(sd, 1e-6));
            for (int64_t t = 0; t < z.shape[1]; t++)
                z_given.v[row * T + t] = (float)(((double)z.v[c * z.shape[1] + t] - m) * sc);
        }
    }

    SigmaSchedule sch = karras_schedule(ov.n_steps >= 0 ? ov.n_steps : ck.diff.n_steps,
                                        ck.diff.sigma_min, ck.diff.sigma_max, ck.diff.rho);
    double churn = ov.s_churn >= 0 ? ov.s_churn : ck.diff.s_churn;
    fill_meta(meta, ck, sch, churn);

    Rng master(seed);
    ImputationSpec spec;
    spec.given = given_idx;
    spec.K = ck.K;
    spec.C = ck.C;
    spec.z_given = std::move(z_given);
    spec.rng = master.stream("impute");

    auto den = net_denoiser(*ck.net, ck.diff.sigma_data);
    Rng srng = master.stream("sample");
    StepHook hook = [&spec](TenF& z, double sigma_hat, int64_t) { impute_step(z, spec, sigma_hat); };
    TenF zb = sample(den, {1, KC, T}, sch, churn, srng, hook);
    zb = denormalize(zb, ck);

    GenItem it;
    it.given = given_idx;
    it.mixture.sample_rate = sr;
    for (int k = 0; k < ck.K; k++) {
        bool is_given = std::find(given_idx.begin(), given_idx.end(), k) != given_idx.end();
        if (is_given) {
            it.stems.push_back(track.stems[(size_t)k]);  // original waveform, bit-exact
        } else {
            TenF z = slice_item(zb, 0, (int64_t)k * ck.C, ck.C);
            it.stems.push_back({decode_trim(*vae, z, n_out), sr});
        }
    }
    it.mixture.samples.assign((size_t)n_out, 0.f);
    for (auto& s : it.stems)
        for (int64_t i = 0; i < n_out && i < (int64_t)s.samples.size(); i++)
            it.mixture.samples[(size_t)i] += s.samples[(size_t)i];
    if (verbose) {
        std::printf("[generate-partial] done (%d given, %d generated)\n", (int)given_idx.size(),
                    ck.K - (int)given_idx.size());
        std::fflush(stdout);
    }
    return it;
}

void write_gen_items(const std::string& out_dir, const std::vector<GenItem>& items,
                     uint64_t seed, const GenMeta& meta) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (size_t i = 0; i < items.size(); i++) {
        const GenItem& it = items[i];
        std::string dir = out_dir + "/item_" + std::to_string(i);
        fs::create_directories(dir);
        for (size_t k = 0; k < it.stems.size(); k++)
            wav_write(dir + "/" + kInstruments[k] + ".wav", it.stems[k].samples.data(),
                      (int64_t)it.stems[k].samples.size(), it.stems[k].sample_rate);
        wav_write(dir + "/mixture.wav", it.mixture.samples.data(),
                  (int64_t)it.mixture.samples.size(), it.mixture.sample_rate);
        json j;
        j["seed"] = seed;
        j["item"] = i;
        j["mode"] = meta.mode;
        j["schedule"] = {{"n_steps", meta.n_steps},
                         {"sigma_min", meta.sigma_min},
                         {"sigma_max", meta.sigma_max},
                         {"rho", meta.rho}};
        j["s_churn"] = meta.s_churn;
        json given = json::array();
        for (int g : it.given) given.push_back(kInstruments[(size_t)g]);
        j["given"] = given;
        std::ofstream mf(dir + "/meta.json");
        check(mf.good(), ErrKind::io, "cannot write " + dir + "/meta.json");
        mf << j.dump(2) << "\n";
    }
}

}  // namespace ms
