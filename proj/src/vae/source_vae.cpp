#include "vae/source_vae.h"

#include <cmath>
#include <fstream>

#include "core/archive.h"
#include "core/fft.h"
#include <json.hpp>

namespace ms {

using nlohmann::json;

void VaeConfig::validate() const {
    check(latent_channels >= 1, ErrKind::validation, "vae: latent_channels must be >= 1");
    check(base_channels >= 1, ErrKind::validation, "vae: base_channels must be >= 1");
    check(!strides.empty(), ErrKind::validation, "vae: stride schedule empty");
    for (auto s : strides) check(s >= 1, ErrKind::validation, "vae: strides must be positive");
    check(lw_mel >= 0 && lw_feature >= 0 && lw_adv >= 0 && lw_kl >= 0, ErrKind::validation,
          "vae: loss weights must be non-negative");
    check(sample_rate > 0, ErrKind::validation, "vae: bad sample_rate");
    check(!mel_configs.empty(), ErrKind::validation, "vae: no mel configs");
    for (auto& m : mel_configs) {
        check(is_pow2(m.nfft), ErrKind::validation, "vae: mel nfft must be a power of two");
        check(m.hop > 0 && m.nmels > 0, ErrKind::validation, "vae: bad mel config");
    }
    check(batch >= 1 && segment >= 1, ErrKind::validation, "vae: bad training config");
}

VaeConfig vae_desk() { return VaeConfig{}; }

VaeConfig vae_paper() {
    VaeConfig c;
    c.latent_channels = 80;
    c.strides = {2, 4, 5, 8};  // D = 320
    c.base_channels = 64;
    c.mel_configs = {{2048, 512, 320}, {1024, 256, 160}, {512, 128, 80}, {256, 64, 40},
                     {128, 32, 20},    {64, 16, 10},     {32, 8, 5}};
    c.lw_mel = 15;
    c.lw_feature = 2;
    c.lw_adv = 1;
    c.lw_kl = 10;
    c.adversarial = true;
    c.sample_rate = 22050;
    c.lr = 1e-4;
    c.batch = 28;
    c.segment = 22050;
    return c;
}

std::string vae_config_json(const VaeConfig& c) {
    json j;
    j["latent_channels"] = c.latent_channels;
    j["strides"] = c.strides;
    j["base_channels"] = c.base_channels;
    json mels = json::array();
    for (auto& m : c.mel_configs) mels.push_back({m.nfft, m.hop, m.nmels});
    j["mel_configs"] = mels;
    j["loss_weights"] = {c.lw_mel, c.lw_feature, c.lw_adv, c.lw_kl};
    j["adversarial"] = c.adversarial;
    j["sample_rate"] = c.sample_rate;
    j["lr"] = c.lr;
    j["batch"] = c.batch;
    j["segment"] = c.segment;
    j["grad_clip"] = c.grad_clip;
    return j.dump();
}

VaeConfig vae_config_parse(const std::string& text) {
    VaeConfig c;
    json j = json::parse(text);
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    if (j.contains("strides")) c.strides = j["strides"].get<std::vector<int64_t>>();
    c.base_channels = j.value("base_channels", c.base_channels);
    if (j.contains("mel_configs")) {
        c.mel_configs.clear();
        for (auto& m : j["mel_configs"])
            c.mel_configs.push_back({m.at(0).get<int>(), m.at(1).get<int>(), m.at(2).get<int>()});
    }
    if (j.contains("loss_weights")) {
        auto& w = j["loss_weights"];
        c.lw_mel = w.at(0);
        c.lw_feature = w.at(1);
        c.lw_adv = w.at(2);
        c.lw_kl = w.at(3);
    }
    c.adversarial = j.value("adversarial", c.adversarial);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.segment = j.value("segment", c.segment);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.validate();
    return c;
}

std::vector<float> pad_to_multiple(const std::vector<float>& x, int64_t d) {
    int64_t n = (int64_t)x.size();
    int64_t t = (n + d - 1) / d;
    std::vector<float> out(t * d, 0.f);
    std::copy(x.begin(), x.end(), out.begin());
    return out;
}

Posterior vae_encode(SourceVae<float>& m, const std::vector<float>& wav, int64_t sample_rate) {
    check(!wav.empty(), ErrKind::validation, "encode: empty input");
    check(sample_rate == 0 || sample_rate == m.cfg.sample_rate, ErrKind::validation,
          "encode: sample rate mismatch");
    std::vector<float> x = pad_to_multiple(wav, m.cfg.hop());
    int64_t n = (int64_t)x.size();
    Tape<float> tp;
    TenF xt({1, 1, n});
    xt.v = x;
    auto [mu, lv] = m.encode_graph(tp, tp.leaf(std::move(xt)));
    int64_t C = m.cfg.latent_channels, T = mu->val.shape[2];
    Posterior p;
    p.mean = TenF({C, T});
    p.log_var = TenF({C, T});
    p.mean.v = mu->val.v;
    p.log_var.v = lv->val.v;
    return p;
}

TenF vae_latent_features(SourceVae<float>& m, const std::vector<float>& wav, int64_t sample_rate) {
    return vae_encode(m, wav, sample_rate).mean;
}

std::vector<float> vae_decode(SourceVae<float>& m, const TenF& z) {
    check(z.ndim() == 2 && z.shape[0] == m.cfg.latent_channels, ErrKind::validation,
          "decode: expected [C,T] latent with C matching the model");
    Tape<float> tp;
    TenF zt({1, z.shape[0], z.shape[1]});
    zt.v = z.v;
    auto* y = m.decode_graph(tp, tp.leaf(std::move(zt)));
    return y->val.v;
}

TenF vae_sample_posterior(const Posterior& p, Rng& rng) {
    check(p.mean.shape == p.log_var.shape, ErrKind::validation, "posterior: shape mismatch");
    TenF z(p.mean.shape);
    for (int64_t i = 0; i < z.numel(); i++)
        z.v[i] = p.mean.v[i] + std::exp(0.5f * p.log_var.v[i]) * (float)rng.normal();
    return z;
}

double kl_loss(const Posterior& p) {
    check(p.mean.shape == p.log_var.shape, ErrKind::validation, "posterior: shape mismatch");
    double acc = 0;
    for (int64_t i = 0; i < p.mean.numel(); i++) {
        double mu = p.mean.v[i], lv = p.log_var.v[i];
        acc += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
    return acc / (double)p.mean.numel();
}

double mel_loss(const std::vector<float>& a, const std::vector<float>& b,
                const std::vector<MelConfig>& cfgs, int64_t sample_rate) {
    check(a.size() == b.size(), ErrKind::validation, "mel_loss: length mismatch");
    return mel_distance(a.data(), b.data(), (int64_t)a.size(), (int)sample_rate, cfgs);
}

void vae_save(const SourceVae<float>& m, const std::string& path, const ParamStore<float>* disc_ps) {
    Archive a;
    json j;
    j["kind"] = "vae";
    j["step"] = m.step;
    j["config"] = json::parse(vae_config_json(m.cfg));
    a.config = j.dump();
    m.ps.to_archive(a);
    if (disc_ps) disc_ps->to_archive(a);
    archive_save(path, a);
}

std::unique_ptr<SourceVae<float>> vae_load(const std::string& path) {
    Archive a = archive_load(path);
    json j = json::parse(a.config);
    check(j.value("kind", "") == "vae", ErrKind::data, "not a vae checkpoint: " + path);
    VaeConfig cfg = vae_config_parse(j["config"].dump());
    auto m = std::make_unique<SourceVae<float>>(cfg);
    m->ps.from_archive(a);
    m->step = j.value("step", 0);
    return m;
}

}  // namespace ms
