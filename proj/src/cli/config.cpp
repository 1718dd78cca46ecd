#include "cli/config.h"

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <unistd.h>

#include "core/error.h"

namespace ms {

using nlohmann::json;

nlohmann::json preset_config(const std::string& preset) {
    VaeConfig v;
    DiffusionConfig d;
    UNetConfig u;  // in_channels filled at model build time
    double diff_lr = 1e-4;
    int64_t diff_batch = 16, diff_crop = 64;
    if (preset == "desk") {
        // struct defaults
    } else if (preset == "paper-faithful") {
        v = vae_paper();
        u = unet_paper(u.in_channels);
        d.n_steps = 150;
        d.s_churn = 20.0;
        diff_lr = 2e-5;
        diff_crop = 256;
    } else {
        fail_validation("unknown preset \"" + preset + "\" (desk | paper-faithful)");
    }

    json mels = json::array();
    for (auto& m : v.mel_configs) mels.push_back({m.nfft, m.hop, m.nmels});
    json j;
    j["sample_rate"] = v.sample_rate;
    j["vae"] = {{"latent_channels", v.latent_channels},
                {"strides", v.strides},
                {"base_channels", v.base_channels},
                {"mel_configs", mels},
                {"lw_mel", v.lw_mel},
                {"lw_feature", v.lw_feature},
                {"lw_adv", v.lw_adv},
                {"lw_kl", v.lw_kl},
                {"adversarial", v.adversarial},
                {"lr", v.lr},
                {"batch", v.batch},
                {"segment", v.segment},
                {"grad_clip", v.grad_clip}};
    j["diff"] = {{"sigma_data", d.sigma_data},
                 {"sigma_train_min", d.sigma_train_min},
                 {"sigma_train_max", d.sigma_train_max},
                 {"s_churn", d.s_churn},
                 {"n_steps", d.n_steps},
                 {"sigma_min", d.sigma_min},
                 {"sigma_max", d.sigma_max},
                 {"rho", d.rho},
                 {"lr", diff_lr},
                 {"batch", diff_batch},
                 {"crop", diff_crop},
                 {"grad_clip", 5.0}};
    j["unet"] = {{"channels", u.channels}, {"down", u.down},
                 {"attn", u.attn},         {"heads", u.heads},
                 {"head_dim", u.head_dim}, {"emb_dim", u.emb_dim},
                 {"res_blocks", u.res_blocks}};
    return j;
}

void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& where) {
    check(patch.is_object(), ErrKind::validation, "config: " + where + " must be a JSON object");
    for (auto& [k, v] : patch.items()) {
        auto it = base.find(k);
        check(it != base.end(), ErrKind::validation, "config: unknown key \"" + where + k + "\"");
        if (it->is_object()) {
            merge_config(*it, v, where + k + ".");
        } else {
            check(!v.is_object(), ErrKind::validation,
                  "config: key \"" + where + k + "\" is a scalar, got an object");
            *it = v;
        }
    }
}

void apply_set(nlohmann::json& base, const std::string& kv) {
    auto eq = kv.find('=');
    check(eq != std::string::npos && eq > 0, ErrKind::validation,
          "--set expects key=value, got \"" + kv + "\"");
    std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
    json val;
    try {
        val = json::parse(raw);
    } catch (const json::exception&) {
        val = raw;  // bare string
    }
    // wrap into nested object along the dotted path, then merge for key checks
    json patch = val;
    for (auto pos = key.rfind('.'); pos != std::string::npos; pos = key.rfind('.')) {
        json outer;
        outer[key.substr(pos + 1)] = patch;
        patch = std::move(outer);
        key = key.substr(0, pos);
    }
    json top;
    top[key] = patch;
    merge_config(base, top, "");
}

nlohmann::json resolve_config(const std::string& preset, const std::string& config_path,
                              const std::vector<std::string>& sets) {
    json j = preset_config(preset);
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        check(f.good(), ErrKind::io, "cannot open config file " + config_path);
        json file;
        try {
            file = json::parse(f);
        } catch (const json::exception& e) {
            fail_io("config file " + config_path + ": " + e.what());
        }
        merge_config(j, file, "");
    }
    for (auto& s : sets) apply_set(j, s);
    return j;
}

VaeConfig vae_from_config(const nlohmann::json& j) {
    VaeConfig c;
    const json& v = j.at("vae");
    c.latent_channels = v.at("latent_channels").get<int64_t>();
    c.strides = v.at("strides").get<std::vector<int64_t>>();
    c.base_channels = v.at("base_channels").get<int64_t>();
    c.mel_configs.clear();
    for (auto& m : v.at("mel_configs")) {
        check(m.is_array() && m.size() == 3, ErrKind::validation,
              "config: vae.mel_configs entries are [nfft, hop, nmels]");
        c.mel_configs.push_back({m[0].get<int>(), m[1].get<int>(), m[2].get<int>()});
    }
    c.lw_mel = v.at("lw_mel").get<double>();
    c.lw_feature = v.at("lw_feature").get<double>();
    c.lw_adv = v.at("lw_adv").get<double>();
    c.lw_kl = v.at("lw_kl").get<double>();
    c.adversarial = v.at("adversarial").get<bool>();
    c.lr = v.at("lr").get<double>();
    c.batch = v.at("batch").get<int64_t>();
    c.segment = v.at("segment").get<int64_t>();
    c.grad_clip = v.at("grad_clip").get<double>();
    c.sample_rate = j.at("sample_rate").get<int64_t>();
    c.validate();
    return c;
}

DiffusionConfig diff_from_config(const nlohmann::json& j) {
    DiffusionConfig d;
    const json& v = j.at("diff");
    d.sigma_data = v.at("sigma_data").get<double>();
    d.sigma_train_min = v.at("sigma_train_min").get<double>();
    d.sigma_train_max = v.at("sigma_train_max").get<double>();
    d.s_churn = v.at("s_churn").get<double>();
    d.n_steps = v.at("n_steps").get<int64_t>();
    d.sigma_min = v.at("sigma_min").get<double>();
    d.sigma_max = v.at("sigma_max").get<double>();
    d.rho = v.at("rho").get<double>();
    return d;
}

UNetConfig unet_from_config(const nlohmann::json& j, int64_t in_channels) {
    UNetConfig u;
    const json& v = j.at("unet");
    u.in_channels = in_channels;
    u.channels = v.at("channels").get<std::vector<int64_t>>();
    u.down = v.at("down").get<std::vector<int64_t>>();
    u.attn = v.at("attn").get<std::vector<uint8_t>>();
    u.heads = v.at("heads").get<int64_t>();
    u.head_dim = v.at("head_dim").get<int64_t>();
    u.emb_dim = v.at("emb_dim").get<int64_t>();
    u.res_blocks = v.at("res_blocks").get<int64_t>();
    u.validate();
    return u;
}

DiffTrainOpts train_opts_from_config(const nlohmann::json& j, DiffusionMode mode) {
    DiffTrainOpts o;
    const json& v = j.at("diff");
    o.mode = mode;
    o.lr = v.at("lr").get<double>();
    o.batch = v.at("batch").get<int64_t>();
    o.crop = v.at("crop").get<int64_t>();
    o.grad_clip = v.at("grad_clip").get<double>();
    return o;
}

LockFile::LockFile(const std::string& target) : path(target + ".lock") {
    int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST)
            fail_io("lock file " + path + " exists: another training run owns " + target +
                    " (delete the lock if that run is dead)");
        fail_io("cannot create lock file " + path + ": " + std::strerror(errno));
    }
    ::close(fd);
}

LockFile::~LockFile() { ::unlink(path.c_str()); }

}  // namespace ms
