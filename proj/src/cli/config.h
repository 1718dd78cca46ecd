#pragma once
#include <string>
#include <vector>

#include <json.hpp>

#include "diffusion/train_diffusion.h"
#include "diffusion/unet.h"
#include "vae/source_vae.h"

namespace ms {

// complete parameter set for a preset; every overridable key is present
nlohmann::json preset_config(const std::string& preset);  // "desk" | "paper-faithful"

// recursive merge; keys absent from base or with mismatched structure are rejected
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& where);

// "--set a.b=value"; value parsed as JSON, bare words fall back to strings
void apply_set(nlohmann::json& base, const std::string& kv);

// pure function of (preset, optional config file, --set overrides); later wins
nlohmann::json resolve_config(const std::string& preset, const std::string& config_path,
                              const std::vector<std::string>& sets);

VaeConfig vae_from_config(const nlohmann::json& j);
DiffusionConfig diff_from_config(const nlohmann::json& j);
UNetConfig unet_from_config(const nlohmann::json& j, int64_t in_channels);
DiffTrainOpts train_opts_from_config(const nlohmann::json& j, DiffusionMode mode);

// exclusive lock file guarding a training output; throws io error if held
struct LockFile {
    std::string path;
    explicit LockFile(const std::string& target);  // locks <target>.lock
    ~LockFile();
    LockFile(const LockFile&) = delete;
    LockFile& operator=(const LockFile&) = delete;
};

}  // namespace ms
