#include "diffusion/unet.h"

#include <json.hpp>

namespace ms {

using nlohmann::json;

void UNetConfig::validate() const {
    check(in_channels >= 1, ErrKind::validation, "unet: in_channels must be >= 1");
    check(!channels.empty(), ErrKind::validation, "unet: no blocks");
    check(channels.size() == down.size() && channels.size() == attn.size(), ErrKind::validation,
          "unet: channels/down/attn lists must have equal length");
    for (auto c : channels) check(c >= 1, ErrKind::validation, "unet: bad channel count");
    for (auto d : down) check(d >= 1, ErrKind::validation, "unet: downsample factors must be >= 1");
    check(heads >= 1 && head_dim >= 1, ErrKind::validation, "unet: bad attention dims");
    check(emb_dim >= 2, ErrKind::validation, "unet: emb_dim too small");
    check(res_blocks >= 1, ErrKind::validation, "unet: res_blocks must be >= 1");
}

UNetConfig unet_desk(int64_t in_channels) {
    UNetConfig c;
    c.in_channels = in_channels;
    return c;
}

UNetConfig unet_paper(int64_t in_channels) {
    UNetConfig c;
    c.in_channels = in_channels;
    c.channels = {1024, 2048, 4096, 4096, 4096, 4096};
    c.down = {1, 1, 2, 1, 1, 2};
    c.attn = {0, 1, 1, 1, 1, 1};
    c.heads = 12;
    c.head_dim = 64;
    c.emb_dim = 512;
    c.res_blocks = 2;
    return c;
}

std::string unet_config_json(const UNetConfig& c) {
    json j;
    j["in_channels"] = c.in_channels;
    j["channels"] = c.channels;
    j["down"] = c.down;
    j["attn"] = c.attn;
    j["heads"] = c.heads;
    j["head_dim"] = c.head_dim;
    j["emb_dim"] = c.emb_dim;
    j["res_blocks"] = c.res_blocks;
    return j.dump();
}

UNetConfig unet_config_parse(const std::string& text) {
    UNetConfig c;
    json j = json::parse(text);
    c.in_channels = j.value("in_channels", c.in_channels);
    if (j.contains("channels")) c.channels = j["channels"].get<std::vector<int64_t>>();
    if (j.contains("down")) c.down = j["down"].get<std::vector<int64_t>>();
    if (j.contains("attn")) c.attn = j["attn"].get<std::vector<uint8_t>>();
    c.heads = j.value("heads", c.heads);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.emb_dim = j.value("emb_dim", c.emb_dim);
    c.res_blocks = j.value("res_blocks", c.res_blocks);
    c.validate();
    return c;
}

int64_t unet_param_count(const UNetConfig& cfg) {
    UNet<float> net(cfg);
    return net.ps.count();
}

}  // namespace ms
