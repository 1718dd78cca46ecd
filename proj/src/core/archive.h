#pragma once
#include <string>
#include <vector>

#include "core/tensor.h"

namespace ms {

// checkpoint container: config json + named float32 tensors.
// layout: magic "MSLDMAR1", u32 entry count, then per entry
//   u32 name_len, name bytes, u8 kind (0 = raw bytes, 1 = f32 tensor),
//   kind 0: u64 size + bytes; kind 1: u32 ndim, u64 dims[], f32 data.
// all little-endian.
struct Archive {
    std::string config;  // json text, stored under the reserved name "config.json"
    std::vector<std::pair<std::string, TenF>> tensors;

    const TenF* find(const std::string& name) const;
    TenF& get(const std::string& name);
    void put(const std::string& name, TenF t);
};

void archive_save(const std::string& path, const Archive& a);
Archive archive_load(const std::string& path);

}  // namespace ms
