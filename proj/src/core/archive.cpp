#include "core/archive.h"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/error.h"

namespace ms {

static const char MAGIC[8] = {'M', 'S', 'L', 'D', 'M', 'A', 'R', '1'};

const TenF* Archive::find(const std::string& name) const {
    for (auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

TenF& Archive::get(const std::string& name) {
    for (auto& [n, t] : tensors)
        if (n == name) return t;
    fail_data("archive: missing tensor " + name);
}

void Archive::put(const std::string& name, TenF t) {
    for (auto& [n, tt] : tensors)
        if (n == name) { tt = std::move(t); return; }
    tensors.emplace_back(name, std::move(t));
}

namespace {
template <typename T>
void put(std::ofstream& f, T v) { f.write((const char*)&v, sizeof(T)); }
template <typename T>
T get(std::ifstream& f) { T v{}; f.read((char*)&v, sizeof(T)); return v; }
}  // namespace

void archive_save(const std::string& path, const Archive& a) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), ErrKind::io, "cannot open for write: " + path);
    f.write(MAGIC, 8);
    put<uint32_t>(f, (uint32_t)(1 + a.tensors.size()));
    // config entry
    const std::string cname = "config.json";
    put<uint32_t>(f, (uint32_t)cname.size());
    f.write(cname.data(), cname.size());
    put<uint8_t>(f, 0);
    put<uint64_t>(f, a.config.size());
    f.write(a.config.data(), a.config.size());
    for (auto& [name, t] : a.tensors) {
        put<uint32_t>(f, (uint32_t)name.size());
        f.write(name.data(), name.size());
        put<uint8_t>(f, 1);
        put<uint32_t>(f, (uint32_t)t.shape.size());
        for (auto d : t.shape) put<uint64_t>(f, (uint64_t)d);
        f.write((const char*)t.data(), t.numel() * 4);
    }
    check(f.good(), ErrKind::io, "short write: " + path);
}

Archive archive_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), ErrKind::io, "cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    check(f.gcount() == 8 && std::memcmp(magic, MAGIC, 8) == 0, ErrKind::data,
          "not a checkpoint archive: " + path);
    uint32_t count = get<uint32_t>(f);
    Archive a;
    for (uint32_t i = 0; i < count; i++) {
        uint32_t nl = get<uint32_t>(f);
        check(nl < 4096, ErrKind::data, "archive: absurd name length");
        std::string name(nl, '\0');
        f.read(name.data(), nl);
        uint8_t kind = get<uint8_t>(f);
        if (kind == 0) {
            uint64_t sz = get<uint64_t>(f);
            std::string bytes(sz, '\0');
            f.read(bytes.data(), (std::streamsize)sz);
            check(name == "config.json", ErrKind::data, "archive: unexpected raw entry " + name);
            a.config = std::move(bytes);
        } else if (kind == 1) {
            uint32_t nd = get<uint32_t>(f);
            check(nd <= 8, ErrKind::data, "archive: absurd tensor rank");
            std::vector<int64_t> shape(nd);
            for (auto& d : shape) d = (int64_t)get<uint64_t>(f);
            TenF t(shape);
            f.read((char*)t.data(), t.numel() * 4);
            a.tensors.emplace_back(std::move(name), std::move(t));
        } else {
            fail_data("archive: unknown entry kind");
        }
        check(f.good(), ErrKind::data, "archive truncated: " + path);
    }
    return a;
}

}  // namespace ms
