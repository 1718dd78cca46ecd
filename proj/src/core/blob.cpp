#include "core/blob.h"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/error.h"

namespace ms {

namespace {
constexpr char LAT_MAGIC[8] = {'M', 'S', 'L', 'D', 'M', 'L', 'A', 'T'};
constexpr char EMB_MAGIC[8] = {'M', 'S', 'L', 'D', 'M', 'E', 'M', 'B'};

template <typename T>
void put(std::ofstream& f, T v) { f.write((const char*)&v, sizeof(T)); }
template <typename T>
T get(std::ifstream& f) { T v{}; f.read((char*)&v, sizeof(T)); return v; }
}  // namespace

void latents_save(const std::string& path, const LatentFile& lf) {
    check((int64_t)lf.data.size() == lf.count * lf.K * lf.C * lf.T, ErrKind::validation,
          "latents_save: size mismatch");
    std::ofstream f(path, std::ios::binary);
    check(f.good(), ErrKind::io, "cannot open for write: " + path);
    f.write(LAT_MAGIC, 8);
    put<uint32_t>(f, (uint32_t)lf.K);
    put<uint32_t>(f, (uint32_t)lf.C);
    put<uint32_t>(f, (uint32_t)lf.T);
    put<uint64_t>(f, (uint64_t)lf.count);
    f.write((const char*)lf.data.data(), (std::streamsize)(lf.data.size() * 4));
    check(f.good(), ErrKind::io, "short write: " + path);
}

LatentFile latents_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), ErrKind::io, "cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    check(f.gcount() == 8 && std::memcmp(magic, LAT_MAGIC, 8) == 0, ErrKind::data,
          "not a latent dataset: " + path);
    LatentFile lf;
    lf.K = (int)get<uint32_t>(f);
    lf.C = (int)get<uint32_t>(f);
    lf.T = (int)get<uint32_t>(f);
    lf.count = (int64_t)get<uint64_t>(f);
    int64_t n = lf.count * lf.K * lf.C * lf.T;
    lf.data.resize(n);
    f.read((char*)lf.data.data(), n * 4);
    check(f.gcount() == n * 4, ErrKind::data, "truncated latent dataset: " + path);
    return lf;
}

void emb_save(const std::string& path, const EmbFile& e) {
    check((int64_t)e.data.size() == e.count * e.d, ErrKind::validation, "emb_save: size mismatch");
    std::ofstream f(path, std::ios::binary);
    check(f.good(), ErrKind::io, "cannot open for write: " + path);
    f.write(EMB_MAGIC, 8);
    put<uint64_t>(f, (uint64_t)e.count);
    put<uint32_t>(f, (uint32_t)e.d);
    f.write((const char*)e.data.data(), (std::streamsize)(e.data.size() * 4));
    check(f.good(), ErrKind::io, "short write: " + path);
}

EmbFile emb_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), ErrKind::io, "cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    check(f.gcount() == 8 && std::memcmp(magic, EMB_MAGIC, 8) == 0, ErrKind::data,
          "not an embeddings file: " + path);
    EmbFile e;
    e.count = (int64_t)get<uint64_t>(f);
    e.d = (int)get<uint32_t>(f);
    int64_t n = e.count * e.d;
    e.data.resize(n);
    f.read((char*)e.data.data(), n * 4);
    check(f.gcount() == n * 4, ErrKind::data, "truncated embeddings file: " + path);
    return e;
}

}  // namespace ms
