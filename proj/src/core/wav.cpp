#include "core/wav.h"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/error.h"

namespace ms {

namespace {
void put_u32(std::ofstream& f, uint32_t v) { f.write((const char*)&v, 4); }
void put_u16(std::ofstream& f, uint16_t v) { f.write((const char*)&v, 2); }

uint32_t get_u32(std::ifstream& f) { uint32_t v = 0; f.read((char*)&v, 4); return v; }
uint16_t get_u16(std::ifstream& f) { uint16_t v = 0; f.read((char*)&v, 2); return v; }
}  // namespace

void wav_write(const std::string& path, const float* samples, int64_t n, int sample_rate) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), ErrKind::io, "cannot open for write: " + path);
    uint32_t data_bytes = (uint32_t)(n * 4);
    f.write("RIFF", 4);
    put_u32(f, 36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    put_u32(f, 16);
    put_u16(f, 3);  // IEEE float
    put_u16(f, 1);  // mono
    put_u32(f, (uint32_t)sample_rate);
    put_u32(f, (uint32_t)sample_rate * 4);
    put_u16(f, 4);
    put_u16(f, 32);
    f.write("data", 4);
    put_u32(f, data_bytes);
    f.write((const char*)samples, data_bytes);
    check(f.good(), ErrKind::io, "short write: " + path);
}

Wav wav_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), ErrKind::io, "cannot open: " + path);
    char tag[5] = {0};
    f.read(tag, 4);
    check(std::memcmp(tag, "RIFF", 4) == 0, ErrKind::data, "not a RIFF file: " + path);
    get_u32(f);
    f.read(tag, 4);
    check(std::memcmp(tag, "WAVE", 4) == 0, ErrKind::data, "not a WAVE file: " + path);

    Wav w;
    uint16_t fmt = 0, channels = 0, bits = 0;
    bool have_fmt = false;
    while (f.read(tag, 4)) {
        uint32_t sz = get_u32(f);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            fmt = get_u16(f);
            channels = get_u16(f);
            w.sample_rate = (int)get_u32(f);
            get_u32(f); get_u16(f);
            bits = get_u16(f);
            if (sz > 16) f.seekg(sz - 16, std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            check(have_fmt, ErrKind::data, "data chunk before fmt: " + path);
            check(fmt == 3 && bits == 32 && channels == 1, ErrKind::data,
                  "unsupported wav encoding (need mono float32): " + path);
            w.samples.resize(sz / 4);
            f.read((char*)w.samples.data(), sz);
            check(f.gcount() == (std::streamsize)sz, ErrKind::data, "truncated wav data: " + path);
            return w;
        } else {
            f.seekg(sz + (sz & 1), std::ios::cur);
        }
    }
    fail_data("no data chunk: " + path);
}

}  // namespace ms
