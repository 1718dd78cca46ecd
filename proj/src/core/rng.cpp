#include "core/rng.h"

#include <cmath>

namespace ms {

static inline uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

static inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) { h ^= c; h *= 0x100000001b3ull; }
    return h;
}

static inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

Rng::Rng(uint64_t seed) : seed_(seed) {
    uint64_t x = seed;
    for (auto& si : s_) si = splitmix64(x);
}

Rng Rng::stream(std::string_view name) const {
    uint64_t x = seed_ ^ fnv1a(name);
    return Rng(splitmix64(x));
}

Rng Rng::stream(std::string_view name, uint64_t index) const {
    uint64_t x = seed_ ^ fnv1a(name) ^ (index * 0xD1B54A32D192ED03ull);
    return Rng(splitmix64(x));
}

uint64_t Rng::next_u64() {
    uint64_t r = rotl(s_[0] + s_[3], 23) + s_[0];
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return r;
}

double Rng::uniform() {
    return (double)(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double a, double b) { return a + (b - a) * uniform(); }

double Rng::normal() {
    if (has_spare_) { has_spare_ = false; return spare_; }
    double u1, u2;
    do { u1 = uniform(); } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

int64_t Rng::randint(int64_t n) {
    // rejection to kill modulo bias
    uint64_t un = (uint64_t)n;
    uint64_t lim = UINT64_MAX - UINT64_MAX % un;
    uint64_t r;
    do { r = next_u64(); } while (r >= lim);
    return (int64_t)(r % un);
}

void Rng::fill_normal(float* p, int64_t n) {
    for (int64_t i = 0; i < n; i++) p[i] = (float)normal();
}
void Rng::fill_normal(double* p, int64_t n) {
    for (int64_t i = 0; i < n; i++) p[i] = normal();
}

}  // namespace ms
