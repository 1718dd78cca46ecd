#pragma once
#include <cstdint>
#include <string_view>
#include <vector>

namespace ms {

// xoshiro256++ with splitmix64 seeding; self-contained so streams are
// reproducible across platforms and builds (std::mt19937 distributions are not)
class Rng {
public:
    explicit Rng(uint64_t seed);

    // derive an independent named stream; derivation depends only on this
    // stream's seed and the name, not on how much has been drawn
    Rng stream(std::string_view name) const;
    Rng stream(std::string_view name, uint64_t index) const;

    uint64_t next_u64();
    double uniform();                    // [0, 1)
    double uniform(double a, double b);  // [a, b)
    double normal();                     // standard normal, Box-Muller
    int64_t randint(int64_t n);          // [0, n), unbiased

    void fill_normal(float* p, int64_t n);
    void fill_normal(double* p, int64_t n);

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace ms
