#pragma once
#include <cstdint>
#include <cmath>
#include <numeric>
#include <vector>

#include "core/error.h"

namespace ms {

// plain owning nd-array, row-major, used everywhere outside the autograd tape
template <typename T>
struct Ten {
    std::vector<int64_t> shape;
    std::vector<T> v;

    Ten() = default;
    explicit Ten(std::vector<int64_t> s) : shape(std::move(s)), v(count(shape)) {}
    Ten(std::vector<int64_t> s, T fill) : shape(std::move(s)), v(count(shape), fill) {}

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (auto d : s) { check(d >= 0, ErrKind::validation, "negative dim"); n *= d; }
        return n;
    }
    int64_t numel() const { return (int64_t)v.size(); }
    int64_t dim(int i) const { return shape[(i < 0) ? (int)shape.size() + i : i]; }
    int ndim() const { return (int)shape.size(); }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    // 2d/3d accessors for tests and glue code (hot paths index manually)
    T& at(int64_t i) { return v[i]; }
    T& at(int64_t i, int64_t j) { return v[i * shape[1] + j]; }
    T& at(int64_t i, int64_t j, int64_t k) { return v[(i * shape[1] + j) * shape[2] + k]; }
    T at(int64_t i) const { return v[i]; }
    T at(int64_t i, int64_t j) const { return v[i * shape[1] + j]; }
    T at(int64_t i, int64_t j, int64_t k) const { return v[(i * shape[1] + j) * shape[2] + k]; }

    bool same_shape(const Ten& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T x : v) if (!std::isfinite((double)x)) return false;
        return true;
    }
};

using TenF = Ten<float>;
using TenD = Ten<double>;

template <typename T>
Ten<T> zeros_like(const Ten<T>& a) { return Ten<T>(a.shape); }

}  // namespace ms
