#pragma once

#include "wcdm/core.hpp"

#include <cmath>
#include <cstdint>
#include <string_view>

namespace wcdm {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Sub-seed derivation: hash of (seed, purpose label[, index]). Fixed across platforms.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    for (char ch : label) {
        h ^= std::uint64_t(static_cast<unsigned char>(ch));
        h *= 0x100000001b3ULL;
    }
    return splitmix64(seed ^ h);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    return splitmix64(derive_seed(seed, label) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

/// Counter-based generator: the n-th draw depends only on (seed, n).
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_ += 0x9e3779b97f4a7c15ULL); }

    /// Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = std::uint64_t(hi - lo) + 1;
        return lo + std::int64_t(next_u64() % span);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

template <class S>
inline void fill_normal(TensorT<S>& t, CounterRng& rng, double stddev = 1.0) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data[i] = S(rng.normal() * stddev);
}

template <class S>
inline TensorT<S> normal_tensor(Shape s, std::uint64_t seed, double stddev = 1.0) {
    TensorT<S> t(s);
    CounterRng rng(seed);
    fill_normal(t, rng, stddev);
    return t;
}

template <class S>
inline void fill_uniform(TensorT<S>& t, CounterRng& rng, double lo = 0.0, double hi = 1.0) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data[i] = S(lo + (hi - lo) * rng.uniform());
}

}  // namespace wcdm
