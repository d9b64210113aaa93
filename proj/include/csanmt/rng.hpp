#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "csanmt/tensor.hpp"

namespace csanmt {

// Splittable counter-based generator built on SplitMix64. A child stream is
// derived from the parent's seed and a label hash, never from the parent's
// position, so adding draws to one stream cannot shift any other stream.
// All arithmetic is exact 64-bit integer work followed by a fixed
// double conversion, which keeps outputs identical across platforms.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), state_(seed) {}

    Rng split(std::string_view label) const {
        return Rng(mix(seed_ ^ fnv1a(label)));
    }
    Rng split(uint64_t index) const {
        return Rng(mix(seed_ ^ mix(index + 0x9e3779b97f4a7c15ULL)));
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1): 53 mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive; rejection keeps the
    // distribution exact.
    uint64_t below(uint64_t n) {
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller. No cached spare: two uniforms are
    // consumed per draw so the stream position stays predictable.
    double normal() {
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    void fill_normal(Tensor& t, double std_dev = 1.0) {
        for (double& v : t.data) v = normal() * std_dev;
    }
    void fill_uniform(Tensor& t, double lo, double hi) {
        for (double& v : t.data) v = uniform(lo, hi);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t seed() const { return seed_; }

private:
    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static uint64_t fnv1a(std::string_view s) {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    uint64_t seed_;
    uint64_t state_;
};

} // namespace csanmt
