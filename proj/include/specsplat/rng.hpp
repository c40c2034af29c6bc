#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace specsplat {

// Seeded random source with distributions implemented on top of the raw
// mt19937 stream. std::mt19937 output is pinned by the standard; the
// distribution helpers here are pinned by this file, so identical seeds
// give identical value sequences everywhere (std::*_distribution would not
// guarantee that across standard libraries).
class Rng {
public:
    explicit Rng(std::uint32_t seed = 0) : gen_(seed) {}

    std::uint32_t next_u32() { return gen_(); }

    std::uint64_t next_u64() {
        const std::uint64_t hi = gen_();
        return (hi << 32) | gen_();
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Lemire reduction; deterministic.
    std::uint32_t uniform_int(std::uint32_t n) {
        return std::uint32_t((std::uint64_t(next_u32()) * n) >> 32);
    }

    // Standard normal via Box-Muller (the sine mate is discarded so the
    // stream position is independent of call history).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = uniform_int(std::uint32_t(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // State serialization (textual, exact round trip).
    std::string save_state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }
    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
    }

private:
    std::mt19937 gen_;
};

}  // namespace specsplat
