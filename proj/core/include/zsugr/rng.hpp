#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace zsugr {

// 64-bit FNV-1a. Used for deriving RNG sub-streams from string keys and for
// cheap content fingerprints in artifact manifests.
std::uint64_t fnv1a64(std::string_view data);

// Stateless seed derivation: mixes a master seed with a purpose tag and an
// index so that independent consumers (noise, interpolation, shuffling, ...)
// never share a stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(engine_);
    }
    double uniform(double lo = 0.0, double hi = 1.0) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }
    // Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
        return d(engine_);
    }
    std::mt19937_64& engine() { return engine_; }

    // Serializable engine state, stored in checkpoints.
    std::string state() const;
    void set_state(const std::string& s);

private:
    std::mt19937_64 engine_;
};

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.index(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace zsugr
