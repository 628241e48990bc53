#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace gradroute {

// Deterministic, portable RNG (splitmix64 core). A single seeded instance is
// passed explicitly to every initializer and sampler; independent streams for
// parallel workers come from split().
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n).
    size_t randint(size_t n) { return static_cast<size_t>(next_u64() % n); }

    bool bernoulli(double p) { return uniform() < p; }

    template <class V>
    void shuffle(V& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = randint(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream keyed by id.
    Rng split(uint64_t id) {
        Rng child(state_ ^ (0xD1B54A32D192ED03ull * (id + 1)));
        child.next_u64();
        return child;
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) {
        state_ = s;
        have_spare_ = false;
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace gradroute
