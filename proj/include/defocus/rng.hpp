#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace defocus {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// xoshiro256++ (Blackman & Vigna). Cheap to construct, so one engine per
// pixel/patch keeps stochastic stages independent of thread scheduling.
class Xoshiro256 {
public:
    using result_type = uint64_t;

    explicit Xoshiro256(uint64_t seed = 0) {
        uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64(sm);
    }

    static Xoshiro256 from_state(const std::array<uint64_t, 4>& state) {
        Xoshiro256 r;
        r.s_ = state;
        return r;
    }

    std::array<uint64_t, 4> state() const { return s_; }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<uint64_t>::max(); }

    result_type operator()() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform double in [0,1).
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound). Unbiased (rejection sampling).
    uint64_t below(uint64_t bound) {
        if (bound < 2) return 0;
        const uint64_t limit = max() - max() % bound;
        uint64_t x;
        do {
            x = (*this)();
        } while (x >= limit);
        return x % bound;
    }

private:
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
    std::array<uint64_t, 4> s_{};
};

// Stable derivation of per-task seeds from a user seed and a task tag,
// so each (image, level, pixel, ...) stream is independent of loop order.
inline uint64_t derive_seed(uint64_t seed, uint64_t tag) {
    uint64_t s = seed ^ (0x9E3779B97F4A7C15ull + tag * 0xD1B54A32D192ED03ull);
    return splitmix64(s);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t tag_a, uint64_t tag_b) {
    return derive_seed(derive_seed(seed, tag_a), tag_b);
}

}  // namespace defocus
