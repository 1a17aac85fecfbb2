#pragma once

#include <cstdint>

namespace gnt {

// SplitMix64 step (Steele, Lea, Flood 2014). Used both as a generator and
// as a mixing function to derive independent substreams from (seed, tags).
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Small counter-free PRNG whose state is derived by hashing a seed with up
// to three stream tags. Streams with distinct tags are independent, so the
// draw for (path, sample) never depends on evaluation order.
class SubstreamRng {
public:
    explicit SubstreamRng(std::uint64_t seed, std::uint64_t tag0 = 0,
                          std::uint64_t tag1 = 0, std::uint64_t tag2 = 0) {
        state_ = seed;
        (void)splitmix64(state_);
        state_ ^= 0x9616ef3354ac77d1ULL * (tag0 + 1);
        (void)splitmix64(state_);
        state_ ^= 0xd6e8feb86659fd93ULL * (tag1 + 1);
        (void)splitmix64(state_);
        state_ ^= 0xa3aac1f06e24cd21ULL * (tag2 + 1);
        (void)splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in (0, 1); never returns 0 so inverse-CDF draws stay finite.
    double next_double() {
        const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

private:
    std::uint64_t state_;
};

}  // namespace gnt
