#pragma once

#include <cstdint>
#include <vector>

namespace advlab {

// Reproducible randomness. A SeedStream is a (seed, stream_id) pair; every
// consumer of randomness receives its own stream, so results do not depend
// on evaluation order or thread schedule.
//
// Mixing function (documented contract): child stream ids are derived as
//   stream_id' = splitmix64(stream_id ^ (splitmix64(tag) + 0x9e3779b97f4a7c15))
// and the generator state is initialized to
//   state0 = splitmix64(seed ^ splitmix64(stream_id)).
// Draws are successive splitmix64 outputs of that state.

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct SeedStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    static SeedStream root(std::uint64_t seed) { return SeedStream{seed, 0}; }

    SeedStream child(std::uint64_t tag) const {
        return SeedStream{seed, splitmix64(stream_id ^ (splitmix64(tag) + kGolden))};
    }
    SeedStream child(std::uint64_t a, std::uint64_t b) const { return child(a).child(b); }
    SeedStream child(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
        return child(a).child(b).child(c);
    }
};

class Rng {
public:
    explicit Rng(SeedStream s) : state_(splitmix64(s.seed ^ splitmix64(s.stream_id))) {}

    std::uint64_t next_u64() {
        state_ += kGolden;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Uniform in [0, 1), 53 random bits.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform in [0, n). Multiply-high method; bias < n / 2^64, which is
    // irrelevant at the scales used here and keeps draws platform-stable.
    std::uint64_t below(std::uint64_t n) {
        return std::uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + int(below(std::uint64_t(hi_inclusive - lo + 1)));
    }

    bool bernoulli(double p) { return next_double() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

} // namespace advlab
