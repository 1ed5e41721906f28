#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace merpo {

/// Counter-based splittable generator. Every stream is derived from a root
/// 64-bit seed plus a chain of derivation tags, so independent components
/// (tasks, ensemble members, suite cells) draw from non-overlapping streams
/// and results are bit-reproducible across platforms.
///
/// The output function is SplitMix64; stream keys are mixed with the same
/// finalizer. Floating-point draws are built directly from the bits, never
/// via std::distributions (their output is implementation-defined).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed ^ kGolden)) {}

    /// Derives an independent child stream. Same (parent, tag) always
    /// yields the same child.
    [[nodiscard]] Rng derive(std::uint64_t tag) const {
        return Rng(mix(state_ ^ mix(tag + kGolden)));
    }
    [[nodiscard]] Rng derive(std::string_view tag) const {
        std::uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
        for (unsigned char c : tag) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return derive(h);
    }

    std::uint64_t next_u64() {
        state_ += kGolden;
        return mix(state_);
    }

    /// Uniform double in [0, 1).
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t next_index(std::size_t n) {
        // 64-bit multiply-shift; bias is ~2^-64 and irrelevant here.
        return std::size_t((__uint128_t(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (both bits deterministic).
    double next_gaussian();

    /// Samples an index from an unnormalized non-negative weight vector.
    std::size_t sample_discrete(std::span<const double> weights);

    /// Fisher-Yates shuffle with this stream.
    template <typename T> void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = next_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace merpo
