#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace clcsca {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// bit-identical across platforms and standard libraries.
//
// Every random draw in the project flows from one user seed through named
// substreams (Rng::stream), so toggling one pipeline stage does not perturb
// the draws of another.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Derives an independent generator for (seed, path), e.g.
    // Rng::stream(seed, {"init", "head.fc0.w"}).
    static Rng stream(std::uint64_t seed, std::initializer_list<std::string_view> path);
    static Rng stream(std::uint64_t seed, const std::vector<std::string>& path);

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit mantissa.
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller, second draw cached.
    double normal();

    // Uniform integer in [0, n), n >= 1.
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    std::uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// FNV-1a 64-bit, used for substream derivation and config content hashes.
std::uint64_t fnv1a64_bytes(const void* data, std::size_t len,
                            std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull);

}  // namespace clcsca
