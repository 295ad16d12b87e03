#include "clcsca/rng.hpp"

#include <cmath>

#include "clcsca/common.hpp"

namespace clcsca {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t fnv1a64_bytes(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t h) { return fnv1a64_bytes(s.data(), s.size(), h); }

Rng::Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
}

Rng Rng::stream(std::uint64_t seed, std::initializer_list<std::string_view> path) {
    std::uint64_t h = fnv1a64("clcsca");
    h = fnv1a64_bytes(&seed, sizeof(seed), h);
    for (auto part : path) {
        h = fnv1a64(part, h);
        h = fnv1a64("/", h);
    }
    return Rng(h);
}

Rng Rng::stream(std::uint64_t seed, const std::vector<std::string>& path) {
    std::uint64_t h = fnv1a64("clcsca");
    h = fnv1a64_bytes(&seed, sizeof(seed), h);
    for (const auto& part : path) {
        h = fnv1a64(part, h);
        h = fnv1a64("/", h);
    }
    return Rng(h);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    // Box-Muller; u1 in (0,1] to keep the log finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::below: n must be >= 1");
    // Modulo is biased for huge n; all uses here have n far below 2^32.
    return next_u64() % n;
}

}  // namespace clcsca
