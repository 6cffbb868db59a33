#pragma once
// Small shared helpers: stable hashing, deterministic RNG, string utilities.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pb {

// SHA-256 hex digest (lowercase). Backed by OpenSSL EVP.
std::string sha256_hex(std::string_view data);

// Normalize line endings to '\n'; all other bytes preserved.
std::string canonicalize_newlines(std::string_view s);

// splitmix64: tiny, platform-stable PRNG used wherever determinism across
// platforms matters (std distributions are not portable).
struct SplitMix64 {
    uint64_t state;
    explicit SplitMix64(uint64_t seed) : state(seed) {}
    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // Unbiased bounded draw in [0, n).
    uint64_t below(uint64_t n);
    // Uniform in [0,1).
    double uniform01();
    // Standard normal via Box-Muller (stable across platforms).
    double normal();

  private:
    std::optional<double> spare_normal_;
};

// FNV-1a 64-bit over bytes; used to derive RNG streams from string keys.
uint64_t fnv1a64(std::string_view data, uint64_t seed = 1469598103934665603ULL);

// Deterministic Fisher-Yates shuffle driven by SplitMix64.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, uint64_t seed) {
    SplitMix64 rng(seed);
    for (size_t i = items.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

// Monotonic millisecond clock, injectable so that scripted/replay runs are
// byte-for-byte reproducible (a counter clock) while live runs measure real time.
using Clock = std::function<int64_t()>;
Clock system_clock_ms();
Clock counter_clock_ms();  // starts at 0, +1 per call

// ISO-8601 UTC timestamp, seconds resolution.
std::string now_iso8601_utc();

}  // namespace pb
