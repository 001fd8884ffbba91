#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fedlmf {

/// Deterministic 64-bit generator (splitmix64). All randomness in the project
/// flows through this class so that runs are bit-identical across platforms;
/// the standard library distributions are implementation-defined and are not
/// used anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Standard normal via Box-Muller (no cached second value).
    double normal();

    /// Partial Fisher-Yates: k distinct indices from [0, n).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    /// Derive an independent stream from (seed, tag, id) so that parallel
    /// clients never share generator state.
    static std::uint64_t derive(std::uint64_t seed, std::string_view tag, std::uint64_t id = 0);

private:
    std::uint64_t state_;
};

}  // namespace fedlmf
