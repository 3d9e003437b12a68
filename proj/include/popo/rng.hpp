#pragma once

#include <cmath>
#include <cstdint>

namespace popo {

/// What a random stream is used for. Each purpose gets its own key space so
/// adding draws to one consumer can never shift the values seen by another.
enum class StreamPurpose : std::uint64_t {
    task_gen = 1,
    policy_init = 2,
    predictor_init = 3,
    prompt_sample = 4,
    rollout = 5,
    sim_noise = 6,
    eval = 7,
    check = 8,
};

namespace detail {

// SplitMix64 finalizer. Bijective with full avalanche; good enough as the
// mixing function of a counter-based generator at this scale.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Counter-based random stream keyed by (seed, purpose, iteration, index).
/// Output i depends only on the key and i, so streams for different
/// (purpose, iteration, prompt) tuples are independent and reproducible
/// regardless of evaluation order elsewhere in the program.
class RngStream {
public:
    RngStream(std::uint64_t seed, StreamPurpose purpose,
              std::uint64_t iteration = 0, std::uint64_t index = 0) {
        std::uint64_t k = detail::mix64(seed);
        k = detail::mix64(k ^ static_cast<std::uint64_t>(purpose));
        k = detail::mix64(k ^ iteration);
        k = detail::mix64(k ^ index);
        key_ = k;
    }

    std::uint64_t next_u64() {
        return detail::mix64(key_ ^ (++counter_ * 0xD1B54A32D192ED03ULL));
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in (0, 1]; safe as a log() argument.
    double uniform_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller, one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Multiply-shift rejection-free mapping; bias is < 2^-64 * n,
        // irrelevant for the toy ranges used here.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace popo
