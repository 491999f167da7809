#pragma once

#include <cstdint>

namespace kinstor {

/// Noise channels of the state system, used to index independent draws.
enum class NoiseChannel : std::uint64_t { price = 0, load = 1, power = 2 };

/// Counter-based Gaussian stream: every draw is a pure function of
/// (master_seed, stream, trajectory, step, channel). There is no generator
/// state, so any parallel schedule over trajectories produces bit-identical
/// results, and any index can be regenerated in isolation.
///
/// Antithetic pairing is layered on top by the caller: trajectory i in the
/// upper half of a paired batch uses the negated draw of its twin.
class RngStream {
public:
    explicit RngStream(std::uint64_t master_seed, std::uint64_t stream = 0)
        : seed_(master_seed), stream_(stream) {}

    std::uint64_t master_seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    /// Derive a sub-stream (e.g. one per epoch) without perturbing the parent.
    RngStream substream(std::uint64_t id) const {
        return RngStream(seed_, mix(stream_ ^ mix(id ^ 0x94d049bb133111ebULL)));
    }

    /// Uniform in the open interval (0, 1).
    double uniform(std::uint64_t trajectory, std::uint64_t step, std::uint64_t channel) const {
        return to_unit(bits(trajectory, step, channel));
    }

    /// Standard normal via the inverse CDF (deterministic, no rejection).
    double normal(std::uint64_t trajectory, std::uint64_t step, std::uint64_t channel) const {
        return inverse_normal_cdf(uniform(trajectory, step, channel));
    }

    double normal(std::uint64_t trajectory, std::uint64_t step, NoiseChannel c) const {
        return normal(trajectory, step, static_cast<std::uint64_t>(c));
    }

    /// Raw 64-bit output for the given counter triple.
    std::uint64_t bits(std::uint64_t trajectory, std::uint64_t step, std::uint64_t channel) const {
        std::uint64_t h = mix(seed_ ^ 0xa0761d6478bd642fULL);
        h = mix(h ^ stream_);
        h = mix(h ^ trajectory);
        h = mix(h ^ (step + 0x9e3779b97f4a7c15ULL));
        h = mix(h ^ (channel + 0xbf58476d1ce4e5b9ULL));
        return h;
    }

    /// Quantile function of N(0,1), |error| < 1e-15 after one Halley step.
    static double inverse_normal_cdf(double p);

private:
    static std::uint64_t mix(std::uint64_t x) {
        x ^= x >> 33;
        x *= 0xff51afd7ed558ccdULL;
        x ^= x >> 33;
        x *= 0xc4ceb9fe1a85ec53ULL;
        x ^= x >> 33;
        return x;
    }

    static double to_unit(std::uint64_t h) {
        // 53 mantissa bits, shifted into (0,1) so the inverse CDF stays finite.
        return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
};

/// Well-known stream ids so independent uses never collide.
namespace streams {
inline constexpr std::uint64_t paths = 1;       // exogenous + battery path noise
inline constexpr std::uint64_t init = 2;        // network weight initialization
inline constexpr std::uint64_t bootstrap = 3;   // evaluation bootstrap resamples
inline constexpr std::uint64_t initial = 4;     // initial-state sampling
inline constexpr std::uint64_t diagnostics = 5; // test harness draws
}  // namespace streams

}  // namespace kinstor
