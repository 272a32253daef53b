#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace dirmixe {

/// xoshiro256** seeded through splitmix64.
///
/// Every stochastic routine in the library takes an explicit `Rng&`; there is no
/// global generator. The bit stream is fully specified here (no std::*_distribution),
/// so experiments reproduce bit-for-bit across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    /// Independent stream keyed by (seed, stream_id).
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t next_u64();

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform on (0, 1); never returns 0, safe under log().
    double uniform_open();
    double uniform(double lo, double hi);
    /// Standard normal, Marsaglia polar method.
    double normal();
    /// Uniform integer on [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Draws a fresh child generator; the parent advances by one step.
    Rng split();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dirmixe
