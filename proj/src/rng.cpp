#include "agedep/rng.hpp"

#include <cmath>
#include <numbers>

namespace agedep {

Rng::Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(substream), hi(substream)};
    engine_.seed(seq);
}

double Rng::exponential() { return -std::log1p(-uniform()); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

}  // namespace agedep
