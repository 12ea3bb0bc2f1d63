#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace mesorisk {

// Philox4x32-10 counter-based generator. Every draw is a pure function of
// (key, counter), so a Monte Carlo path can be regenerated from its index
// alone regardless of which worker simulates it.
namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

Counter block(Counter counter, Key key);

}  // namespace philox

// Derives an independent seed from a parent seed and a label, e.g.
// derive_seed(seed, "louvain", restart). Used so one top-level seed drives
// every stochastic component.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

// Sequential view over one Philox stream. The stream id occupies the upper
// 64 bits of the counter and the draw index the lower 64 bits.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    // Uniform on (0, 1].
    double uniform_open_low();
    double normal();
    // Unbiased integer in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound);

    std::uint64_t blocks_consumed() const { return block_index_; }

private:
    void refill();

    philox::Key key_{};
    std::uint64_t stream_id_ = 0;
    std::uint64_t block_index_ = 0;
    philox::Counter buffer_{};
    int buffered_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mesorisk
