#pragma once

#include <array>
#include <cstdint>

#include "sva/linalg.hpp"

namespace sva {

/// Philox4x32-10 counter-based bijection (Salmon et al., SC'11).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    [[nodiscard]] static Counter apply(Counter ctr, Key key) noexcept;
};

/// Reproducible stream of standard normals identified by (seed, stream_id).
///
/// Block j of the stream is Philox(counter = {j_lo, j_hi, id_lo, id_hi},
/// key = {seed_lo, seed_hi}); normals come from the ziggurat method fed by
/// consecutive 64-bit words of the stream.
/// Streams with distinct ids never share a counter, so any assignment of
/// streams to threads produces the same numbers.
class NormalStream {
  public:
    NormalStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

    [[nodiscard]] double next() noexcept;
    void fill(VectorRef out) noexcept;

    /// Uniform variate in (0, 1], 53-bit resolution, drawn from the same stream.
    [[nodiscard]] double next_uniform() noexcept;
    /// Uniform 64-bit word from the same stream.
    [[nodiscard]] std::uint64_t next_u64() noexcept;

    // UniformRandomBitGenerator interface over next_u64.
    using result_type = std::uint64_t;
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }
    result_type operator()() noexcept { return next_u64(); }

  private:
    void refill() noexcept;

    Philox4x32::Key key_;
    std::uint64_t stream_id_;
    std::uint64_t block_ = 0;
    Philox4x32::Counter words_{};
    int word_pos_ = 4;
};

/// Mixes a seed with extra integers (splitmix64 finalizer chain), used to
/// derive independent seeds for sub-experiments.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                        std::uint64_t b = 0) noexcept;

}  // namespace sva
