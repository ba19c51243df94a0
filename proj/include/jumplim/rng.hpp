#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace jumplim {

/*!
 * Philox4x32-10 counter-based generator.
 *
 * The key is derived from the master seed, the counter carries the stream
 * index in its upper half and the block position in its lower half, so any
 * (seed, stream) pair gives an independent, reproducible sequence without
 * shared state.
 */
class Philox {
  public:
    using result_type = std::uint64_t;

    Philox(std::uint64_t seed, std::uint64_t stream) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept;

    //! Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() noexcept {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    //! Sub-stream for a different purpose within the same task.
    Philox split(std::uint64_t sub) const noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

  private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::array<std::uint32_t, 2> key_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> out_{};
    int pos_ = 4;
};

//! Mix two words into one; used to derive keys and sub-streams.
std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept;

} // namespace jumplim
