#include "jumplim/rng.hpp"

namespace jumplim {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

std::uint64_t splitmix(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix(splitmix(a) ^ (b + 0x632BE59BD9B4E019ull));
}

Philox::Philox(std::uint64_t seed, std::uint64_t stream) noexcept
    : seed_(seed), stream_(stream) {
    std::uint64_t k = splitmix(seed);
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

Philox Philox::split(std::uint64_t sub) const noexcept {
    return Philox(mix64(seed_, sub + 1), stream_);
}

void Philox::refill() noexcept {
    std::array<std::uint32_t, 4> c = {
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    std::uint32_t k0 = key_[0];
    std::uint32_t k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
        std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k0, static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k1, static_cast<std::uint32_t>(p0)};
        k0 += kWeyl0;
        k1 += kWeyl1;
    }
    out_ = c;
    ++block_;
    pos_ = 0;
}

Philox::result_type Philox::operator()() noexcept {
    if (pos_ >= 4)
        refill();
    std::uint64_t lo = out_[pos_];
    std::uint64_t hi = out_[pos_ + 1];
    pos_ += 2;
    return lo | (hi << 32);
}

} // namespace jumplim
