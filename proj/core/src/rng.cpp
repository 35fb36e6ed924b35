#include "sva/rng.hpp"

#include <boost/random/normal_distribution.hpp>

namespace sva {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void philox_round(Philox4x32::Counter& c, const Philox4x32::Key& k) noexcept {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
         static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
}

inline std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

Philox4x32::Counter Philox4x32::apply(Counter ctr, Key key) noexcept {
    philox_round(ctr, key);
    for (int r = 1; r < 10; ++r) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
        philox_round(ctr, key);
    }
    return ctr;
}

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      stream_id_(stream_id) {}

void NormalStream::refill() noexcept {
    words_ = Philox4x32::apply({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                static_cast<std::uint32_t>(stream_id_),
                                static_cast<std::uint32_t>(stream_id_ >> 32)},
                               key_);
    ++block_;
    word_pos_ = 0;
}

std::uint64_t NormalStream::next_u64() noexcept {
    if (word_pos_ > 2) refill();
    const std::uint64_t lo = words_[static_cast<std::size_t>(word_pos_)];
    const std::uint64_t hi = words_[static_cast<std::size_t>(word_pos_ + 1)];
    word_pos_ += 2;
    return lo | (hi << 32);
}

double NormalStream::next_uniform() noexcept {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double NormalStream::next() noexcept {
    // Ziggurat sampler; deterministic for a given Boost release.
    return boost::random::normal_distribution<double>()(*this);
}

void NormalStream::fill(VectorRef out) noexcept {
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = next();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ull));
}

}  // namespace sva
