#pragma once

#include <cstdint>
#include <string_view>

// Counter-based random streams. Every consumer derives its own stream key by
// hashing (master seed, purpose tag, indices); draws are then a pure function
// of the key and the draw counter, so results do not depend on scheduling or
// worker count.
namespace couplab {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

// FNV-1a over the tag, then splitmix-style absorption of the indices.
inline std::uint64_t derive_key(std::uint64_t master, std::string_view tag,
                                std::uint64_t a = 0, std::uint64_t b = 0,
                                std::uint64_t c = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull ^ master;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  h = mix64(h + kGolden);
  h = mix64(h ^ (a + kGolden));
  h = mix64(h ^ (b + kGolden));
  h = mix64(h ^ (c + kGolden));
  return h;
}

// SplitMix64 walk: state advances by a fixed odd constant, output is a strong
// 64-bit mix of the state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix64(state_);
  }

  // Uniform on the open interval (0,1); safe to feed a normal quantile.
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

}  // namespace couplab
