#pragma once

#include <cstdint>

namespace slegff {

// Counter-style generator family: PCG64 (XSL-RR 128/64, setseq variant).
// Distinct stream ids select distinct odd increments, which is the generator
// family's mechanism for statistically independent sequences. Identical
// (seed, stream) always reproduces the identical draw sequence, independent
// of platform or standard library.
class RandomStream {
 public:
  RandomStream() : RandomStream(0, 0) {}
  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1], safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via a 256-layer ziggurat.
  double normal();

  // A derived stream for a sub-task; distinct tags give independent streams
  // of the same family.
  RandomStream fork(std::uint64_t tag) const;

 private:
  using u128 = unsigned __int128;
  u128 state_;
  u128 inc_;
  std::uint64_t seed_;
  std::uint64_t stream_id_;
};

}  // namespace slegff
