#include "slegff/rng.hpp"

#include <cmath>

namespace slegff {

namespace {

constexpr unsigned __int128 pcg_mult() {
  return (static_cast<unsigned __int128>(2549297995355413924ULL) << 64) |
         4865540595714422341ULL;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t rotr64(std::uint64_t v, unsigned r) {
  return (v >> r) | (v << ((-r) & 63));
}

// 256-strip ziggurat for the half-normal shape f(x) = exp(-x^2/2).
// Strip i < 255 is the rectangle [0, z[i+1]] x (y[i+1], y[i]]; strip 255 is
// the base rectangle [0, r] x (0, y[255]] plus the tail x > r. All strips
// have equal area v.
struct ZigguratTables {
  static constexpr double kR = 3.6541528853610088;
  static constexpr double kV = 0.00492867323399;
  double z[256];  // z[255] = r; z[0] = 0
  double y[256];  // y[i] = f(z[i]); y[0] = 1
  double base_scale;
  ZigguratTables() {
    auto f = [](double t) { return std::exp(-0.5 * t * t); };
    z[255] = kR;
    y[255] = f(kR);
    for (int i = 254; i >= 1; --i) {
      y[i] = y[i + 1] + kV / z[i + 1];
      z[i] = std::sqrt(-2.0 * std::log(y[i]));
    }
    z[0] = 0.0;
    y[0] = 1.0;
    base_scale = kV / y[255];
  }
};

const ZigguratTables kZig;

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  u128 initseq = (static_cast<u128>(splitmix64(stream_id ^ 0xda3e39cb94b95bdbULL)) << 64) |
                 splitmix64(stream_id + 0x853c49e6748fea9bULL);
  inc_ = (initseq << 1) | 1;
  u128 initstate = (static_cast<u128>(splitmix64(seed)) << 64) |
                   splitmix64(seed ^ 0xc3a5c85c97cb3127ULL);
  state_ = 0;
  next_u64();
  state_ += initstate;
  next_u64();
}

std::uint64_t RandomStream::next_u64() {
  state_ = state_ * pcg_mult() + inc_;
  std::uint64_t xored = static_cast<std::uint64_t>(state_ >> 64) ^
                        static_cast<std::uint64_t>(state_);
  unsigned rot = static_cast<unsigned>(state_ >> 122);
  return rotr64(xored, rot);
}

double RandomStream::normal() {
  for (;;) {
    std::uint64_t bits = next_u64();
    int i = static_cast<int>(bits & 0xff);
    double sign = (bits & 0x100) ? 1.0 : -1.0;
    double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
    if (i < 255) {
      double x = u * kZig.z[i + 1];
      if (x < kZig.z[i]) return sign * x;
      double yy = kZig.y[i + 1] + uniform() * (kZig.y[i] - kZig.y[i + 1]);
      if (yy < std::exp(-0.5 * x * x)) return sign * x;
    } else {
      double x = u * kZig.base_scale;
      if (x < ZigguratTables::kR) return sign * x;
      // Marsaglia tail sampler beyond r.
      for (;;) {
        double e1 = -std::log(uniform_pos()) / ZigguratTables::kR;
        double e2 = -std::log(uniform_pos());
        if (2.0 * e2 > e1 * e1)
          return sign * (ZigguratTables::kR + e1);
      }
    }
  }
}

RandomStream RandomStream::fork(std::uint64_t tag) const {
  return RandomStream(seed_,
                      splitmix64(stream_id_ ^ splitmix64(tag ^ 0xa0761d6478bd642fULL)));
}

}  // namespace slegff
