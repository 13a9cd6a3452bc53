#include "mscatter/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace mscatter {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_stream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = master;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t label : path) {
    state ^= label + 0x9e3779b97f4a7c15ull + (state << 6) + (state >> 2);
    out = splitmix64(state);
  }
  return out;
}

double SubstreamRng::uniform() {
  for (;;) {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

double SubstreamRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double SubstreamRng::gamma(double shape) {
  if (!(shape > 0.0)) throw std::domain_error("SubstreamRng::gamma: shape must be positive");
  if (shape < 1.0) {
    // boost to shape+1, then scale back
    const double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

int SubstreamRng::below(int n) {
  if (n <= 0) throw std::domain_error("SubstreamRng::below: n must be positive");
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = ~0ull - ~0ull % un;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return static_cast<int>(x % un);
  }
}

}  // namespace mscatter
