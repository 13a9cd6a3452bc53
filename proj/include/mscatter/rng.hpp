#ifndef MSCATTER_RNG_HPP
#define MSCATTER_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mscatter {

// Derive an independent stream id from a master seed and a path of labels
// (stream kind, trial index, group index, ...).  splitmix64 chaining keeps
// the result stable across platforms and insensitive to evaluation order
// elsewhere.
std::uint64_t derive_stream(std::uint64_t master, std::initializer_list<std::uint64_t> path);

// mt19937_64 plus the variate generators the simulations need.  The
// distributions are implemented here (Box-Muller, Marsaglia-Tsang) instead
// of <random>'s because their output must be bit-reproducible across
// standard library implementations.
class SubstreamRng {
 public:
  explicit SubstreamRng(std::uint64_t seed) : eng_(seed) {}
  SubstreamRng(std::uint64_t master, std::initializer_list<std::uint64_t> path)
      : eng_(derive_stream(master, path)) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform on (0, 1)
  double uniform();
  double normal();
  // Gamma(shape, 1), shape > 0
  double gamma(double shape);
  double chi2(double dof) { return 2.0 * gamma(0.5 * dof); }
  // uniform on {0, ..., n-1}, unbiased
  int below(int n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(below(i + 1))]);
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mscatter

#endif
