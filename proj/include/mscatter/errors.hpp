#ifndef MSCATTER_ERRORS_HPP
#define MSCATTER_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mscatter {

// Iterative routine failed to converge or produced a singular/unusable
// iterate.  Carries a human-readable diagnostic (residual, iteration count).
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

// A solver precondition (existence condition, sample-size requirement) does
// not hold for the given data.  Distinct from plain argument validation so
// the CLI can map it to its own exit code.
class precondition_error : public std::runtime_error {
 public:
  explicit precondition_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mscatter

#endif
