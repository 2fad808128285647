#ifndef SCHOENBERG_ERROR_HPP_
#define SCHOENBERG_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace schoenberg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value or shape violates an operation's precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Two inputs are individually valid but do not describe the same object,
/// e.g. a radial profile that is not the transform of the supplied measure.
class InconsistentInputs : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap. The best iterate reached so far
/// is kept so callers can still inspect it.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, std::vector<double> best_iterate,
                 std::size_t iterations)
      : Error(what), best_(std::move(best_iterate)), iterations_(iterations) {}

  const std::vector<double>& best_iterate() const noexcept { return best_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::vector<double> best_;
  std::size_t iterations_;
};

}  // namespace schoenberg

#endif  // SCHOENBERG_ERROR_HPP_
