#pragma once

#include <stdexcept>
#include <string>

namespace mvlab {

/// Bad input: wrong sizes, out-of-range parameters, schema violations.
class validation_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation left its regime of validity (positivity loss, blow-up,
/// non-convergence). `where` carries the time or residual that triggered it.
class numerical_error : public std::runtime_error {
 public:
  numerical_error(const std::string& what, double where)
      : std::runtime_error(what), where_(where) {}
  explicit numerical_error(const std::string& what)
      : numerical_error(what, 0.0) {}

  double where() const noexcept { return where_; }

 private:
  double where_;
};

/// A statistical acceptance check came out of tolerance.
class statistical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mvlab
