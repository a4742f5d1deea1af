#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace itr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using BinaryVector = Eigen::VectorXi;
using Index = Eigen::Index;

// Bad input or a violated precondition. The CLI maps this to exit code 1.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical procedure failed on otherwise valid input (separation,
// rank deficiency, non-convergence). The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InputError(message);
}

}  // namespace itr
