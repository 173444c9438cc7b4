#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace kinuq {

using Real = double;
using Index = Eigen::Index;

using Array = Eigen::ArrayXd;    // flat per-node data
using ArrayXX = Eigen::ArrayXXd; // (points x samples) blocks, column-major
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;

/// Inputs that violate an operation's contract (non-finite fields, bad shapes).
struct InvalidInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// States with no usable moments (nonpositive mass or temperature).
struct DegenerateStateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid grid/plan/schedule/experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace kinuq
