#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <numbers>
#include <stdexcept>
#include <string>

namespace elastocal {

inline constexpr int kNumJoints = 6;

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix36d = Eigen::Matrix<double, 3, 6>;

/// Joint-space vector: actuator angles q or virtual-spring deflections theta (rad).
using JointVector = Vector6d;

/// Wrench ordered force (N) then moment (N*mm), expressed in the base frame.
using Wrench = Vector6d;

/// Small displacement ordered position (mm) then rotation vector (rad).
using Twist = Vector6d;

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: parse failures, invariant violations, inconsistent data.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: singular systems, rank deficiency, divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace elastocal
