#pragma once

// Spring gravity compensator acting on joint 2.
//
// Three node points: P0 (spring anchor on link 1), P2 (joint-2 axis) and P1
// (crank pin on link 2). L = |P1P2| and a = |P0P2| are constant, the spring
// spans s = |P0P1|, which varies with q2. The crank angle entering every
// formula is gamma(q2) = alpha - q2 + gamma_offset, where alpha = atan2(a_y, a_x)
// and gamma_offset aligns the joint zero with the compensator geometry
// (0 for the textbook convention).

#include "elastocal/common.hpp"

#include <span>
#include <vector>

namespace elastocal {

struct CompensatorGeometry {
  double L = 0.0;    ///< crank radius |P1P2|, mm
  double a_x = 0.0;  ///< mm
  double a_y = 0.0;  ///< mm
  double gamma_offset = 0.0;  ///< rad

  double a() const { return std::hypot(a_x, a_y); }
  double alpha() const { return std::atan2(a_y, a_x); }
  double gamma(double q2) const { return alpha() - q2 + gamma_offset; }

  /// Throws InputError unless L > 0 and a > L.
  void validate() const;
};

struct CompensatorElastics {
  double K_c = 0.0;  ///< spring stiffness, N/mm
  double s0 = 0.0;   ///< unloaded spring length, mm

  void validate() const;
};

/// Which sign compensator_torque() reports.
///
/// SpringOnJoint is the torque the spring exerts on joint 2, -dV/dq2 with
/// V = K_c (s - s0)^2 / 2. Literal evaluates K_c (1 - s0/s) a L sin(gamma)
/// verbatim, which equals +dV/dq2.
enum class TorqueConvention { SpringOnJoint, Literal };

struct CompensatorParams {
  CompensatorGeometry geometry;
  CompensatorElastics elastics;
  TorqueConvention torque_convention = TorqueConvention::SpringOnJoint;

  void validate() const {
    geometry.validate();
    elastics.validate();
  }
};

/// s(q2) = sqrt(a^2 + L^2 + 2 a L cos(gamma)), mm.
double spring_length(const CompensatorGeometry& geom, double q2);

/// Angle between the compensator links at P1: asin(a/s * sin(gamma)).
double spring_angle(const CompensatorGeometry& geom, double q2);

/// Compensator torque on joint 2 (N*mm), sign per params.torque_convention.
double compensator_torque(const CompensatorParams& params, double q2);

/// Potential energy stored in the spring, K_c (s - s0)^2 / 2 (N*mm).
double spring_energy(const CompensatorParams& params, double q2);

/// eta(q2) = s0/s (aL/s^2 sin^2(gamma) + cos(gamma)) - cos(gamma).
double eta(const CompensatorGeometry& geom, double s0, double q2);

struct EquivalentStiffness {
  double value = 0.0;  ///< K_theta2, N*mm/rad
  double eta = 0.0;
  bool nonphysical = false;  ///< value <= 0
};

/// K_theta2 = K0_theta2 + K_c a L eta(q2).
EquivalentStiffness equivalent_joint_stiffness(const CompensatorParams& params, double K0,
                                               double q2);

struct EtaTable {
  std::vector<double> q2;  ///< rad
  std::vector<double> s0;  ///< mm
  Eigen::MatrixXd values;  ///< rows follow q2, columns follow s0
};

/// Tabulates eta over a q2 grid for several preloads. Throws on an empty grid.
EtaTable eta_curve(const CompensatorGeometry& geom, std::span<const double> s0_list,
                   std::span<const double> q2_grid);

}  // namespace elastocal
