#pragma once

// Loaded static equilibrium and Cartesian stiffness of the compensated
// manipulator (virtual joint method).

#include "elastocal/robot_model.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace elastocal {

/// diag(1/k_1 .. 1/k_6) with entry 2 replaced by the equivalent compensated
/// stiffness at q2. Throws InputError for a zero compliance and
/// NumericalError when the net joint-2 stiffness is not positive.
Matrix6d joint_stiffness_matrix(const ManipulatorModel& model,
                                const std::optional<CompensatorParams>& compensator,
                                const JointVector& q);

/// Joint compliances with k_2 replaced by 1/K_theta2(q2).
JointVector effective_compliances(const ManipulatorModel& model,
                                  const std::optional<CompensatorParams>& compensator,
                                  const JointVector& q);

struct EquilibriumOptions {
  double theta_tolerance = 1e-12;  ///< rad, step size at convergence
  double pose_tolerance = 1e-9;    ///< mm (rad for the rotation part), dual mode
  int max_iterations = 100;
};

/// Dual problem: the tool pose is prescribed, the tool wrench is unknown.
struct TargetPose {
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
};

/// Primal problem: the tool wrench is prescribed, the pose is unknown.
struct AppliedWrench {
  Wrench F = Wrench::Zero();
};

using LoadSpec = std::variant<TargetPose, AppliedWrench>;

struct EquilibriumState {
  JointVector q = JointVector::Zero();
  JointVector theta = JointVector::Zero();
  Wrench F = Wrench::Zero();
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  NodeLoading gravity;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;         ///< mm: distance to target (dual) or last tool step (primal)
  double wrench_residual = 0.0;  ///< |K theta - J_G^T G - J_F^T F| / |K theta|
  std::string diagnostics;
};

/// Solves K_theta theta = J_G^T G + J_F^T F with gravity from the model.
/// Non-convergence returns converged == false with diagnostics; a singular
/// J K^-1 J^T throws NumericalError.
EquilibriumState solve_equilibrium(const ManipulatorModel& model,
                                   const std::optional<CompensatorParams>& compensator,
                                   const JointVector& q, const LoadSpec& load,
                                   const EquilibriumOptions& options = {});

struct CartesianStiffness {
  Matrix6d K = Matrix6d::Zero();
};

/// K_C = (J (K_theta - H)^-1 J^T)^-1 at a converged equilibrium.
CartesianStiffness cartesian_stiffness(const ManipulatorModel& model,
                                       const std::optional<CompensatorParams>& compensator,
                                       const EquilibriumState& state);

/// Linear prediction sum_j k_j J_j J_j^T F, position rows at each marker.
std::vector<Eigen::Vector3d> predict_marker_deflections(
    const ManipulatorModel& model, const std::optional<CompensatorParams>& compensator,
    const JointVector& q, const Wrench& F);

/// Same prediction for the tool frame, all six rows.
Twist predict_tool_deflection(const ManipulatorModel& model,
                              const std::optional<CompensatorParams>& compensator,
                              const JointVector& q, const Wrench& F);

/// Tool displacement caused by F on top of the gravity-loaded state.
Twist load_displacement(const ManipulatorModel& model,
                        const std::optional<CompensatorParams>& compensator, const JointVector& q,
                        const Wrench& F, const EquilibriumOptions& options = {});

/// Mirror correction: desired (-) displacement under F. With iterations > 1
/// the correction is re-evaluated at the corrected command (via inverse
/// kinematics seeded at q) until it settles.
Eigen::Isometry3d compensate_target(const ManipulatorModel& model,
                                    const std::optional<CompensatorParams>& compensator,
                                    const JointVector& q, const Wrench& F,
                                    const Eigen::Isometry3d& desired, int iterations = 1);

}  // namespace elastocal
