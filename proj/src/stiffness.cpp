#include "elastocal/stiffness.hpp"

#include <cmath>
#include <sstream>

namespace elastocal {

namespace {

constexpr double kMinReciprocalCondition = 1e-15;

// sum_j J_j^T G_j over the six nodes.
JointVector gravity_torques(const ChainKinematics& chain, const NodeLoading& G) {
  JointVector tau = JointVector::Zero();
  for (int j = 0; j < kNumJoints; ++j) {
    const auto& w = G.nodes[static_cast<std::size_t>(j)];
    if (w.isZero(0.0)) continue;
    tau += chain.point_jacobian(j + 1, chain.nodes[static_cast<std::size_t>(j)].translation())
               .transpose() *
           w;
  }
  return tau;
}

double relative_residual(const Matrix6d& K, const JointVector& theta, const JointVector& load) {
  const JointVector Ktheta = K * theta;
  const double scale = std::max(Ktheta.norm(), load.norm());
  return scale > 0.0 ? (Ktheta - load).norm() / scale : 0.0;
}

struct DualSolver {
  const ManipulatorModel& model;
  const Matrix6d& K;
  const JointVector& q;
  const NodeLoading& G;
  const EquilibriumOptions& opt;

  void run(const Eigen::Isometry3d& target, EquilibriumState& s) const {
    const Matrix6d Kinv = K.inverse();
    for (int it = 1; it <= opt.max_iterations; ++it) {
      const auto chain = evaluate_chain(model, q, s.theta);
      const Matrix6d J = chain.point_jacobian(kNumJoints, chain.tool.translation());
      const JointVector tau_g = gravity_torques(chain, G);
      const Matrix6d S = J * Kinv * J.transpose();
      Eigen::LDLT<Matrix6d> ldlt(S);
      if (ldlt.info() != Eigen::Success || ldlt.rcond() < kMinReciprocalCondition)
        throw NumericalError("solve_equilibrium: singular configuration (J K^-1 J^T not invertible)");

      const Twist rhs = pose_difference(target, chain.tool) + J * s.theta - J * Kinv * tau_g;
      s.F = ldlt.solve(rhs);
      const JointVector next = Kinv * (tau_g + J.transpose() * s.F);
      const double step = (next - s.theta).norm();
      s.theta = next;
      s.iterations = it;

      const Twist err = pose_difference(target, fk(model, q, s.theta));
      s.residual = err.head<3>().norm();
      if (step < opt.theta_tolerance || err.norm() < opt.pose_tolerance) {
        s.converged = true;
        return;
      }
    }
  }
};

struct PrimalSolver {
  const ManipulatorModel& model;
  const Matrix6d& K;
  const JointVector& q;
  const NodeLoading& G;
  const EquilibriumOptions& opt;

  void run(const Wrench& F, EquilibriumState& s) const {
    const Matrix6d Kinv = K.inverse();
    double damping = 1.0;
    double previous = std::numeric_limits<double>::infinity();
    Eigen::Vector3d tool = fk(model, q, s.theta).translation();
    s.F = F;
    for (int it = 1; it <= opt.max_iterations; ++it) {
      const auto chain = evaluate_chain(model, q, s.theta);
      const Matrix6d J = chain.point_jacobian(kNumJoints, chain.tool.translation());
      const JointVector load = gravity_torques(chain, G) + J.transpose() * F;
      const double r = (K * s.theta - load).norm();
      // Damped fixed point on K theta = J(theta)^T w: halve the step whenever
      // the equilibrium residual grows.
      if (r > previous) damping *= 0.5;
      previous = r;
      const JointVector next = s.theta + damping * (Kinv * load - s.theta);
      const double step = (next - s.theta).norm();
      s.theta = next;
      s.iterations = it;
      const Eigen::Vector3d moved = fk(model, q, s.theta).translation();
      s.residual = (moved - tool).norm();
      tool = moved;
      if (step < opt.theta_tolerance) {
        s.converged = true;
        return;
      }
    }
  }
};

}  // namespace

Matrix6d joint_stiffness_matrix(const ManipulatorModel& model,
                                const std::optional<CompensatorParams>& compensator,
                                const JointVector& q) {
  Matrix6d K = Matrix6d::Zero();
  for (int i = 0; i < kNumJoints; ++i) {
    const double k = model.joints[static_cast<std::size_t>(i)].compliance;
    if (!(k > 0.0))
      throw InputError("joint " + std::to_string(i + 1) +
                       ": infinite stiffness unsupported in inverse form (use a small positive compliance)");
    K(i, i) = 1.0 / k;
  }
  if (compensator) {
    const auto eq = equivalent_joint_stiffness(*compensator, K(1, 1), q(1));
    if (eq.nonphysical)
      throw NumericalError("joint 2: non-physical equivalent stiffness " + std::to_string(eq.value) +
                           " N*mm/rad at q2 = " + std::to_string(rad2deg(q(1))) + " deg");
    K(1, 1) = eq.value;
  }
  return K;
}

JointVector effective_compliances(const ManipulatorModel& model,
                                  const std::optional<CompensatorParams>& compensator,
                                  const JointVector& q) {
  JointVector k = model.compliances();
  if (compensator) {
    if (!(k(1) > 0.0)) throw InputError("joint 2: compliance must be positive with a compensator");
    const auto eq = equivalent_joint_stiffness(*compensator, 1.0 / k(1), q(1));
    if (eq.nonphysical) throw NumericalError("joint 2: non-physical equivalent stiffness");
    k(1) = 1.0 / eq.value;
  }
  return k;
}

EquilibriumState solve_equilibrium(const ManipulatorModel& model,
                                   const std::optional<CompensatorParams>& compensator,
                                   const JointVector& q, const LoadSpec& load,
                                   const EquilibriumOptions& options) {
  const Matrix6d K = joint_stiffness_matrix(model, compensator, q);
  EquilibriumState s;
  s.q = q;
  s.gravity = gravity_loading(model, q, s.theta);

  if (const auto* target = std::get_if<TargetPose>(&load))
    DualSolver{model, K, q, s.gravity, options}.run(target->pose, s);
  else
    PrimalSolver{model, K, q, s.gravity, options}.run(std::get<AppliedWrench>(load).F, s);

  const auto chain = evaluate_chain(model, q, s.theta);
  s.t = chain.tool;
  const Matrix6d J = chain.point_jacobian(kNumJoints, chain.tool.translation());
  s.wrench_residual = relative_residual(K, s.theta, gravity_torques(chain, s.gravity) + J.transpose() * s.F);
  if (!s.converged) {
    std::ostringstream msg;
    msg << "no convergence after " << s.iterations << " iterations; residual " << s.residual
        << " mm, equilibrium residual " << s.wrench_residual;
    s.diagnostics = msg.str();
  }
  return s;
}

CartesianStiffness cartesian_stiffness(const ManipulatorModel& model,
                                       const std::optional<CompensatorParams>& compensator,
                                       const EquilibriumState& state) {
  if (!state.converged)
    throw NumericalError("cartesian_stiffness: equilibrium state did not converge");
  const Matrix6d K = joint_stiffness_matrix(model, compensator, state.q);
  const Matrix6d H = hessian_theta(model, state.q, state.theta, state.gravity, state.F);
  const auto chain = evaluate_chain(model, state.q, state.theta);
  const Matrix6d J = chain.point_jacobian(kNumJoints, chain.tool.translation());

  Eigen::FullPivLU<Matrix6d> reduced(K - H);
  if (!reduced.isInvertible() || reduced.rcond() < kMinReciprocalCondition)
    throw NumericalError("cartesian_stiffness: K_theta - H is singular (buckling-like loading)");
  const Matrix6d compliance = J * reduced.solve(J.transpose());
  Eigen::FullPivLU<Matrix6d> outer(compliance);
  if (!outer.isInvertible() || outer.rcond() < kMinReciprocalCondition)
    throw NumericalError("cartesian_stiffness: singular Jacobian (workspace boundary)");
  return {outer.inverse()};
}

std::vector<Eigen::Vector3d> predict_marker_deflections(
    const ManipulatorModel& model, const std::optional<CompensatorParams>& compensator,
    const JointVector& q, const Wrench& F) {
  const JointVector k = effective_compliances(model, compensator, q);
  const auto chain = evaluate_chain(model, q, JointVector::Zero());
  const Matrix6d J = chain.point_jacobian(kNumJoints, chain.tool.translation());
  const JointVector spring_deflection = k.cwiseProduct(J.transpose() * F);
  std::vector<Eigen::Vector3d> out;
  out.reserve(model.markers.size());
  for (std::size_t m = 0; m < model.markers.size(); ++m)
    out.emplace_back(marker_jacobian(model, chain, m) * spring_deflection);
  return out;
}

Twist predict_tool_deflection(const ManipulatorModel& model,
                              const std::optional<CompensatorParams>& compensator,
                              const JointVector& q, const Wrench& F) {
  const JointVector k = effective_compliances(model, compensator, q);
  const Matrix6d J = jacobian_theta(model, q, JointVector::Zero(), kEndEffector);
  return J * k.cwiseProduct(J.transpose() * F);
}

Twist load_displacement(const ManipulatorModel& model,
                        const std::optional<CompensatorParams>& compensator, const JointVector& q,
                        const Wrench& F, const EquilibriumOptions& options) {
  const auto loaded = solve_equilibrium(model, compensator, q, AppliedWrench{F}, options);
  const auto reference = solve_equilibrium(model, compensator, q, AppliedWrench{}, options);
  if (!loaded.converged) throw NumericalError("load_displacement: " + loaded.diagnostics);
  if (!reference.converged) throw NumericalError("load_displacement: " + reference.diagnostics);
  return pose_difference(loaded.t, reference.t);
}

Eigen::Isometry3d compensate_target(const ManipulatorModel& model,
                                    const std::optional<CompensatorParams>& compensator,
                                    const JointVector& q, const Wrench& F,
                                    const Eigen::Isometry3d& desired, int iterations) {
  if (F.isZero(0.0)) return desired;
  Eigen::Isometry3d command = apply_twist(desired, -load_displacement(model, compensator, q, F));
  JointVector seed = q;
  for (int it = 1; it < iterations; ++it) {
    seed = inverse_kinematics(model, command, seed);
    command = apply_twist(desired, -load_displacement(model, compensator, seed, F));
  }
  return command;
}

}  // namespace elastocal
