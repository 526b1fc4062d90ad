#pragma once

// Serial 6R manipulator with one rotational virtual spring in series with each
// actuated joint. Joint i turns by q_i + theta_i about its axis, expressed in
// the frame reached after the base transform and all previous links. Node j
// sits at the distal end of link j; node 6 is the flange and the tool frame
// hangs off it.
//
// Units: mm, N, N*mm, rad, kg. Gravity is in m/s^2 so that mass * gravity is N.

#include "elastocal/common.hpp"
#include "elastocal/compensator.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace elastocal {

struct JointSpec {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Isometry3d link = Eigen::Isometry3d::Identity();  ///< joint frame -> next joint
  double compliance = 0.0;                                 ///< rad/(N*mm)
  double mass = 0.0;                                       ///< kg
  Eigen::Vector3d com = Eigen::Vector3d::Zero();           ///< mm, link frame
};

struct ManipulatorModel {
  std::string name;
  std::array<JointSpec, kNumJoints> joints;
  Eigen::Isometry3d base = Eigen::Isometry3d::Identity();
  Eigen::Isometry3d tool = Eigen::Isometry3d::Identity();
  Eigen::Vector3d gravity{0.0, 0.0, -9.81};
  std::vector<Eigen::Vector3d> markers;  ///< tool frame, mm
  std::optional<CompensatorParams> compensator;

  /// Checks unit axes, rigid transforms, non-negative compliance and mass.
  void validate() const;

  JointVector compliances() const;
};

/// Per-node gravity wrenches. The share of link 1 resting on the fixed base
/// end is kept separately since it loads no spring.
struct NodeLoading {
  std::array<Wrench, kNumJoints> nodes{};
  Eigen::Vector3d base_reaction = Eigen::Vector3d::Zero();

  NodeLoading() {
    for (auto& w : nodes) w.setZero();
  }

  /// Aggregate matrix G = [G_1 ... G_6].
  Matrix6d matrix() const;
  Eigen::Vector3d total_force() const;
};

/// Cached geometry of one evaluation of the chain at (q, theta).
struct ChainKinematics {
  std::array<Eigen::Vector3d, kNumJoints> axes;     ///< joint axes, base frame
  std::array<Eigen::Vector3d, kNumJoints> origins;  ///< joint frame origins, base frame
  std::array<Eigen::Isometry3d, kNumJoints> link_frames;  ///< after joint rotation
  std::array<Eigen::Isometry3d, kNumJoints> nodes;        ///< distal link ends
  Eigen::Isometry3d tool;

  /// Position-then-rotation Jacobian of a point rigidly attached to link
  /// `active` (number of joints upstream, 1..6). Columns beyond are zero.
  Matrix6d point_jacobian(int active, const Eigen::Vector3d& point) const;

  /// Symmetric Hessian of the virtual work of wrench w applied at `point`.
  Matrix6d point_hessian(int active, const Eigen::Vector3d& point, const Wrench& w) const;
};

ChainKinematics evaluate_chain(const ManipulatorModel& model, const JointVector& q,
                               const JointVector& theta);

inline constexpr int kEndEffector = 7;

Eigen::Isometry3d fk(const ManipulatorModel& model, const JointVector& q, const JointVector& theta);

/// Pose of node j, 1 <= j <= 6.
Eigen::Isometry3d fk_node(const ManipulatorModel& model, const JointVector& q,
                          const JointVector& theta, int node);

/// dg_j/dtheta for node 1..6 or kEndEffector (tool frame origin).
Matrix6d jacobian_theta(const ManipulatorModel& model, const JointVector& q,
                        const JointVector& theta, int node);

/// H = sum_j d^2(g_j^T G_j)/dtheta^2 + d^2(g^T F)/dtheta^2, with gravity held
/// constant in the base frame. Moment contributions use the rotation vector
/// relative to the evaluation pose, which makes H exactly symmetric.
Matrix6d hessian_theta(const ManipulatorModel& model, const JointVector& q,
                       const JointVector& theta, const NodeLoading& loading, const Wrench& F);

/// Splits each link weight over its two ends by the lever rule.
NodeLoading gravity_loading(const ManipulatorModel& model, const JointVector& q,
                            const JointVector& theta);

/// Marker position (base frame) for marker index m (0-based).
Eigen::Vector3d marker_position(const ManipulatorModel& model, const ChainKinematics& chain,
                                std::size_t m);

/// Position rows of the Jacobian of marker m.
Matrix36d marker_jacobian(const ManipulatorModel& model, const ChainKinematics& chain,
                          std::size_t m);

/// [p_target - p_actual; log(R_target R_actual^T)].
Twist pose_difference(const Eigen::Isometry3d& target, const Eigen::Isometry3d& actual);

/// Applies a small spatial displacement: p + d.head, exp(d.tail) R.
Eigen::Isometry3d apply_twist(const Eigen::Isometry3d& pose, const Twist& d);

Eigen::Isometry3d make_transform(const Eigen::Vector3d& translation, const Eigen::Vector3d& rpy);

/// Damped Newton inverse kinematics on the rigid chain (theta = 0).
JointVector inverse_kinematics(const ManipulatorModel& model, const Eigen::Isometry3d& target,
                               const JointVector& seed, double tolerance = 1e-10,
                               int max_iterations = 100);

/// Parses the JSON model format (see docs/formats.md). Throws InputError.
ManipulatorModel load_model(std::string_view text);
ManipulatorModel load_model_file(const std::string& path);

}  // namespace elastocal
