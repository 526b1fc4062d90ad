#include "elastocal/robot_model.hpp"

#include <cmath>
#include <string>

namespace elastocal {

namespace {

void check_rigid(const Eigen::Isometry3d& T, const std::string& field) {
  const Eigen::Matrix3d R = T.linear();
  if ((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() > 1e-9 ||
      std::abs(R.determinant() - 1.0) > 1e-9)
    throw InputError(field + ": transform is not rigid");
  if (!T.translation().allFinite()) throw InputError(field + ": translation not finite");
}

Eigen::Vector3d rotation_log(const Eigen::Matrix3d& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

}  // namespace

void ManipulatorModel::validate() const {
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& j = joints[static_cast<std::size_t>(i)];
    const std::string field = "joints[" + std::to_string(i) + "]";
    if (std::abs(j.axis.norm() - 1.0) >= 1e-12) throw InputError(field + ".axis: not a unit vector");
    check_rigid(j.link, field + ".link");
    if (!(j.compliance >= 0.0)) throw InputError(field + ".compliance: must be >= 0");
    if (!(j.mass >= 0.0)) throw InputError(field + ".mass: must be >= 0");
    if (!j.com.allFinite()) throw InputError(field + ".com: not finite");
  }
  check_rigid(base, "base");
  check_rigid(tool, "tool");
  if (!gravity.allFinite()) throw InputError("gravity: not finite");
  for (const auto& m : markers)
    if (!m.allFinite()) throw InputError("markers: not finite");
  if (compensator) compensator->validate();
}

JointVector ManipulatorModel::compliances() const {
  JointVector k;
  for (int i = 0; i < kNumJoints; ++i) k(i) = joints[static_cast<std::size_t>(i)].compliance;
  return k;
}

Matrix6d NodeLoading::matrix() const {
  Matrix6d G;
  for (int j = 0; j < kNumJoints; ++j) G.col(j) = nodes[static_cast<std::size_t>(j)];
  return G;
}

Eigen::Vector3d NodeLoading::total_force() const {
  Eigen::Vector3d total = base_reaction;
  for (const auto& w : nodes) total += w.head<3>();
  return total;
}

Matrix6d ChainKinematics::point_jacobian(int active, const Eigen::Vector3d& point) const {
  Matrix6d J = Matrix6d::Zero();
  for (int i = 0; i < active; ++i) {
    const auto& z = axes[static_cast<std::size_t>(i)];
    J.block<3, 1>(0, i) = z.cross(point - origins[static_cast<std::size_t>(i)]);
    J.block<3, 1>(3, i) = z;
  }
  return J;
}

Matrix6d ChainKinematics::point_hessian(int active, const Eigen::Vector3d& point,
                                        const Wrench& w) const {
  const Eigen::Vector3d f = w.head<3>();
  const Eigen::Vector3d m = w.tail<3>();
  Matrix6d H = Matrix6d::Zero();
  for (int a = 0; a < active; ++a) {
    const auto& za = axes[static_cast<std::size_t>(a)];
    for (int b = a; b < active; ++b) {
      const auto& zb = axes[static_cast<std::size_t>(b)];
      // d/dtheta_a of the lever arm of joint b: the distal joint's axis and
      // origin move with the proximal one, the point moves with both.
      double h = za.cross(zb.cross(point - origins[static_cast<std::size_t>(b)])).dot(f);
      if (a < b) h += 0.5 * m.dot(za.cross(zb));
      H(a, b) = h;
      H(b, a) = h;
    }
  }
  return H;
}

ChainKinematics evaluate_chain(const ManipulatorModel& model, const JointVector& q,
                               const JointVector& theta) {
  ChainKinematics c;
  Eigen::Isometry3d T = model.base;
  for (int i = 0; i < kNumJoints; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto& joint = model.joints[idx];
    c.origins[idx] = T.translation();
    c.axes[idx] = T.linear() * joint.axis;
    T = T * Eigen::AngleAxisd(q(i) + theta(i), joint.axis);
    c.link_frames[idx] = T;
    T = T * joint.link;
    c.nodes[idx] = T;
  }
  c.tool = T * model.tool;
  return c;
}

Eigen::Isometry3d fk(const ManipulatorModel& model, const JointVector& q, const JointVector& theta) {
  return evaluate_chain(model, q, theta).tool;
}

Eigen::Isometry3d fk_node(const ManipulatorModel& model, const JointVector& q,
                          const JointVector& theta, int node) {
  if (node < 1 || node > kNumJoints)
    throw InputError("fk_node: node index " + std::to_string(node) + " out of range 1..6");
  return evaluate_chain(model, q, theta).nodes[static_cast<std::size_t>(node - 1)];
}

Matrix6d jacobian_theta(const ManipulatorModel& model, const JointVector& q,
                        const JointVector& theta, int node) {
  const auto chain = evaluate_chain(model, q, theta);
  if (node == kEndEffector) return chain.point_jacobian(kNumJoints, chain.tool.translation());
  if (node < 1 || node > kNumJoints)
    throw InputError("jacobian_theta: node index " + std::to_string(node) + " out of range");
  return chain.point_jacobian(node, chain.nodes[static_cast<std::size_t>(node - 1)].translation());
}

Matrix6d hessian_theta(const ManipulatorModel& model, const JointVector& q,
                       const JointVector& theta, const NodeLoading& loading, const Wrench& F) {
  const auto chain = evaluate_chain(model, q, theta);
  Matrix6d H = chain.point_hessian(kNumJoints, chain.tool.translation(), F);
  for (int j = 0; j < kNumJoints; ++j) {
    const auto& G = loading.nodes[static_cast<std::size_t>(j)];
    if (G.isZero(0.0)) continue;
    H += chain.point_hessian(j + 1, chain.nodes[static_cast<std::size_t>(j)].translation(), G);
  }
  return H;
}

NodeLoading gravity_loading(const ManipulatorModel& model, const JointVector& /*q*/,
                            const JointVector& /*theta*/) {
  // Forces are constant in the base frame and the lever rule only uses the
  // rigid link geometry, so the split does not depend on the configuration.
  NodeLoading out;
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& joint = model.joints[static_cast<std::size_t>(i)];
    if (joint.mass == 0.0) continue;
    const Eigen::Vector3d weight = joint.mass * model.gravity;
    const Eigen::Vector3d d = joint.link.translation();
    const double len2 = d.squaredNorm();
    const double distal = len2 > 0.0 ? joint.com.dot(d) / len2 : 1.0;
    out.nodes[static_cast<std::size_t>(i)].head<3>() += distal * weight;
    if (i == 0)
      out.base_reaction += (1.0 - distal) * weight;
    else
      out.nodes[static_cast<std::size_t>(i - 1)].head<3>() += (1.0 - distal) * weight;
  }
  return out;
}

Eigen::Vector3d marker_position(const ManipulatorModel& model, const ChainKinematics& chain,
                                std::size_t m) {
  if (m >= model.markers.size()) throw InputError("marker index out of range");
  return chain.tool * model.markers[m];
}

Matrix36d marker_jacobian(const ManipulatorModel& model, const ChainKinematics& chain,
                          std::size_t m) {
  return chain.point_jacobian(kNumJoints, marker_position(model, chain, m)).topRows<3>();
}

Twist pose_difference(const Eigen::Isometry3d& target, const Eigen::Isometry3d& actual) {
  Twist d;
  d.head<3>() = target.translation() - actual.translation();
  d.tail<3>() = rotation_log(target.linear() * actual.linear().transpose());
  return d;
}

Eigen::Isometry3d apply_twist(const Eigen::Isometry3d& pose, const Twist& d) {
  Eigen::Isometry3d out = pose;
  out.translation() += d.head<3>();
  const double angle = d.tail<3>().norm();
  if (angle > 0.0)
    out.linear() = Eigen::AngleAxisd(angle, d.tail<3>() / angle).toRotationMatrix() * pose.linear();
  return out;
}

Eigen::Isometry3d make_transform(const Eigen::Vector3d& translation, const Eigen::Vector3d& rpy) {
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.linear() = (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
                Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
                Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
                   .toRotationMatrix();
  T.translation() = translation;
  return T;
}

JointVector inverse_kinematics(const ManipulatorModel& model, const Eigen::Isometry3d& target,
                               const JointVector& seed, double tolerance, int max_iterations) {
  const JointVector zero = JointVector::Zero();
  JointVector q = seed;
  for (int it = 0; it < max_iterations; ++it) {
    const auto chain = evaluate_chain(model, q, zero);
    const Twist err = pose_difference(target, chain.tool);
    if (err.norm() < tolerance) return q;
    const Matrix6d J = chain.point_jacobian(kNumJoints, chain.tool.translation());
    // Levenberg-style damping keeps steps bounded near singularities.
    const double lambda = 1e-9 * J.squaredNorm();
    const Matrix6d A = J.transpose() * J + lambda * Matrix6d::Identity();
    q += A.ldlt().solve(J.transpose() * err);
  }
  const Twist err = pose_difference(target, fk(model, q, zero));
  if (err.norm() < 1e3 * tolerance) return q;
  throw NumericalError("inverse_kinematics: no convergence (residual " +
                       std::to_string(err.norm()) + ")");
}

}  // namespace elastocal
