#pragma once

// Joint compliances and compensator elastics from loaded-deflection
// measurements. Joint 2 gets one compliance per q2 bucket since its
// equivalent stiffness depends on q2; the bucket stiffnesses are then split
// into the bare joint stiffness and the compensator spring.

#include "elastocal/robot_model.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace elastocal {

struct MarkerDeflection {
  int id = 1;  ///< 1-based index into model.markers
  Eigen::Vector3d dp = Eigen::Vector3d::Zero();  ///< after - before, mm
};

struct DeflectionRecord {
  JointVector q = JointVector::Zero();
  Wrench F = Wrench::Zero();
  std::vector<MarkerDeflection> markers;
  int repeat = 0;
};

struct ParameterLayout {
  std::vector<int> joints{2, 3, 4, 5, 6};  ///< included joints, 1-based
  std::vector<double> q2_buckets;          ///< rad
  double tolerance = deg2rad(0.1);

  /// Bucket index for q2, or -1.
  int bucket_of(double q2) const;
  bool includes(int joint) const;
  int size() const;
  /// Column of joint j (j != 2) or -1 when excluded.
  int column_of_joint(int joint) const;
  int column_of_bucket(int bucket) const;
  std::vector<std::string> labels() const;

  /// Joints within 1..6, no duplicates, buckets distinct beyond tolerance.
  void validate() const;

  /// Buckets from the distinct q2 values of the records (clustered within
  /// tolerance, in order of appearance).
  static ParameterLayout from_records(std::span<const DeflectionRecord> records,
                                      std::vector<int> joints = {2, 3, 4, 5, 6});
};

/// Tool-point observation matrix: column j is J_j J_j^T F.
Matrix6d observation_matrix(const ManipulatorModel& model, const JointVector& q, const Wrench& F);

/// Position rows of the observation matrix at marker m (0-based).
Matrix36d marker_observation_matrix(const ManipulatorModel& model, const JointVector& q,
                                    const Wrench& F, std::size_t marker);

struct Regressor {
  Eigen::MatrixXd B;
  Eigen::VectorXd dp;
};

/// Stacks 3 rows per record and marker with joint 2 routed to its bucket.
Regressor build_regressor(std::span<const DeflectionRecord> records, const ParameterLayout& layout,
                          const ManipulatorModel& model);

struct ComplianceEstimate {
  std::vector<std::string> labels;
  Eigen::VectorXd k;           ///< rad/(N*mm), layout order
  Eigen::MatrixXd covariance;  ///< sigma_hat^2 (B^T B)^-1
  Eigen::MatrixXd information; ///< B^T B
  double sigma_hat = 0.0;      ///< mm
  double rms = 0.0;            ///< mm
  int equations = 0;
  std::vector<std::string> warnings;
};

/// Least squares on a prebuilt regressor. Rank deficiency throws
/// NumericalError naming the unidentifiable combinations.
ComplianceEstimate identify_compliances(const Regressor& reg, const ParameterLayout& layout);

ComplianceEstimate identify_compliances(std::span<const DeflectionRecord> records,
                                        const ParameterLayout& layout, const ManipulatorModel& model);

struct CompensatorElasticEstimate {
  double K0 = 0.0;    ///< bare joint-2 stiffness, N*mm/rad
  double K_c = 0.0;   ///< N/mm
  double s0 = 0.0;    ///< mm
  double condition_number = 0.0;
  double rms = 0.0;   ///< N*mm/rad
  std::vector<std::string> warnings;
};

/// Fits K_theta2i = K0 + K_c a L eta(q2i) for (K0, K_c, s0 K_c), linear in
/// those unknowns. Needs at least 3 buckets.
CompensatorElasticEstimate separate_compensator(std::span<const double> stiffness,
                                                const CompensatorGeometry& geometry,
                                                std::span<const double> q2);

/// The physical parameter set: compliances k_1..k_6 (NaN when excluded,
/// k_2 = 1/K0) plus K_c and s0.
struct ElastostaticEstimate {
  ComplianceEstimate compliances;
  std::optional<CompensatorElasticEstimate> compensator;
  JointVector k = JointVector::Constant(std::numeric_limits<double>::quiet_NaN());
  std::vector<double> bucket_k2;
};

ElastostaticEstimate identify_elastostatics(std::span<const DeflectionRecord> records,
                                            const ParameterLayout& layout,
                                            const ManipulatorModel& model,
                                            const std::optional<CompensatorGeometry>& geometry);

struct ElastostaticIntervals {
  JointVector k = JointVector::Zero();  ///< +-3 sigma, physical compliances
  Eigen::VectorXd layout_k;             ///< +-3 sigma, layout order
  double K0 = 0.0;
  double K_c = 0.0;
  double s0 = 0.0;
  int samples = 0;
};

/// Residual resampling through the whole pipeline (least squares, inversion
/// of the bucket compliances and compensator separation).
ElastostaticIntervals confidence_intervals_elasto(std::span<const DeflectionRecord> records,
                                                  const ParameterLayout& layout,
                                                  const ManipulatorModel& model,
                                                  const std::optional<CompensatorGeometry>& geometry,
                                                  const ElastostaticEstimate& estimate,
                                                  int n_samples, std::uint64_t seed);

}  // namespace elastocal
