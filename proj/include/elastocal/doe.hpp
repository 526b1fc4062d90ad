#pragma once

// Calibration experiment design: parameter covariance of a plan, the
// test-pose accuracy measure rho0^2 and a derivative-free plan search.

#include "elastocal/elasto_ident.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace elastocal {

struct NoiseModel {
  double sigma = 0.03;  ///< mm per measured deflection coordinate
};

struct TestPose {
  JointVector q = JointVector::Zero();
  Wrench F = Wrench::Zero();
};

struct PlanEntry {
  JointVector q = JointVector::Zero();
  Wrench F = Wrench::Zero();
  int bucket = 0;  ///< index into the layout's q2 buckets
};

struct CalibrationPlan {
  std::vector<PlanEntry> entries;
  double score = std::numeric_limits<double>::quiet_NaN();  ///< rho0^2 / sigma^2, mm^2
  std::string diagnostics;
};

struct PlanConstraints {
  double F_max = 0.0;  ///< N
  JointVector lower = JointVector::Constant(-std::numbers::pi);
  JointVector upper = JointVector::Constant(std::numbers::pi);
  std::vector<std::pair<double, double>> q1_allowed;  ///< rad intervals; empty = whole range
  std::vector<double> q2_buckets;                     ///< rad
  /// Load direction; defaults to the gravity direction of the model when zero.
  Eigen::Vector3d load_direction = Eigen::Vector3d::Zero();
  /// When > 0, each entry picks its load direction from a cone of this half
  /// angle around load_direction (cone_directions rays plus the axis).
  double cone_half_angle = 0.0;
  int cone_directions = 6;

  /// Throws InputError if no plan can satisfy the constraints.
  void validate() const;
};

/// Constraint violations of a plan (empty when feasible).
std::vector<std::string> check_plan(const CalibrationPlan& plan, const PlanConstraints& constraints,
                                    const ParameterLayout& layout);

/// Marker-stacked regressor of a plan with unit-weight equations (every
/// model marker observed once per entry).
Regressor plan_regressor(const CalibrationPlan& plan, const ManipulatorModel& model,
                         const ParameterLayout& layout);

/// sigma^2 (B^T B)^-1.
Eigen::MatrixXd parameter_covariance(const CalibrationPlan& plan, const ManipulatorModel& model,
                                     const ParameterLayout& layout, const NoiseModel& noise);

/// (B^T B)^-1 B^T diag(v) B (B^T B)^-1 for per-equation noise variances v.
Eigen::MatrixXd sandwich_covariance(const CalibrationPlan& plan, const ManipulatorModel& model,
                                    const ParameterLayout& layout, const Eigen::VectorXd& variances);

struct AccuracyMeasure {
  double rho2 = 0.0;  ///< mm^2
  double rms = 0.0;   ///< mm
};

/// rho0^2 = sigma^2 trace(A0 sum_j (B_j^T B_j)^-1 A0^T), one compliance
/// vector per q2 bucket, A0 = position rows of the observation matrix at the
/// test pose restricted to the included joints.
AccuracyMeasure test_pose_accuracy(const CalibrationPlan& plan, const ManipulatorModel& model,
                                   const ParameterLayout& layout, const TestPose& test,
                                   const NoiseModel& noise);

struct OptimizerOptions {
  int starts = 20;
  int levels = 3;
  int grid_points = 13;
  int max_sweeps = 4;
};

CalibrationPlan random_feasible_plan(const ManipulatorModel& model, const PlanConstraints& constraints,
                                     int per_bucket, std::mt19937_64& rng);

/// Multi-start cyclic coordinate descent over the joint angles (and load
/// direction when a cone is configured); loads have magnitude F_max.
/// Deterministic given the seed; ties go to the lowest start index.
CalibrationPlan optimize_plan(const ManipulatorModel& model, const ParameterLayout& layout,
                              const TestPose& test, const PlanConstraints& constraints,
                              int per_bucket, std::uint64_t seed, const OptimizerOptions& options = {});

}  // namespace elastocal
