#pragma once

// Virtual robot cell: synthetic tracker data from ground-truth parameters.

#include "elastocal/doe.hpp"
#include "elastocal/geom_ident.hpp"
#include "elastocal/stiffness.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace elastocal {

/// Satellite marker on the spring housing, polar offset from P0 relative to
/// the P0 -> P1 direction.
struct SatelliteOffset {
  double radius = 0.0;  ///< mm
  double phase = 0.0;   ///< rad
};

struct GeometryTruth {
  CompensatorGeometry geometry;
  Eigen::Vector3d p2 = Eigen::Vector3d::Zero();  ///< tracker frame, mm
  int angle_direction = -1;                      ///< sign of dq2 seen by the tracker
  std::vector<SatelliteOffset> satellites{{186.5, deg2rad(157.7)}, {188.2, deg2rad(202.5)}};
  double sigma = 0.0;  ///< mm per coordinate
  std::uint64_t seed = 0;
  bool with_z = false;
};

MarkerDataset simulate_geometry_dataset(const GeometryTruth& truth, std::span<const double> q2_deg);

enum class DeflectionModel {
  Nonlinear,  ///< loaded and unloaded equilibria solved with gravity
  Linear      ///< first-order prediction sum_j k_j J_j J_j^T F
};

struct DeflectionSimOptions {
  double sigma = 0.0;  ///< mm per coordinate of each position measurement
  std::uint64_t seed = 0;
  DeflectionModel mode = DeflectionModel::Nonlinear;
};

/// One record per plan entry and repeat, all model markers observed. The
/// model carries the true compliances and compensator.
std::vector<DeflectionRecord> simulate_deflection_records(const ManipulatorModel& truth,
                                                          const CalibrationPlan& plan, int repeats,
                                                          const DeflectionSimOptions& options);

}  // namespace elastocal
