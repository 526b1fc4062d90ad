#pragma once

// Compensator geometry from laser-tracker marker tracks.
//
// Step 1 fits the crank-pin marker P1 to a circle about the joint-2 axis P2
// using the known joint angles (angle-annotated Procrustes fit). Step 2 fits
// the satellite markers, which rotate with the spring housing about P0, to
// concentric arcs. L = radius, (a_x, a_y) = p2 - p0.

#include "elastocal/compensator.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace elastocal {

struct MarkerDataset {
  std::vector<double> q2_deg;
  std::vector<Eigen::Vector3d> p1;                       ///< one per row, mm
  std::vector<std::vector<Eigen::Vector3d>> satellites;  ///< [marker][row], mm
  bool has_z = false;

  std::size_t rows() const { return q2_deg.size(); }

  /// >= 3 distinct q2 values spanning >= 30 deg, >= 2 satellites, equal row
  /// counts. Throws InputError.
  void validate() const;
};

/// Points modelled as mu R u(q) + t, u(q) = (cos q, sin q).
struct CircleFit {
  double radius = 0.0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
  double rms = 0.0;  ///< sqrt(sum |residual|^2 / m)
};

/// Thrown when the points run the opposite way to the angles (the best
/// orthogonal map is a reflection). Negating the angles resolves it.
class AngleDirectionMismatch : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

CircleFit fit_circle_procrustes(std::span<const Eigen::Vector2d> points,
                                std::span<const double> angles_rad);

/// Plain algebraic (Kasa) fit, ignoring the angles. rotation is identity.
CircleFit fit_circle_kasa(std::span<const Eigen::Vector2d> points);

enum class ArcMode { Planar2D, Spatial3D };

struct ConcentricFit {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  ///< z = 0 in planar mode
  std::vector<double> radii;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  double rms = 0.0;  ///< radial residual
};

ConcentricFit fit_concentric_arcs(const std::vector<std::vector<Eigen::Vector3d>>& sets,
                                  ArcMode mode = ArcMode::Planar2D);

struct GeometryOptions {
  ArcMode mode = ArcMode::Planar2D;
  int ci_samples = 200;  ///< 0 skips the confidence intervals
  std::uint64_t seed = 1;
};

struct CompensatorGeometryEstimate {
  CompensatorGeometry geometry;  ///< includes the phase offset of the joint zero
  Eigen::Vector3d ci = Eigen::Vector3d::Zero();  ///< +-3 sigma for L, a_x, a_y
  Eigen::Vector2d p2 = Eigen::Vector2d::Zero();
  Eigen::Vector3d p0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
  int angle_direction = 1;  ///< -1 when the tracker sees q2 running clockwise
  double circle_rms = 0.0;
  double arcs_rms = 0.0;
  std::vector<double> satellite_radii;
};

CompensatorGeometryEstimate identify_compensator_geometry(const MarkerDataset& dataset,
                                                          const GeometryOptions& options = {});

/// Parametric residual resampling: refits n_samples synthetic datasets built
/// from the fitted tracks plus Gaussian noise at the residual level. Returns
/// 3 sigma for (L, a_x, a_y); zeros for exact data.
Eigen::Vector3d confidence_intervals_geometry(const MarkerDataset& dataset,
                                              const CompensatorGeometryEstimate& estimate,
                                              int n_samples, std::uint64_t seed,
                                              ArcMode mode = ArcMode::Planar2D);

}  // namespace elastocal
