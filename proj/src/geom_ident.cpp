#include "elastocal/geom_ident.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

namespace elastocal {

namespace {

constexpr double kMinSpanDeg = 30.0;
constexpr double kExactDataSigma = 1e-10;  // mm; below this the data is treated as exact

double wrap_angle(double x) { return std::remainder(x, 2.0 * std::numbers::pi); }

std::vector<Eigen::Vector2d> planar(const std::vector<Eigen::Vector3d>& pts) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.emplace_back(p.head<2>());
  return out;
}

std::vector<double> radians(const std::vector<double>& deg, double sign) {
  std::vector<double> out;
  out.reserve(deg.size());
  for (double d : deg) out.push_back(sign * deg2rad(d));
  return out;
}

Eigen::Vector2d unit(double q) { return {std::cos(q), std::sin(q)}; }

}  // namespace

void MarkerDataset::validate() const {
  const std::size_t m = q2_deg.size();
  if (p1.size() != m) throw InputError("marker dataset: P1 has " + std::to_string(p1.size()) +
                                       " rows, expected " + std::to_string(m));
  if (satellites.size() < 2) throw InputError("marker dataset: at least 2 P0 satellite markers required");
  for (std::size_t k = 0; k < satellites.size(); ++k)
    if (satellites[k].size() != m)
      throw InputError("marker dataset: satellite P0" + std::to_string(k + 1) + " has " +
                       std::to_string(satellites[k].size()) + " rows, expected " + std::to_string(m));
  std::set<double> distinct(q2_deg.begin(), q2_deg.end());
  if (distinct.size() < 3) throw InputError("marker dataset: at least 3 distinct q2 values required");
  if (*distinct.rbegin() - *distinct.begin() < kMinSpanDeg)
    throw InputError("marker dataset: q2 span below 30 deg, circle fit would be ill-conditioned");
}

CircleFit fit_circle_procrustes(std::span<const Eigen::Vector2d> points,
                                std::span<const double> angles_rad) {
  const std::size_t m = points.size();
  if (m < 3) throw InputError("fit_circle_procrustes: at least 3 points required");
  if (angles_rad.size() != m) throw InputError("fit_circle_procrustes: one angle per point required");

  Eigen::Vector2d p_mean = Eigen::Vector2d::Zero(), u_mean = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < m; ++i) {
    p_mean += points[i];
    u_mean += unit(angles_rad[i]);
  }
  p_mean /= static_cast<double>(m);
  u_mean /= static_cast<double>(m);

  Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
  double uu = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::Vector2d u = unit(angles_rad[i]) - u_mean;
    M += u * (points[i] - p_mean).transpose();
    uu += u.squaredNorm();
  }
  if (uu < 1e-12 * static_cast<double>(m))
    throw NumericalError("fit_circle_procrustes: rank deficient (all angles equal)");

  Eigen::JacobiSVD<Eigen::Matrix2d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  CircleFit fit;
  fit.rotation = svd.matrixV() * svd.matrixU().transpose();
  if (fit.rotation.determinant() < 0.0)
    throw AngleDirectionMismatch(
        "fit_circle_procrustes: angle direction mismatch (points turn opposite to the angles); "
        "negate the angles");
  double pru = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    pru += (points[i] - p_mean).dot(fit.rotation * (unit(angles_rad[i]) - u_mean));
  fit.radius = pru / uu;
  if (!(fit.radius > 0.0))
    throw AngleDirectionMismatch("fit_circle_procrustes: negative radius, negate the angles");
  fit.center = p_mean - fit.radius * fit.rotation * u_mean;

  double F = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    F += (fit.radius * fit.rotation * unit(angles_rad[i]) + fit.center - points[i]).squaredNorm();
  fit.rms = std::sqrt(F / static_cast<double>(m));
  return fit;
}

CircleFit fit_circle_kasa(std::span<const Eigen::Vector2d> points) {
  const auto m = static_cast<Eigen::Index>(points.size());
  if (m < 3) throw InputError("fit_circle_kasa: at least 3 points required");
  Eigen::MatrixXd A(m, 3);
  Eigen::VectorXd b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    A.row(i) << p.x(), p.y(), 1.0;
    b(i) = p.squaredNorm();
  }
  const auto qr = A.colPivHouseholderQr();
  if (qr.rank() < 3) throw NumericalError("fit_circle_kasa: collinear points");
  const Eigen::Vector3d x = qr.solve(b);
  CircleFit fit;
  fit.center = 0.5 * x.head<2>();
  fit.radius = std::sqrt(x(2) + fit.center.squaredNorm());
  double F = 0.0;
  for (const auto& p : points) F += std::pow((p - fit.center).norm() - fit.radius, 2);
  fit.rms = std::sqrt(F / static_cast<double>(m));
  return fit;
}

ConcentricFit fit_concentric_arcs(const std::vector<std::vector<Eigen::Vector3d>>& sets, ArcMode mode) {
  if (sets.empty()) throw InputError("fit_concentric_arcs: no point sets");
  const bool planar = mode == ArcMode::Planar2D;
  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  Eigen::Vector3d all_mean = Eigen::Vector3d::Zero();
  std::size_t total = 0;

  auto prepare = [planar](Eigen::Vector3d p) {
    if (planar) p.z() = 0.0;
    return p;
  };

  // |p - p0|^2 = R_j^2; subtracting the per-set mean eliminates R_j and
  // leaves 2 p_hat^T p0 = s_hat, one linear equation per point.
  for (std::size_t j = 0; j < sets.size(); ++j) {
    const auto& set = sets[j];
    if (set.size() < 3)
      throw InputError("fit_concentric_arcs: set " + std::to_string(j + 1) + " has fewer than 3 points");
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    double sq_mean = 0.0;
    for (const auto& raw : set) {
      const Eigen::Vector3d p = prepare(raw);
      mean += p;
      sq_mean += p.squaredNorm();
    }
    mean /= static_cast<double>(set.size());
    sq_mean /= static_cast<double>(set.size());
    for (const auto& raw : set) {
      const Eigen::Vector3d p = prepare(raw);
      const Eigen::Vector3d ph = p - mean;
      S += ph * ph.transpose();
      rhs += 0.5 * (p.squaredNorm() - sq_mean) * ph;
      all_mean += p;
    }
    total += set.size();
  }
  all_mean /= static_cast<double>(total);

  ConcentricFit fit;
  if (planar) {
    const Eigen::Matrix2d S2 = S.topLeftCorner<2, 2>();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(S2);
    if (eig.eigenvalues()(0) <= 1e-12 * eig.eigenvalues()(1) || eig.eigenvalues()(1) <= 0.0)
      throw NumericalError("fit_concentric_arcs: degenerate geometry (points collinear)");
    fit.center.head<2>() = S2.ldlt().solve(rhs.head<2>());
    fit.axis = Eigen::Vector3d::UnitZ();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(S);
    const Eigen::Vector3d ev = eig.eigenvalues();
    if (ev(1) <= 1e-12 * ev(2) || ev(2) <= 0.0)
      throw NumericalError("fit_concentric_arcs: ambiguous rotation axis (points collinear)");
    // The system is singular along the rotation axis; take the minimum-norm
    // solution and slide it along the axis to the plane of the markers,
    // which gives the smallest radii.
    const Eigen::Matrix3d V = eig.eigenvectors();
    Eigen::Vector3d pc = Eigen::Vector3d::Zero();
    for (int i = 1; i < 3; ++i) pc += V.col(i) * (V.col(i).dot(rhs) / ev(i));
    fit.axis = V.col(0).normalized();
    if (fit.axis.z() < 0.0) fit.axis = -fit.axis;
    const Eigen::Matrix3d nn = fit.axis * fit.axis.transpose();
    fit.center = (Eigen::Matrix3d::Identity() - nn) * pc + nn * all_mean;
  }

  double F = 0.0;
  for (const auto& set : sets) {
    double r2 = 0.0;
    for (const auto& raw : set) r2 += (prepare(raw) - fit.center).squaredNorm();
    const double R = std::sqrt(r2 / static_cast<double>(set.size()));
    fit.radii.push_back(R);
    for (const auto& raw : set) F += std::pow((prepare(raw) - fit.center).norm() - R, 2);
  }
  fit.rms = std::sqrt(F / static_cast<double>(total));
  return fit;
}

CompensatorGeometryEstimate identify_compensator_geometry(const MarkerDataset& dataset,
                                                          const GeometryOptions& options) {
  dataset.validate();
  const auto pts = planar(dataset.p1);

  CompensatorGeometryEstimate est;
  CircleFit circle;
  try {
    circle = fit_circle_procrustes(pts, radians(dataset.q2_deg, 1.0));
    est.angle_direction = 1;
  } catch (const AngleDirectionMismatch&) {
    circle = fit_circle_procrustes(pts, radians(dataset.q2_deg, -1.0));
    est.angle_direction = -1;
  }
  const ConcentricFit arcs = fit_concentric_arcs(dataset.satellites, options.mode);

  est.p2 = circle.center;
  est.p0 = arcs.center;
  est.rotation = circle.rotation;
  est.circle_rms = circle.rms;
  est.arcs_rms = arcs.rms;
  est.satellite_radii = arcs.radii;
  est.axis = arcs.axis;

  auto& g = est.geometry;
  g.L = circle.radius;
  const Eigen::Vector2d a = est.p2 - est.p0.head<2>();
  g.a_x = a.x();
  g.a_y = a.y();
  // Crank direction in the tracker frame is psi0 + dir * q2; the crank angle
  // measured from the P0->P2 direction must decrease with q2.
  const double psi0 = std::atan2(circle.rotation(1, 0), circle.rotation(0, 0));
  g.gamma_offset = wrap_angle(est.angle_direction < 0 ? psi0 - 2.0 * g.alpha() : -psi0);
  g.validate();

  if (options.ci_samples > 0)
    est.ci = confidence_intervals_geometry(dataset, est, options.ci_samples, options.seed, options.mode);
  return est;
}

Eigen::Vector3d confidence_intervals_geometry(const MarkerDataset& dataset,
                                              const CompensatorGeometryEstimate& estimate,
                                              int n_samples, std::uint64_t seed, ArcMode mode) {
  if (n_samples < 2) throw InputError("confidence_intervals_geometry: need at least 2 samples");
  const std::size_t m = dataset.rows();
  const std::size_t k = dataset.satellites.size();
  const double dir = estimate.angle_direction;

  // Fitted tracks.
  MarkerDataset fitted = dataset;
  for (std::size_t i = 0; i < m; ++i)
    fitted.p1[i].head<2>() = estimate.geometry.L * estimate.rotation * unit(dir * deg2rad(dataset.q2_deg[i])) +
                             estimate.p2;
  const Eigen::Vector3d n = estimate.axis;
  double radial = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      Eigen::Vector3d v = dataset.satellites[j][i] - estimate.p0;
      const double along = v.dot(n);
      if (mode == ArcMode::Planar2D) v.z() = 0.0;
      else v -= along * n;
      const double r = v.norm();
      radial += std::pow(r - estimate.satellite_radii[j], 2);
      fitted.satellites[j][i] = estimate.p0 + estimate.satellite_radii[j] * v / r + along * n;
    }
  }

  const double dof_circle = 2.0 * static_cast<double>(m) - 4.0;
  const double dof_arcs = static_cast<double>(k * m) - 2.0 - static_cast<double>(k);
  const double sigma_circle =
      dof_circle > 0 ? std::sqrt(std::pow(estimate.circle_rms, 2) * static_cast<double>(m) / dof_circle) : 0.0;
  const double sigma_arcs = dof_arcs > 0 ? std::sqrt(radial / dof_arcs) : 0.0;
  if (sigma_circle < kExactDataSigma && sigma_arcs < kExactDataSigma) return Eigen::Vector3d::Zero();

  Eigen::MatrixXd samples(n_samples, 3);
  GeometryOptions inner;
  inner.mode = mode;
  inner.ci_samples = 0;
  for (int s = 0; s < n_samples; ++s) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(s));
    std::normal_distribution<double> noise(0.0, 1.0);
    MarkerDataset d = fitted;
    for (auto& p : d.p1)
      for (int c = 0; c < 3; ++c) p(c) += sigma_circle * noise(rng);
    for (auto& track : d.satellites)
      for (auto& p : track)
        for (int c = 0; c < 3; ++c) p(c) += sigma_arcs * noise(rng);
    const auto e = identify_compensator_geometry(d, inner);
    samples.row(s) << e.geometry.L, e.geometry.a_x, e.geometry.a_y;
  }
  const Eigen::RowVector3d mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - mean;
  const Eigen::Vector3d var = centered.colwise().squaredNorm().transpose() / static_cast<double>(n_samples - 1);
  return 3.0 * var.cwiseSqrt();
}

}  // namespace elastocal
