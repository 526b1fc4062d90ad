#include "elastocal/elasto_ident.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace elastocal {

namespace {

constexpr double kRankTolerance = 1e-12;
constexpr double kNegligibleColumn = 1e-10;
constexpr double kExactDataLevel = 1e-10;

// Least squares with column equilibration; returns the solution and fills
// the information matrix inverse.
struct ScaledSolver {
  Eigen::VectorXd scale;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;

  // Columns below kNegligibleColumn of the largest are round-off, not signal:
  // they are zeroed so that the rank test catches them.
  explicit ScaledSolver(const Eigen::MatrixXd& B) : scale(B.cols()) {
    const double top = B.colwise().norm().maxCoeff();
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
      const double n = B.col(j).norm();
      scale(j) = n > kNegligibleColumn * top ? 1.0 / n : 0.0;
    }
    qr.setThreshold(kRankTolerance);
    qr.compute(B * scale.asDiagonal());
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& y) const { return scale.asDiagonal() * qr.solve(y); }
};

std::string describe_null_space(const Eigen::MatrixXd& info, const std::vector<std::string>& labels) {
  Eigen::VectorXd d = info.diagonal().cwiseSqrt();
  const double dmax = d.maxCoeff();
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d(i) <= kNegligibleColumn * dmax) d(i) = 1.0;
  const Eigen::MatrixXd normalized = d.cwiseInverse().asDiagonal() * info * d.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normalized);
  const double top = eig.eigenvalues().maxCoeff();
  std::ostringstream out;
  int count = 0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    if (eig.eigenvalues()(i) > kRankTolerance * top) continue;
    out << (count++ ? "; " : "") << "[";
    const Eigen::VectorXd v = eig.eigenvectors().col(i);
    bool first = true;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (std::abs(v(j)) < 1e-3) continue;
      out << (first ? "" : " ") << (v(j) >= 0 ? "+" : "") << std::setprecision(3) << v(j) << "*"
          << labels[static_cast<std::size_t>(j)];
      first = false;
    }
    out << "]";
  }
  return out.str();
}

double stddev(const Eigen::VectorXd& x) {
  if (x.size() < 2) return 0.0;
  const double mean = x.mean();
  return std::sqrt((x.array() - mean).square().sum() / static_cast<double>(x.size() - 1));
}

}  // namespace

int ParameterLayout::bucket_of(double q2) const {
  for (std::size_t b = 0; b < q2_buckets.size(); ++b)
    if (std::abs(q2 - q2_buckets[b]) <= tolerance) return static_cast<int>(b);
  return -1;
}

bool ParameterLayout::includes(int joint) const {
  return std::find(joints.begin(), joints.end(), joint) != joints.end();
}

int ParameterLayout::size() const {
  int n = 0;
  for (int j = 1; j <= kNumJoints; ++j)
    if (includes(j)) n += j == 2 ? static_cast<int>(q2_buckets.size()) : 1;
  return n;
}

int ParameterLayout::column_of_joint(int joint) const {
  if (joint == 2 || !includes(joint)) return -1;
  int col = 0;
  for (int j = 1; j < joint; ++j)
    if (includes(j)) col += j == 2 ? static_cast<int>(q2_buckets.size()) : 1;
  return col;
}

int ParameterLayout::column_of_bucket(int bucket) const {
  if (!includes(2)) return -1;
  return (includes(1) ? 1 : 0) + bucket;
}

std::vector<std::string> ParameterLayout::labels() const {
  std::vector<std::string> out;
  for (int j = 1; j <= kNumJoints; ++j) {
    if (!includes(j)) continue;
    if (j == 2) {
      for (std::size_t b = 0; b < q2_buckets.size(); ++b) out.push_back("k2_" + std::to_string(b + 1));
    } else {
      out.push_back("k" + std::to_string(j));
    }
  }
  return out;
}

void ParameterLayout::validate() const {
  if (joints.empty()) throw InputError("layout: no joints included");
  for (std::size_t i = 0; i < joints.size(); ++i) {
    if (joints[i] < 1 || joints[i] > kNumJoints) throw InputError("layout: joint index out of range 1..6");
    for (std::size_t j = i + 1; j < joints.size(); ++j)
      if (joints[i] == joints[j]) throw InputError("layout: duplicate joint " + std::to_string(joints[i]));
  }
  if (includes(2) && q2_buckets.empty()) throw InputError("layout: joint 2 included but no q2 buckets");
  for (std::size_t i = 0; i < q2_buckets.size(); ++i)
    for (std::size_t j = i + 1; j < q2_buckets.size(); ++j)
      if (std::abs(q2_buckets[i] - q2_buckets[j]) <= 2.0 * tolerance)
        throw InputError("layout: q2 buckets " + std::to_string(i + 1) + " and " + std::to_string(j + 1) +
                         " are not distinct beyond the tolerance");
}

ParameterLayout ParameterLayout::from_records(std::span<const DeflectionRecord> records,
                                              std::vector<int> joints) {
  ParameterLayout layout;
  layout.joints = std::move(joints);
  for (const auto& r : records)
    if (layout.bucket_of(r.q(1)) < 0) layout.q2_buckets.push_back(r.q(1));
  return layout;
}

Matrix6d observation_matrix(const ManipulatorModel& model, const JointVector& q, const Wrench& F) {
  const Matrix6d J = jacobian_theta(model, q, JointVector::Zero(), kEndEffector);
  return J * (J.transpose() * F).asDiagonal();
}

Matrix36d marker_observation_matrix(const ManipulatorModel& model, const JointVector& q,
                                    const Wrench& F, std::size_t marker) {
  const auto chain = evaluate_chain(model, q, JointVector::Zero());
  const Matrix6d J = chain.point_jacobian(kNumJoints, chain.tool.translation());
  return marker_jacobian(model, chain, marker) * (J.transpose() * F).asDiagonal();
}

Regressor build_regressor(std::span<const DeflectionRecord> records, const ParameterLayout& layout,
                          const ManipulatorModel& model) {
  layout.validate();
  Eigen::Index rows = 0;
  for (const auto& r : records) rows += 3 * static_cast<Eigen::Index>(r.markers.size());
  Regressor reg;
  reg.B = Eigen::MatrixXd::Zero(rows, layout.size());
  reg.dp.resize(rows);

  Eigen::Index row = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const int bucket = layout.bucket_of(rec.q(1));
    if (layout.includes(2) && bucket < 0) {
      std::ostringstream msg;
      msg << "record " << i + 1 << ": q2 = " << rad2deg(rec.q(1)) << " deg matches no q2 bucket";
      throw InputError(msg.str());
    }
    const auto chain = evaluate_chain(model, rec.q, JointVector::Zero());
    const Matrix6d J = chain.point_jacobian(kNumJoints, chain.tool.translation());
    const JointVector JtF = J.transpose() * rec.F;
    for (const auto& m : rec.markers) {
      if (m.id < 1 || static_cast<std::size_t>(m.id) > model.markers.size())
        throw InputError("record " + std::to_string(i + 1) + ": marker id " + std::to_string(m.id) +
                         " not defined in the model");
      const Matrix36d A = marker_jacobian(model, chain, static_cast<std::size_t>(m.id - 1)) * JtF.asDiagonal();
      for (int j = 1; j <= kNumJoints; ++j) {
        const int col = j == 2 ? layout.column_of_bucket(bucket) : layout.column_of_joint(j);
        if (col >= 0) reg.B.block<3, 1>(row, col) = A.col(j - 1);
      }
      reg.dp.segment<3>(row) = m.dp;
      row += 3;
    }
  }
  return reg;
}

ComplianceEstimate identify_compliances(const Regressor& reg, const ParameterLayout& layout) {
  const auto labels = layout.labels();
  const Eigen::Index n = reg.B.rows(), p = reg.B.cols();
  if (n < p)
    throw NumericalError("identify_compliances: " + std::to_string(n) + " equations for " +
                         std::to_string(p) + " unknowns");
  ComplianceEstimate est;
  est.labels = labels;
  est.equations = static_cast<int>(n);
  est.information = reg.B.transpose() * reg.B;

  const ScaledSolver solver(reg.B);
  if (solver.qr.rank() < p)
    throw NumericalError("identify_compliances: rank deficient information matrix; unidentifiable: " +
                         describe_null_space(est.information, labels));
  est.k = solver.solve(reg.dp);

  const Eigen::VectorXd r = reg.dp - reg.B * est.k;
  est.rms = std::sqrt(r.squaredNorm() / static_cast<double>(n));
  est.sigma_hat = n > p ? std::sqrt(r.squaredNorm() / static_cast<double>(n - p)) : 0.0;
  const Eigen::MatrixXd D = solver.scale.asDiagonal();
  const Eigen::MatrixXd scaled_info = D * est.information * D;
  est.covariance = est.sigma_hat * est.sigma_hat * D * scaled_info.ldlt().solve(D);

  for (Eigen::Index j = 0; j < p; ++j)
    if (est.k(j) <= 0.0)
      est.warnings.push_back(labels[static_cast<std::size_t>(j)] + ": non-positive compliance estimate");
  return est;
}

ComplianceEstimate identify_compliances(std::span<const DeflectionRecord> records,
                                        const ParameterLayout& layout, const ManipulatorModel& model) {
  return identify_compliances(build_regressor(records, layout, model), layout);
}

CompensatorElasticEstimate separate_compensator(std::span<const double> stiffness,
                                                const CompensatorGeometry& geometry,
                                                std::span<const double> q2) {
  const auto m = static_cast<Eigen::Index>(stiffness.size());
  if (static_cast<std::size_t>(m) != q2.size())
    throw InputError("separate_compensator: one q2 angle per bucket stiffness required");
  if (m < 3)
    throw InputError("separate_compensator: under-determined, need at least 3 q2 buckets (got " +
                     std::to_string(m) + ")");
  geometry.validate();
  const double aL = geometry.a() * geometry.L;
  Eigen::MatrixXd C(m, 3);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double g = geometry.gamma(q2[static_cast<std::size_t>(i)]);
    const double s = spring_length(geometry, q2[static_cast<std::size_t>(i)]);
    C.row(i) << 1.0, -aL * std::cos(g), (aL / s) * (aL / (s * s) * std::pow(std::sin(g), 2) + std::cos(g));
    y(i) = stiffness[static_cast<std::size_t>(i)];
  }
  CompensatorElasticEstimate est;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C);
  const auto sv = svd.singularValues();
  est.condition_number = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                                  : std::numeric_limits<double>::infinity();
  const ScaledSolver solver(C);
  if (solver.qr.rank() < 3)
    throw NumericalError("separate_compensator: bucket angles do not determine (K0, K_c, s0)");
  const Eigen::Vector3d x = solver.solve(y);
  est.K0 = x(0);
  est.K_c = x(1);
  est.s0 = x(2) / x(1);
  est.rms = std::sqrt((y - C * x).squaredNorm() / static_cast<double>(m));
  if (!(est.K_c > 0.0)) est.warnings.push_back("K_c: non-physical (<= 0) spring stiffness estimate");
  if (!(est.K0 > 0.0)) est.warnings.push_back("K0: non-physical (<= 0) joint-2 stiffness estimate");
  return est;
}

namespace {

void fill_physical(ElastostaticEstimate& out, const ParameterLayout& layout,
                   const std::optional<CompensatorGeometry>& geometry) {
  const auto& k = out.compliances.k;
  for (int j = 1; j <= kNumJoints; ++j) {
    const int col = layout.column_of_joint(j);
    if (col >= 0) out.k(j - 1) = k(col);
  }
  out.bucket_k2.clear();
  if (!layout.includes(2)) return;
  std::vector<double> stiffness;
  for (std::size_t b = 0; b < layout.q2_buckets.size(); ++b) {
    const double kb = k(layout.column_of_bucket(static_cast<int>(b)));
    out.bucket_k2.push_back(kb);
    stiffness.push_back(1.0 / kb);
  }
  if (geometry && layout.q2_buckets.size() >= 3) {
    out.compensator = separate_compensator(stiffness, *geometry, layout.q2_buckets);
    out.k(1) = 1.0 / out.compensator->K0;
  } else if (layout.q2_buckets.size() == 1) {
    out.k(1) = out.bucket_k2.front();
  }
}

}  // namespace

ElastostaticEstimate identify_elastostatics(std::span<const DeflectionRecord> records,
                                            const ParameterLayout& layout,
                                            const ManipulatorModel& model,
                                            const std::optional<CompensatorGeometry>& geometry) {
  ElastostaticEstimate out;
  out.compliances = identify_compliances(records, layout, model);
  fill_physical(out, layout, geometry);
  if (layout.includes(2) && layout.q2_buckets.size() < 3)
    out.compliances.warnings.push_back("compensator: fewer than 3 q2 buckets, K_c and s0 unidentifiable");
  if (out.compensator)
    for (const auto& w : out.compensator->warnings) out.compliances.warnings.push_back(w);
  return out;
}

ElastostaticIntervals confidence_intervals_elasto(std::span<const DeflectionRecord> records,
                                                  const ParameterLayout& layout,
                                                  const ManipulatorModel& model,
                                                  const std::optional<CompensatorGeometry>& geometry,
                                                  const ElastostaticEstimate& estimate,
                                                  int n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw InputError("confidence_intervals_elasto: need at least 2 samples");
  const Regressor reg = build_regressor(records, layout, model);
  const Eigen::VectorXd fitted = reg.B * estimate.compliances.k;
  const double sigma = estimate.compliances.sigma_hat;
  const Eigen::Index p = reg.B.cols();

  ElastostaticIntervals ci;
  ci.samples = n_samples;
  ci.layout_k = Eigen::VectorXd::Zero(p);
  // exact data up to round-off
  const double scale = reg.dp.size() ? reg.dp.norm() / std::sqrt(static_cast<double>(reg.dp.size())) : 0.0;
  if (sigma <= kExactDataLevel * scale) return ci;

  const ScaledSolver solver(reg.B);
  Eigen::MatrixXd layout_samples(n_samples, p);
  Eigen::MatrixXd phys_samples(n_samples, kNumJoints);
  Eigen::MatrixXd comp_samples(n_samples, 3);
  for (int s = 0; s < n_samples; ++s) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(s));
    std::normal_distribution<double> noise(0.0, sigma);
    Eigen::VectorXd y = fitted;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += noise(rng);
    ElastostaticEstimate e;
    e.compliances.k = solver.solve(y);
    fill_physical(e, layout, geometry);
    layout_samples.row(s) = e.compliances.k.transpose();
    phys_samples.row(s) = e.k.transpose();
    if (e.compensator)
      comp_samples.row(s) << e.compensator->K0, e.compensator->K_c, e.compensator->s0;
    else
      comp_samples.row(s).setZero();
  }
  for (Eigen::Index j = 0; j < p; ++j) ci.layout_k(j) = 3.0 * stddev(layout_samples.col(j));
  for (int j = 0; j < kNumJoints; ++j)
    ci.k(j) = std::isnan(estimate.k(j)) ? 0.0 : 3.0 * stddev(phys_samples.col(j));
  ci.K0 = 3.0 * stddev(comp_samples.col(0));
  ci.K_c = 3.0 * stddev(comp_samples.col(1));
  ci.s0 = 3.0 * stddev(comp_samples.col(2));
  return ci;
}

}  // namespace elastocal
