#include "elastocal/doe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace elastocal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::Vector3d load_axis(const ManipulatorModel& model, const PlanConstraints& c) {
  Eigen::Vector3d d = c.load_direction.isZero(0.0) ? model.gravity : c.load_direction;
  if (d.norm() == 0.0) throw InputError("plan constraints: no load direction and zero gravity");
  return d.normalized();
}

std::vector<Eigen::Vector3d> load_directions(const ManipulatorModel& model, const PlanConstraints& c) {
  const Eigen::Vector3d axis = load_axis(model, c);
  std::vector<Eigen::Vector3d> dirs{axis};
  if (c.cone_half_angle <= 0.0) return dirs;
  Eigen::Vector3d perp = axis.unitOrthogonal();
  const Eigen::Vector3d tilted = Eigen::AngleAxisd(c.cone_half_angle, perp) * axis;
  for (int i = 0; i < c.cone_directions; ++i)
    dirs.push_back(Eigen::AngleAxisd(2.0 * std::numbers::pi * i / c.cone_directions, axis) * tilted);
  return dirs;
}

bool q1_allowed(const PlanConstraints& c, double q1) {
  if (q1 < c.lower(0) || q1 > c.upper(0)) return false;
  if (c.q1_allowed.empty()) return true;
  return std::any_of(c.q1_allowed.begin(), c.q1_allowed.end(),
                     [q1](const auto& iv) { return q1 >= iv.first && q1 <= iv.second; });
}

// Included joints' observation columns at every model marker, as the
// per-entry information contribution.
Eigen::MatrixXd entry_information(const ManipulatorModel& model, const std::vector<int>& joints,
                                  const JointVector& q, const Wrench& F) {
  const auto chain = evaluate_chain(model, q, JointVector::Zero());
  const Matrix6d J = chain.point_jacobian(kNumJoints, chain.tool.translation());
  const JointVector JtF = J.transpose() * F;
  const auto n = static_cast<Eigen::Index>(joints.size());
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd A(3, n);
  for (std::size_t m = 0; m < model.markers.size(); ++m) {
    const Matrix36d Jm = marker_jacobian(model, chain, m);
    for (Eigen::Index c = 0; c < n; ++c) {
      const int j = joints[static_cast<std::size_t>(c)] - 1;
      A.col(c) = Jm.col(j) * JtF(j);
    }
    info.noalias() += A.transpose() * A;
  }
  return info;
}

Eigen::MatrixXd test_matrix(const ManipulatorModel& model, const std::vector<int>& joints,
                            const TestPose& test) {
  const Matrix6d A = observation_matrix(model, test.q, test.F);
  Eigen::MatrixXd A0(3, static_cast<Eigen::Index>(joints.size()));
  for (std::size_t c = 0; c < joints.size(); ++c)
    A0.col(static_cast<Eigen::Index>(c)) = A.block<3, 1>(0, joints[c] - 1);
  return A0;
}

// trace(A0 info^-1 A0^T), +inf when info is singular.
double bucket_term(const Eigen::MatrixXd& info, const Eigen::MatrixXd& A0) {
  Eigen::VectorXd d = info.diagonal();
  if ((d.array() <= 0.0).any()) return kInf;
  d = d.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd M = d.asDiagonal() * info * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  const Eigen::VectorXd ev = eig.eigenvalues();
  if (ev(0) <= 1e-12 * ev(ev.size() - 1)) return kInf;
  const Eigen::MatrixXd X = eig.eigenvectors().transpose() * d.asDiagonal() * A0.transpose();
  return (X.array().square().colwise() / ev.array()).sum();
}

std::vector<int> sorted_joints(const ParameterLayout& layout) {
  std::vector<int> j = layout.joints;
  std::sort(j.begin(), j.end());
  return j;
}

}  // namespace

void PlanConstraints::validate() const {
  if (!(F_max > 0.0)) throw InputError("plan constraints: F_max must be positive");
  for (int i = 0; i < kNumJoints; ++i)
    if (!(lower(i) <= upper(i)))
      throw InputError("plan constraints: empty joint range for q" + std::to_string(i + 1));
  if (q2_buckets.empty()) throw InputError("plan constraints: no q2 buckets");
  for (double b : q2_buckets)
    if (b < lower(1) || b > upper(1))
      throw InputError("plan constraints: q2 bucket " + std::to_string(rad2deg(b)) + " deg outside joint limits");
  if (!q1_allowed.empty()) {
    bool any = false;
    for (const auto& [lo, hi] : q1_allowed) {
      if (lo > hi) throw InputError("plan constraints: q1 interval with lower > upper");
      any = any || (std::max(lo, lower(0)) <= std::min(hi, upper(0)));
    }
    if (!any) throw InputError("plan constraints: no allowed q1 interval within the joint limits");
  }
  if (cone_half_angle < 0.0 || (cone_half_angle > 0.0 && cone_directions < 1))
    throw InputError("plan constraints: invalid load cone");
}

std::vector<std::string> check_plan(const CalibrationPlan& plan, const PlanConstraints& constraints,
                                    const ParameterLayout& layout) {
  std::vector<std::string> out;
  std::vector<int> used(layout.q2_buckets.size(), 0);
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const auto& e = plan.entries[i];
    const std::string tag = "entry " + std::to_string(i + 1) + ": ";
    if (e.F.head<3>().norm() > constraints.F_max * (1.0 + 1e-12)) out.push_back(tag + "|F| exceeds F_max");
    for (int j = 0; j < kNumJoints; ++j)
      if (e.q(j) < constraints.lower(j) - 1e-12 || e.q(j) > constraints.upper(j) + 1e-12)
        out.push_back(tag + "q" + std::to_string(j + 1) + " outside joint limits");
    if (!q1_allowed(constraints, e.q(0))) out.push_back(tag + "q1 outside the allowed intervals");
    if (e.bucket < 0 || static_cast<std::size_t>(e.bucket) >= layout.q2_buckets.size()) {
      out.push_back(tag + "invalid bucket id");
      continue;
    }
    ++used[static_cast<std::size_t>(e.bucket)];
    if (std::abs(e.q(1) - layout.q2_buckets[static_cast<std::size_t>(e.bucket)]) > layout.tolerance)
      out.push_back(tag + "q2 does not match its bucket");
  }
  for (std::size_t b = 0; b < used.size(); ++b)
    if (used[b] == 0) out.push_back("bucket " + std::to_string(b + 1) + " unused");
  return out;
}

Regressor plan_regressor(const CalibrationPlan& plan, const ManipulatorModel& model,
                         const ParameterLayout& layout) {
  std::vector<DeflectionRecord> records;
  records.reserve(plan.entries.size());
  for (const auto& e : plan.entries) {
    DeflectionRecord r;
    r.q = e.q;
    r.F = e.F;
    for (std::size_t m = 0; m < model.markers.size(); ++m)
      r.markers.push_back({static_cast<int>(m + 1), Eigen::Vector3d::Zero()});
    records.push_back(std::move(r));
  }
  return build_regressor(records, layout, model);
}

Eigen::MatrixXd parameter_covariance(const CalibrationPlan& plan, const ManipulatorModel& model,
                                     const ParameterLayout& layout, const NoiseModel& noise) {
  if (!(noise.sigma > 0.0)) throw InputError("noise model: sigma must be positive");
  const Regressor reg = plan_regressor(plan, model, layout);
  const Eigen::MatrixXd info = reg.B.transpose() * reg.B;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
  if (!lu.isInvertible() || lu.rcond() < 1e-15) {
    Regressor tmp = reg;
    tmp.dp.setOnes();
    identify_compliances(tmp, layout);  // throws with the null-space description
    throw NumericalError("parameter_covariance: singular information matrix");
  }
  return noise.sigma * noise.sigma * lu.inverse();
}

Eigen::MatrixXd sandwich_covariance(const CalibrationPlan& plan, const ManipulatorModel& model,
                                    const ParameterLayout& layout, const Eigen::VectorXd& variances) {
  const Regressor reg = plan_regressor(plan, model, layout);
  if (variances.size() != reg.B.rows())
    throw InputError("sandwich_covariance: one variance per equation required");
  const Eigen::MatrixXd inv = (reg.B.transpose() * reg.B).inverse();
  return inv * reg.B.transpose() * variances.asDiagonal() * reg.B * inv;
}

AccuracyMeasure test_pose_accuracy(const CalibrationPlan& plan, const ManipulatorModel& model,
                                   const ParameterLayout& layout, const TestPose& test,
                                   const NoiseModel& noise) {
  if (!(noise.sigma > 0.0)) throw InputError("noise model: sigma must be positive");
  layout.validate();
  const auto joints = sorted_joints(layout);
  const auto n = static_cast<Eigen::Index>(joints.size());
  std::vector<Eigen::MatrixXd> info(std::max<std::size_t>(layout.q2_buckets.size(), 1),
                                    Eigen::MatrixXd::Zero(n, n));
  for (const auto& e : plan.entries) {
    const int b = layout.q2_buckets.empty() ? 0 : layout.bucket_of(e.q(1));
    if (b < 0) throw InputError("test_pose_accuracy: plan entry q2 matches no bucket");
    info[static_cast<std::size_t>(b)] += entry_information(model, joints, e.q, e.F);
  }
  const Eigen::MatrixXd A0 = test_matrix(model, joints, test);
  double total = 0.0;
  for (std::size_t b = 0; b < info.size(); ++b) {
    const double t = bucket_term(info[b], A0);
    if (!std::isfinite(t))
      throw NumericalError("test_pose_accuracy: information matrix of bucket " + std::to_string(b + 1) +
                           " is singular");
    total += t;
  }
  AccuracyMeasure out;
  out.rho2 = noise.sigma * noise.sigma * total;
  out.rms = std::sqrt(out.rho2);
  return out;
}

CalibrationPlan random_feasible_plan(const ManipulatorModel& model, const PlanConstraints& c,
                                     int per_bucket, std::mt19937_64& rng) {
  c.validate();
  if (per_bucket < 1) throw InputError("random_feasible_plan: per_bucket must be >= 1");
  const auto dirs = load_directions(model, c);

  // Allowed q1 intervals clipped to the limits, sampled by length.
  std::vector<std::pair<double, double>> q1_iv;
  if (c.q1_allowed.empty()) q1_iv.emplace_back(c.lower(0), c.upper(0));
  for (const auto& [lo, hi] : c.q1_allowed) {
    const double a = std::max(lo, c.lower(0)), b = std::min(hi, c.upper(0));
    if (a <= b) q1_iv.emplace_back(a, b);
  }
  std::vector<double> lengths;
  for (const auto& [a, b] : q1_iv) lengths.push_back(std::max(b - a, 1e-12));
  std::discrete_distribution<std::size_t> pick_iv(lengths.begin(), lengths.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_dir(0, dirs.size() - 1);

  CalibrationPlan plan;
  for (std::size_t b = 0; b < c.q2_buckets.size(); ++b) {
    for (int k = 0; k < per_bucket; ++k) {
      PlanEntry e;
      const auto& iv = q1_iv[pick_iv(rng)];
      e.q(0) = iv.first + unit(rng) * (iv.second - iv.first);
      e.q(1) = c.q2_buckets[b];
      for (int j = 2; j < kNumJoints; ++j) e.q(j) = c.lower(j) + unit(rng) * (c.upper(j) - c.lower(j));
      e.F.setZero();
      e.F.head<3>() = c.F_max * dirs[dirs.size() > 1 ? pick_dir(rng) : 0];
      e.bucket = static_cast<int>(b);
      plan.entries.push_back(e);
    }
  }
  return plan;
}

namespace {

class PlanSearch {
 public:
  PlanSearch(const ManipulatorModel& model, const ParameterLayout& layout, const TestPose& test,
             const PlanConstraints& c, const OptimizerOptions& opt)
      : model_(model), c_(c), opt_(opt), joints_(sorted_joints(layout)),
        A0_(test_matrix(model, joints_, test)), dirs_(load_directions(model, c)),
        buckets_(c.q2_buckets.size()) {}

  double load(CalibrationPlan& plan) {
    plan_ = &plan;
    const auto n = static_cast<Eigen::Index>(joints_.size());
    entry_info_.clear();
    bucket_info_.assign(buckets_, Eigen::MatrixXd::Zero(n, n));
    dir_index_.assign(plan.entries.size(), 0);
    for (std::size_t i = 0; i < plan.entries.size(); ++i) {
      const auto& e = plan.entries[i];
      for (std::size_t d = 0; d < dirs_.size(); ++d)
        if ((e.F.head<3>().normalized() - dirs_[d]).norm() < 1e-9) dir_index_[i] = d;
      entry_info_.push_back(entry_information(model_, joints_, e.q, e.F));
      bucket_info_[static_cast<std::size_t>(e.bucket)] += entry_info_.back();
    }
    terms_.resize(buckets_);
    for (std::size_t b = 0; b < buckets_; ++b) terms_[b] = bucket_term(bucket_info_[b], A0_);
    return total();
  }

  double total() const {
    double t = 0.0;
    for (double x : terms_) t += x;
    return t;
  }

  /// Coordinate descent at all refinement levels; returns the final score.
  double descend() {
    std::vector<double> step(kNumJoints);
    for (int j = 0; j < kNumJoints; ++j) step[static_cast<std::size_t>(j)] = c_.upper(j) - c_.lower(j);
    double score = total();
    for (int level = 0; level < opt_.levels; ++level) {
      for (int sweep = 0; sweep < opt_.max_sweeps; ++sweep) {
        bool improved = false;
        for (std::size_t i = 0; i < plan_->entries.size(); ++i) {
          for (int j = 0; j < kNumJoints; ++j) {
            if (j == 1) continue;
            improved |= improve_joint(i, j, level, step[static_cast<std::size_t>(j)], score);
          }
          if (dirs_.size() > 1 && level == 0) improved |= improve_direction(i, score);
        }
        if (!improved) break;
      }
      for (auto& s : step) s = 2.0 * s / (opt_.grid_points - 1);
    }
    return score;
  }

 private:
  bool try_entry(std::size_t i, const PlanEntry& candidate, double& score) {
    const auto b = static_cast<std::size_t>(candidate.bucket);
    const Eigen::MatrixXd info = entry_information(model_, joints_, candidate.q, candidate.F);
    const Eigen::MatrixXd updated = bucket_info_[b] - entry_info_[i] + info;
    const double term = bucket_term(updated, A0_);
    double next = 0.0;
    for (std::size_t k = 0; k < terms_.size(); ++k) next += k == b ? term : terms_[k];
    // While some bucket is still singular the total is infinite; judge the
    // move by its own bucket then.
    const bool better = std::isfinite(score) ? next < score * (1.0 - 1e-12) : term < terms_[b] * (1.0 - 1e-12);
    if (!better) return false;
    plan_->entries[i] = candidate;
    bucket_info_[b] = updated;
    entry_info_[i] = info;
    terms_[b] = term;
    score = total();
    return true;
  }

  bool improve_joint(std::size_t i, int j, int level, double width, double& score) {
    const double lo = c_.lower(j), hi = c_.upper(j);
    const double centre = plan_->entries[i].q(j);
    const double a = level == 0 ? lo : std::max(lo, centre - width / 2.0 * 1.0);
    const double b = level == 0 ? hi : std::min(hi, centre + width / 2.0 * 1.0);
    bool improved = false;
    for (int g = 0; g < opt_.grid_points; ++g) {
      PlanEntry cand = plan_->entries[i];
      cand.q(j) = a + (b - a) * g / (opt_.grid_points - 1);
      if (cand.q(j) == plan_->entries[i].q(j)) continue;
      if (j == 0 && !q1_allowed(c_, cand.q(0))) continue;
      improved |= try_entry(i, cand, score);
    }
    return improved;
  }

  bool improve_direction(std::size_t i, double& score) {
    bool improved = false;
    for (std::size_t d = 0; d < dirs_.size(); ++d) {
      if (d == dir_index_[i]) continue;
      PlanEntry cand = plan_->entries[i];
      cand.F.head<3>() = c_.F_max * dirs_[d];
      if (try_entry(i, cand, score)) {
        dir_index_[i] = d;
        improved = true;
      }
    }
    return improved;
  }

  const ManipulatorModel& model_;
  const PlanConstraints& c_;
  const OptimizerOptions& opt_;
  std::vector<int> joints_;
  Eigen::MatrixXd A0_;
  std::vector<Eigen::Vector3d> dirs_;
  std::size_t buckets_;
  CalibrationPlan* plan_ = nullptr;
  std::vector<Eigen::MatrixXd> entry_info_;
  std::vector<Eigen::MatrixXd> bucket_info_;
  std::vector<double> terms_;
  std::vector<std::size_t> dir_index_;
};

}  // namespace

CalibrationPlan optimize_plan(const ManipulatorModel& model, const ParameterLayout& layout,
                              const TestPose& test, const PlanConstraints& constraints, int per_bucket,
                              std::uint64_t seed, const OptimizerOptions& options) {
  constraints.validate();
  layout.validate();
  if (layout.q2_buckets.size() != constraints.q2_buckets.size())
    throw InputError("optimize_plan: layout and constraints disagree on the q2 buckets");
  if (options.starts < 1 || options.grid_points < 3 || options.levels < 1)
    throw InputError("optimize_plan: invalid optimizer options");

  PlanSearch search(model, layout, test, constraints, options);
  CalibrationPlan best;
  double best_start = kInf;
  best.score = kInf;
  bool have = false;
  for (int s = 0; s < options.starts; ++s) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(s));
    CalibrationPlan plan = random_feasible_plan(model, constraints, per_bucket, rng);
    const double initial = search.load(plan);
    const double score = search.descend();
    best_start = std::min(best_start, initial);
    if (!have || score < best.score) {
      have = true;
      best = plan;
      best.score = score;
    }
  }
  std::ostringstream diag;
  if (!std::isfinite(best.score)) {
    diag << "no start reached an identifiable plan; returned the last start";
  } else if (!(best.score < best_start)) {
    diag << "search did not improve on the best random start";
  } else {
    diag << "best of " << options.starts << " starts; best random start score " << best_start;
  }
  best.diagnostics = diag.str();
  return best;
}

}  // namespace elastocal
