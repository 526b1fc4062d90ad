#include <doctest.h>

#include "elastocal/csv_io.hpp"
#include "elastocal/elasto_ident.hpp"
#include "elastocal/sim.hpp"
#include "elastocal/stiffness.hpp"
#include "test_support.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace elastocal;
using elastocal::testing::kr270_like;
using elastocal::testing::rel_err;

namespace {

CalibrationPlan reference_plan() {
  return parse_plan(read_text_file(elastocal::testing::data_path("reference_plan.csv")));
}

std::vector<double> reference_buckets() {
  std::vector<double> b;
  for (double d : {-0.01, -25.24, -56.9, -99.85, -140.0}) b.push_back(deg2rad(d));
  return b;
}

ParameterLayout default_layout() {
  ParameterLayout l;
  l.q2_buckets = reference_buckets();
  return l;
}

std::vector<DeflectionRecord> linear_records(const ManipulatorModel& m, const CalibrationPlan& plan, int repeats,
                                             double sigma = 0.0, std::uint64_t seed = 1) {
  DeflectionSimOptions o;
  o.mode = DeflectionModel::Linear;
  o.sigma = sigma;
  o.seed = seed;
  return simulate_deflection_records(m, plan, repeats, o);
}

// layout-order truth: bucket compliances are the equivalent joint-2 values
Eigen::VectorXd layout_truth(const ManipulatorModel& m, const ParameterLayout& l) {
  Eigen::VectorXd k(l.size());
  for (int j = 1; j <= 6; ++j)
    if (j != 2 && l.column_of_joint(j) >= 0) k(l.column_of_joint(j)) = m.joints[static_cast<std::size_t>(j - 1)].compliance;
  for (std::size_t b = 0; b < l.q2_buckets.size(); ++b) {
    JointVector q = JointVector::Zero();
    q(1) = l.q2_buckets[b];
    k(l.column_of_bucket(static_cast<int>(b))) = effective_compliances(m, m.compensator, q)(1);
  }
  return k;
}

}  // namespace

TEST_CASE("observation matrix") {
  const auto m = kr270_like();
  JointVector q;
  q << 0.4, -0.9, 1.1, 0.3, -0.7, 0.5;
  CHECK(observation_matrix(m, q, Wrench::Zero()).isZero(0.0));

  ManipulatorModel toy;
  toy.joints[0].link.translation() = Eigen::Vector3d(1000, 0, 0);
  Wrench F = Wrench::Zero();
  F(1) = 100.0;
  const Matrix6d A = observation_matrix(toy, JointVector::Zero(), F);
  CHECK(A.col(0).head<3>().norm() == doctest::Approx(1e8));
  CHECK(A.rightCols<5>().isZero(0.0));

  Wrench G;
  G << 300, -200, -2000, 1e4, 5e3, -2e4;
  const Twist pred = predict_tool_deflection(m, std::nullopt, q, G);
  CHECK(rel_err(observation_matrix(m, q, G) * m.compliances(), pred) < 1e-12);
}

TEST_CASE("regressor structure") {
  auto m = kr270_like();
  m.compensator.reset();
  JointVector q;
  q << 0.4, -0.9, 1.1, 0.3, -0.7, 0.5;
  Wrench F = Wrench::Zero();
  F(2) = -2000.0;
  DeflectionRecord r{q, F, {{1, Eigen::Vector3d::Zero()}}, 1};
  ParameterLayout all;
  all.joints = {1, 2, 3, 4, 5, 6};
  all.q2_buckets = {q(1)};
  const std::vector<DeflectionRecord> one{r};
  const auto reg = build_regressor(one, all, m);
  CHECK(rel_err(reg.B, marker_observation_matrix(m, q, F, 0)) < 1e-15);

  DeflectionRecord r2 = r;
  r2.q(1) = -0.3;
  all.q2_buckets = {q(1), r2.q(1)};
  const std::vector<DeflectionRecord> two{r, r2};
  const auto reg2 = build_regressor(two, all, m);
  CHECK(reg2.B.cols() == 7);
  const int c1 = all.column_of_bucket(0), c2 = all.column_of_bucket(1);
  for (Eigen::Index i = 0; i < reg2.B.rows(); ++i) CHECK(reg2.B(i, c1) * reg2.B(i, c2) == 0.0);
  CHECK(reg2.B.col(c1).norm() > 0.0);
  CHECK(reg2.B.col(c2).norm() > 0.0);
  CHECK(all.labels() == std::vector<std::string>{"k1", "k2_1", "k2_2", "k3", "k4", "k5", "k6"});

  all.q2_buckets = {-1.0};
  CHECK_THROWS_WITH_AS(build_regressor(one, all, m), doctest::Contains("record 1"), InputError);
}

TEST_CASE("full-scale campaign assembles 405 equations") {
  const auto m = kr270_like();
  const auto recs = linear_records(m, reference_plan(), 3);
  CHECK(recs.size() == 45);
  CHECK(build_regressor(recs, default_layout(), m).B.rows() == 405);
}

TEST_CASE("noiseless recovery, normal equations and scaling") {
  const auto m = kr270_like();
  const auto layout = default_layout();
  const auto recs = linear_records(m, reference_plan(), 1);
  const auto est = identify_compliances(recs, layout, m);
  CHECK(rel_err(est.k, layout_truth(m, layout)) < 1e-9);
  CHECK(est.equations == 135);

  auto noisy = linear_records(m, reference_plan(), 2, 0.05, 3);
  const auto reg = build_regressor(noisy, layout, m);
  const auto e2 = identify_compliances(reg, layout);
  const Eigen::VectorXd r = reg.B * e2.k - reg.dp;
  CHECK((reg.B.transpose() * r).norm() < 1e-9 * reg.B.norm() * r.norm());
  CHECK(e2.sigma_hat > 0.06);  // difference noise is sqrt(2) sigma
  CHECK(e2.sigma_hat < 0.085);

  auto scaled = noisy;
  for (auto& rec : scaled) {
    rec.F *= 3.0;
    for (auto& mk : rec.markers) mk.dp *= 3.0;
  }
  CHECK(rel_err(identify_compliances(scaled, layout, m).k, e2.k) < 1e-12);
}

TEST_CASE("rank deficiency names the unidentifiable parameters") {
  const auto m = kr270_like();
  ParameterLayout l = default_layout();
  l.joints = {1, 2, 3, 4, 5, 6};
  // vertical loads never excite the vertical first axis
  const auto recs = linear_records(m, reference_plan(), 1);
  CHECK_THROWS_WITH_AS(identify_compliances(recs, l, m), doctest::Contains("k1"), NumericalError);
}

TEST_CASE("compensator separation") {
  const auto m = kr270_like();
  const auto& c = *m.compensator;
  const double K0 = 1.0 / m.joints[1].compliance;
  const auto q2 = reference_buckets();
  std::vector<double> K;
  for (double q : q2) K.push_back(equivalent_joint_stiffness(c, K0, q).value);
  const auto est = separate_compensator(K, c.geometry, q2);
  CHECK(est.K0 == doctest::Approx(K0).epsilon(1e-9));
  CHECK(est.K_c == doctest::Approx(c.elastics.K_c).epsilon(1e-9));
  CHECK(est.s0 == doctest::Approx(c.elastics.s0).epsilon(1e-9));
  CHECK(std::isfinite(est.condition_number));
  CHECK(est.condition_number > 1.0);
  CHECK(est.warnings.empty());
  MESSAGE("separation condition number at the reference angles: " << est.condition_number);

  CHECK_THROWS_WITH_AS(separate_compensator(std::span(K).first(2), c.geometry, std::span(q2).first(2)),
                       doctest::Contains("under-determined"), InputError);

  // 1% noise on the bucket stiffnesses: s0 stays within 6%
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 0.01);
  int inside = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> Kn;
    for (double k : K) Kn.push_back(k * (1.0 + n(rng)));
    const auto e = separate_compensator(Kn, c.geometry, q2);
    if (std::abs(e.s0 - 458.0) <= 0.06 * 458.0) ++inside;
  }
  MESSAGE("s0 within 6% in " << inside << " of 200 trials");
  CHECK(inside >= 190);

  std::vector<double> neg = K;
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = K0 - (K[i] - K0);
  CHECK_FALSE(separate_compensator(neg, c.geometry, q2).warnings.empty());
}

TEST_CASE("full pipeline: physical parameters and equivalent-spring consistency") {
  const auto m = kr270_like();
  const auto layout = default_layout();
  const auto recs = linear_records(m, reference_plan(), 1);
  const auto est = identify_elastostatics(recs, layout, m, m.compensator->geometry);
  REQUIRE(est.compensator.has_value());
  CHECK(std::isnan(est.k(0)));
  for (int j = 1; j < 6; ++j) CHECK(est.k(j) == doctest::Approx(m.joints[static_cast<std::size_t>(j)].compliance).epsilon(1e-9));
  CHECK(est.compensator->K_c == doctest::Approx(m.compensator->elastics.K_c).epsilon(1e-9));
  CHECK(est.compensator->s0 == doctest::Approx(458.0).epsilon(1e-9));

  // noisy: composing the separated parameters reproduces the buckets to the fit residual
  const auto noisy = linear_records(m, reference_plan(), 3, 0.05, 9);
  const auto e2 = identify_elastostatics(noisy, layout, m, m.compensator->geometry);
  CompensatorParams p = *m.compensator;
  p.elastics = {e2.compensator->K_c, e2.compensator->s0};
  double ss = 0.0;
  for (std::size_t b = 0; b < layout.q2_buckets.size(); ++b)
    ss += std::pow(equivalent_joint_stiffness(p, e2.compensator->K0, layout.q2_buckets[b]).value - 1.0 / e2.bucket_k2[b], 2);
  CHECK(std::sqrt(ss / 5.0) == doctest::Approx(e2.compensator->rms).epsilon(1e-6));

  // a single q2 value cannot separate the compensator
  ParameterLayout single;
  single.q2_buckets = {deg2rad(-56.9)};
  CalibrationPlan p3;
  for (const auto& e : reference_plan().entries)
    if (e.bucket == 2) p3.entries.push_back({e.q, e.F, 0});
  const auto e3 = identify_elastostatics(linear_records(m, p3, 1), single, m, m.compensator->geometry);
  CHECK_FALSE(e3.compensator.has_value());
  bool flagged = false;
  for (const auto& w : e3.compliances.warnings) flagged |= w.find("unidentifiable") != std::string::npos;
  CHECK(flagged);
}

TEST_CASE("elastostatic intervals") {
  const auto m = kr270_like();
  const auto layout = default_layout();
  const auto g = m.compensator->geometry;
  {
    const auto recs = linear_records(m, reference_plan(), 1);
    const auto est = identify_elastostatics(recs, layout, m, g);
    const auto ci = confidence_intervals_elasto(recs, layout, m, g, est, 100, 1);
    CHECK(ci.layout_k.isZero(0.0));
    CHECK(ci.K_c == 0.0);
  }
  const auto r1 = linear_records(m, reference_plan(), 2, 0.05, 5);
  const auto r4 = linear_records(m, reference_plan(), 8, 0.05, 6);
  const auto e1 = identify_elastostatics(r1, layout, m, g);
  const auto e4 = identify_elastostatics(r4, layout, m, g);
  const auto c1 = confidence_intervals_elasto(r1, layout, m, g, e1, 400, 1);
  const auto c4 = confidence_intervals_elasto(r4, layout, m, g, e4, 400, 1);
  for (Eigen::Index j = 0; j < c1.layout_k.size(); ++j)
    CHECK(c1.layout_k(j) / c4.layout_k(j) == doctest::Approx(2.0).epsilon(0.2));
  CHECK(c1.K_c / c4.K_c == doctest::Approx(2.0).epsilon(0.2));
  CHECK(c1.s0 / c4.s0 == doctest::Approx(2.0).epsilon(0.2));
  CHECK(confidence_intervals_elasto(r1, layout, m, g, e1, 100, 3).layout_k ==
        confidence_intervals_elasto(r1, layout, m, g, e1, 100, 3).layout_k);
}

TEST_CASE("layout from records") {
  const auto m = kr270_like();
  const auto recs = linear_records(m, reference_plan(), 1);
  const auto l = ParameterLayout::from_records(recs);
  REQUIRE(l.q2_buckets.size() == 5);
  for (std::size_t b = 0; b < 5; ++b) CHECK(l.q2_buckets[b] == doctest::Approx(reference_buckets()[b]));
  ParameterLayout bad;
  bad.q2_buckets = {0.0, deg2rad(0.05)};
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad.q2_buckets = {0.0};
  bad.joints = {2, 2};
  CHECK_THROWS_AS(bad.validate(), InputError);
}
