#include <doctest.h>

#include "elastocal/compensator.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace elastocal;

namespace {

const CompensatorGeometry kReference{184.72, 685.93, 120.30, 0.0};

CompensatorParams reference_params(double offset = 0.0) {
  CompensatorParams p;
  p.geometry = kReference;
  p.geometry.gamma_offset = offset;
  p.elastics = {53984.0, 458.0};
  return p;
}

double central(auto f, double x, double h) { return (f(x + h) - f(x - h)) / (2.0 * h); }

}  // namespace

TEST_CASE("derived geometry of the reference compensator") {
  CHECK(kReference.a() == doctest::Approx(696.399350).epsilon(1e-9));
  CHECK(kReference.alpha() == doctest::Approx(0.173616609).epsilon(1e-8));
  // independent calculator value
  CHECK(spring_length(kReference, 0.0) == doctest::Approx(878.92179).epsilon(1e-8));
}

TEST_CASE("spring length special angles and bounds") {
  const auto& g = kReference;
  CHECK(spring_length(g, g.alpha()) == doctest::Approx(g.a() + g.L).epsilon(1e-14));
  CHECK(spring_length(g, g.alpha() - std::numbers::pi / 2) ==
        doctest::Approx(std::hypot(g.a(), g.L)).epsilon(1e-14));
  for (double q = -4.0; q < 4.0; q += 0.01) {
    const double s = spring_length(g, q);
    CHECK(s >= g.a() - g.L - 1e-9);
    CHECK(s <= g.a() + g.L + 1e-9);
  }
}

TEST_CASE("spring angle") {
  const auto& g = kReference;
  CHECK(spring_angle(g, g.alpha()) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(spring_angle(g, g.alpha() - std::numbers::pi)) < 1e-7);
  // triangle P2 at the origin, P0 on +x, P1 at angle pi - gamma from P0
  const double q = -std::numbers::pi / 2;
  const double gamma = g.alpha() - q;
  const Eigen::Vector2d p0(g.a(), 0.0), p1(-g.L * std::cos(gamma), -g.L * std::sin(gamma));
  const Eigen::Vector2d u = -p1, v = p0 - p1;
  const double phi = std::acos(u.dot(v) / (u.norm() * v.norm()));
  CHECK(spring_angle(g, q) == doctest::Approx(phi).epsilon(1e-12));
}

TEST_CASE("torque zeros") {
  auto p = reference_params();
  CHECK(compensator_torque(p, p.geometry.alpha()) == doctest::Approx(0.0));
  const double q = -0.7;
  p.elastics.s0 = spring_length(p.geometry, q);
  CHECK(std::abs(compensator_torque(p, q)) < 1e-6);
}

TEST_CASE("torque is minus the gradient of the spring energy") {
  for (double offset : {0.0, std::numbers::pi / 2 - kReference.alpha()}) {
    const auto p = reference_params(offset);
    for (double deg = -140.0; deg <= 0.0; deg += 5.0) {
      const double q = deg2rad(deg);
      const double dV = central([&](double x) { return spring_energy(p, x); }, q, 1e-5);
      const double M = compensator_torque(p, q);
      CHECK(-dV == doctest::Approx(M).epsilon(1e-6).scale(std::abs(M) + 1e-3 * p.elastics.K_c));
    }
  }
}

TEST_CASE("literal torque convention flips the sign") {
  auto p = reference_params();
  auto lit = p;
  lit.torque_convention = TorqueConvention::Literal;
  CHECK(compensator_torque(lit, -0.4) == doctest::Approx(-compensator_torque(p, -0.4)));
}

TEST_CASE("equivalent stiffness matches the torque gradient on random parameters") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    CompensatorParams p;
    p.geometry.L = 50.0 + 300.0 * u(rng);
    p.geometry.a_x = p.geometry.L * (1.2 + 4.0 * u(rng));
    p.geometry.a_y = -200.0 + 400.0 * u(rng);
    p.geometry.gamma_offset = -3.0 + 6.0 * u(rng);
    p.elastics = {1e3 + 1e5 * u(rng), 1500.0 * u(rng)};
    const double q = -2.5 + 2.5 * u(rng);
    const double K0 = 1e9;
    const double dK = equivalent_joint_stiffness(p, K0, q).value - K0;
    const double dM = central([&](double x) { return compensator_torque(p, x); }, q, 1e-5);
    const double scale = p.elastics.K_c * p.geometry.a() * p.geometry.L;
    CHECK(dK == doctest::Approx(-dM).epsilon(1e-6).scale(std::abs(dM) + 1e-6 * scale));
    ++checked;
  }
  CHECK(checked == 300);
}

TEST_CASE("equivalent stiffness special cases") {
  auto p = reference_params();
  p.elastics.K_c = 0.0;
  CHECK(equivalent_joint_stiffness(p, 2e9, -0.3).value == 2e9);
  const auto& g = kReference;
  CHECK(eta(g, 458.0, g.alpha()) == doctest::Approx(458.0 / (g.a() + g.L) - 1.0).epsilon(1e-14));
  CHECK_THROWS_AS(equivalent_joint_stiffness(reference_params(), 0.0, 0.0), InputError);
  auto weak = reference_params();
  weak.elastics.s0 = 0.0;
  CHECK(equivalent_joint_stiffness(weak, 1.0, g.alpha()).nonphysical);
}

TEST_CASE("eta identities") {
  const auto& g = kReference;
  for (double q = -2.4; q <= 0.0; q += 0.1) {
    CHECK(eta(g, 0.0, q) == doctest::Approx(-std::cos(g.alpha() - q)).epsilon(1e-15));
    const double s = spring_length(g, q);
    const double sg = std::sin(g.alpha() - q);
    const double expect = g.a() * g.L / (s * s) * sg * sg;
    CHECK(eta(g, s, q) == doctest::Approx(expect).epsilon(1e-10).scale(1e-12));
    CHECK(eta(g, s, q) >= -1e-15);
    // affine in s0: three collinear points
    const double e1 = eta(g, 100.0, q), e2 = eta(g, 400.0, q), e3 = eta(g, 900.0, q);
    CHECK((e3 - e1) / 800.0 == doctest::Approx((e2 - e1) / 300.0).epsilon(1e-10));
  }
}

TEST_CASE("eta with the aligned crank is positive for the reference preload") {
  CompensatorGeometry g = kReference;
  g.gamma_offset = std::numbers::pi / 2 - g.alpha();
  for (double deg = -140.0; deg <= 0.0; deg += 0.5) CHECK(eta(g, 458.0, deg2rad(deg)) > 0.0);
}

TEST_CASE("eta curve table") {
  std::vector<double> s0{300.0, 458.0, 700.0};
  std::vector<double> grid;
  for (double d = -140.0; d <= 0.0; d += 10.0) grid.push_back(deg2rad(d));
  const auto t = eta_curve(kReference, s0, grid);
  CHECK(t.values.rows() == static_cast<Eigen::Index>(grid.size()));
  CHECK(t.values.cols() == 3);
  for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
    // larger preload length gives larger eta wherever the bracket is positive
    const double q = grid[static_cast<std::size_t>(i)];
    const double s = spring_length(kReference, q);
    const double gamma = kReference.gamma(q);
    const double bracket = kReference.a() * kReference.L / (s * s) * std::pow(std::sin(gamma), 2) + std::cos(gamma);
    if (bracket > 0) {
      CHECK(t.values(i, 0) < t.values(i, 1));
      CHECK(t.values(i, 1) < t.values(i, 2));
    }
  }
  CHECK_THROWS_WITH_AS(eta_curve(kReference, s0, std::vector<double>{}), "empty grid", InputError);
}

TEST_CASE("geometry invariants") {
  CHECK_THROWS_AS((CompensatorGeometry{0.0, 600.0, 0.0, 0.0}.validate()), InputError);
  CHECK_THROWS_AS((CompensatorGeometry{700.0, 600.0, 0.0, 0.0}.validate()), InputError);
  CHECK_THROWS_AS((CompensatorElastics{-1.0, 400.0}.validate()), InputError);
  CHECK_THROWS_AS((CompensatorElastics{1.0, -4.0}.validate()), InputError);
  CHECK_NOTHROW(reference_params().validate());
}
