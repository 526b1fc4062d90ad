#include "elastocal/compensator.hpp"

#include <algorithm>
#include <cmath>

namespace elastocal {

void CompensatorGeometry::validate() const {
  if (!(L > 0.0)) throw InputError("compensator: L must be positive");
  if (!(a() > L)) throw InputError("compensator: anchor distance a must exceed L");
  if (!std::isfinite(gamma_offset)) throw InputError("compensator: gamma_offset not finite");
}

void CompensatorElastics::validate() const {
  if (!(K_c > 0.0)) throw InputError("compensator: K_c must be positive");
  if (!(s0 >= 0.0)) throw InputError("compensator: s0 must be non-negative");
}

double spring_length(const CompensatorGeometry& geom, double q2) {
  const double a = geom.a();
  const double L = geom.L;
  return std::sqrt(a * a + L * L + 2.0 * a * L * std::cos(geom.gamma(q2)));
}

double spring_angle(const CompensatorGeometry& geom, double q2) {
  const double ratio = geom.a() / spring_length(geom, q2) * std::sin(geom.gamma(q2));
  return std::asin(std::clamp(ratio, -1.0, 1.0));
}

double compensator_torque(const CompensatorParams& params, double q2) {
  const auto& g = params.geometry;
  const double s = spring_length(g, q2);
  const double literal = params.elastics.K_c * (1.0 - params.elastics.s0 / s) * g.a() * g.L *
                         std::sin(g.gamma(q2));
  return params.torque_convention == TorqueConvention::Literal ? literal : -literal;
}

double spring_energy(const CompensatorParams& params, double q2) {
  const double stretch = spring_length(params.geometry, q2) - params.elastics.s0;
  return 0.5 * params.elastics.K_c * stretch * stretch;
}

double eta(const CompensatorGeometry& geom, double s0, double q2) {
  const double s = spring_length(geom, q2);
  const double aL = geom.a() * geom.L;
  const double gamma = geom.gamma(q2);
  const double sin_g = std::sin(gamma);
  const double cos_g = std::cos(gamma);
  return s0 / s * (aL / (s * s) * sin_g * sin_g + cos_g) - cos_g;
}

EquivalentStiffness equivalent_joint_stiffness(const CompensatorParams& params, double K0,
                                               double q2) {
  if (!(K0 > 0.0)) throw InputError("equivalent_joint_stiffness: K0 must be positive");
  const auto& g = params.geometry;
  EquivalentStiffness out;
  out.eta = eta(g, params.elastics.s0, q2);
  out.value = K0 + params.elastics.K_c * g.a() * g.L * out.eta;
  out.nonphysical = !(out.value > 0.0);
  return out;
}

EtaTable eta_curve(const CompensatorGeometry& geom, std::span<const double> s0_list,
                   std::span<const double> q2_grid) {
  if (q2_grid.empty()) throw InputError("empty grid");
  if (s0_list.empty()) throw InputError("eta_curve: no s0 values");
  EtaTable table;
  table.q2.assign(q2_grid.begin(), q2_grid.end());
  table.s0.assign(s0_list.begin(), s0_list.end());
  table.values.resize(static_cast<Eigen::Index>(q2_grid.size()),
                      static_cast<Eigen::Index>(s0_list.size()));
  for (std::size_t i = 0; i < q2_grid.size(); ++i)
    for (std::size_t j = 0; j < s0_list.size(); ++j)
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          eta(geom, s0_list[j], q2_grid[i]);
  return table;
}

}  // namespace elastocal
