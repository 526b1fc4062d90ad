#include "elastocal/sim.hpp"

#include <cmath>
#include <random>

namespace elastocal {

namespace {

// Independent stream per (seed, a, b) so entries can be generated in any order.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

std::vector<Eigen::Vector3d> marker_positions(const ManipulatorModel& model, const Eigen::Isometry3d& tool) {
  std::vector<Eigen::Vector3d> out;
  for (const auto& m : model.markers) out.emplace_back(tool * m);
  return out;
}

}  // namespace

MarkerDataset simulate_geometry_dataset(const GeometryTruth& truth, std::span<const double> q2_deg) {
  const auto& g = truth.geometry;
  g.validate();
  const double dir = truth.angle_direction < 0 ? -1.0 : 1.0;
  // Inverse of the phase convention used by identify_compensator_geometry.
  const double psi0 = dir < 0 ? g.gamma_offset + 2.0 * g.alpha() : -g.gamma_offset;
  const Eigen::Vector3d p0 = truth.p2 - Eigen::Vector3d(g.a_x, g.a_y, 0.0);

  MarkerDataset d;
  d.has_z = truth.with_z;
  d.satellites.resize(truth.satellites.size());
  auto rng = stream(truth.seed, 0, 0);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto perturb = [&](Eigen::Vector3d p) {
    if (truth.sigma > 0.0)
      for (int c = 0; c < (truth.with_z ? 3 : 2); ++c) p(c) += truth.sigma * noise(rng);
    return p;
  };

  for (double q : q2_deg) {
    d.q2_deg.push_back(q);
    const double phi = psi0 + dir * deg2rad(q);
    const Eigen::Vector3d p1 = truth.p2 + g.L * Eigen::Vector3d(std::cos(phi), std::sin(phi), 0.0);
    const Eigen::Vector3d housing = p1 - p0;
    const double beta = std::atan2(housing.y(), housing.x());
    d.p1.push_back(perturb(p1));
    for (std::size_t k = 0; k < truth.satellites.size(); ++k) {
      const auto& s = truth.satellites[k];
      const double ang = beta + s.phase;
      d.satellites[k].push_back(perturb(p0 + s.radius * Eigen::Vector3d(std::cos(ang), std::sin(ang), 0.0)));
    }
  }
  return d;
}

std::vector<DeflectionRecord> simulate_deflection_records(const ManipulatorModel& truth,
                                                          const CalibrationPlan& plan, int repeats,
                                                          const DeflectionSimOptions& options) {
  if (repeats < 1) throw InputError("simulate_deflection_records: repeats must be >= 1");
  if (truth.markers.empty()) throw InputError("simulate_deflection_records: model has no markers");
  const auto& comp = truth.compensator;

  std::vector<DeflectionRecord> out;
  out.reserve(plan.entries.size() * static_cast<std::size_t>(repeats));
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const auto& e = plan.entries[i];
    std::vector<Eigen::Vector3d> deflection(truth.markers.size(), Eigen::Vector3d::Zero());
    if (options.mode == DeflectionModel::Linear) {
      deflection = predict_marker_deflections(truth, comp, e.q, e.F);
    } else {
      const auto before = solve_equilibrium(truth, comp, e.q, AppliedWrench{});
      const auto after = solve_equilibrium(truth, comp, e.q, AppliedWrench{e.F});
      if (!before.converged || !after.converged)
        throw NumericalError("simulate_deflection_records: entry " + std::to_string(i + 1) + ": " +
                             (before.converged ? after.diagnostics : before.diagnostics));
      const auto pb = marker_positions(truth, before.t);
      const auto pa = marker_positions(truth, after.t);
      for (std::size_t m = 0; m < pb.size(); ++m) deflection[m] = pa[m] - pb[m];
    }
    for (int r = 0; r < repeats; ++r) {
      auto rng = stream(options.seed, i + 1, static_cast<std::uint64_t>(r));
      std::normal_distribution<double> noise(0.0, options.sigma > 0.0 ? options.sigma : 1.0);
      DeflectionRecord rec;
      rec.q = e.q;
      rec.F = e.F;
      rec.repeat = r + 1;
      for (std::size_t m = 0; m < deflection.size(); ++m) {
        Eigen::Vector3d dp = deflection[m];
        if (options.sigma > 0.0)
          for (int c = 0; c < 3; ++c) {
            // before and after readings
            const double before = noise(rng);
            const double after = noise(rng);
            dp(c) += after - before;
          }
        rec.markers.push_back({static_cast<int>(m + 1), dp});
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace elastocal
