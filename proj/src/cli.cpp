#include "elastocal/cli.hpp"

#include "elastocal/csv_io.hpp"
#include "elastocal/doe.hpp"
#include "elastocal/elasto_ident.hpp"
#include "elastocal/geom_ident.hpp"
#include "elastocal/sim.hpp"
#include "elastocal/stiffness.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

#ifndef ELASTOCAL_VERSION
#define ELASTOCAL_VERSION "dev"
#endif

namespace elastocal::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kComplianceUnit = 1e-9;  // reports use 1e-9 rad/(N*mm)

// Default truth for `simulate --kind geometry` without a model: same as the
// compensator in data/kr270_like.json. The phase puts the spring at the
// crank-perpendicular position at q2 = 0, gamma_offset = pi/2 - alpha.
constexpr double kDefaultL = 184.72, kDefaultAx = 685.93, kDefaultAy = 120.30;
const double kDefaultGammaOffset = std::numbers::pi / 2.0 - std::atan2(kDefaultAy, kDefaultAx);
const std::vector<double> kSweepAngles{-0.01, -30, -60, -90, -120, -145};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string fixed(double v, int decimals) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(decimals) << v;
  return s.str();
}

class Session {
 public:
  Session(std::string subcommand, const std::string& out_dir) : dir_(out_dir) {
    manifest_["subcommand"] = std::move(subcommand);
    manifest_["tool_version"] = ELASTOCAL_VERSION;
    manifest_["output_dir"] = out_dir;
    manifest_["inputs"] = json::array();
    manifest_["outputs"] = json::array();
    manifest_["options"] = json::object();
    manifest_["seed"] = nullptr;
  }

  /// Reads an input file and records its digest before anything parses it.
  std::string input(const std::string& path) {
    std::string text = read_text_file(path);
    manifest_["inputs"].push_back({{"path", path}, {"sha256", sha256_hex(text)}});
    return text;
  }

  void option(const std::string& key, json value) { manifest_["options"][key] = std::move(value); }
  void seed(std::uint64_t s) { manifest_["seed"] = s; }

  void output(const std::string& name, const std::string& content) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw InputError("cannot create output directory " + dir_.string() + ": " + ec.message());
    write_text_file((dir_ / name).string(), content);
    manifest_["outputs"].push_back({{"path", name}, {"sha256", sha256_hex(content)}});
  }

  void finish() { output_manifest(); }

 private:
  void output_manifest() {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    write_text_file((dir_ / "manifest.json").string(), manifest_.dump(2) + "\n");
  }

  fs::path dir_;
  json manifest_;
};

// ---------------------------------------------------------------------------
// JSON helpers for the plan constraints file.

std::vector<double> number_list(const json& v, const std::string& field, std::size_t n = 0) {
  if (!v.is_array() || (n && v.size() != n))
    throw InputError(field + ": expected an array" + (n ? " of " + std::to_string(n) + " numbers" : ""));
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw InputError(field + ": expected numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

struct DoeConfig {
  PlanConstraints constraints;
  ParameterLayout layout;
  TestPose test;
  NoiseModel noise;
};

DoeConfig parse_doe_config(const std::string& text, const std::string& path) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
  if (!root.is_object()) throw InputError(path + ": expected an object");
  static const std::vector<std::string> known{"F_max_N", "q2_buckets_deg", "joint_limits_deg",
                                              "q1_allowed_deg", "load_direction", "cone_half_angle_deg",
                                              "cone_directions", "joints", "test_pose", "noise_sigma_mm"};
  for (const auto& item : root.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw InputError(path + ": unknown key \"" + item.key() + "\"");

  DoeConfig cfg;
  auto& c = cfg.constraints;
  if (!root.contains("F_max_N") || !root["F_max_N"].is_number()) throw InputError(path + ": F_max_N required");
  c.F_max = root["F_max_N"].get<double>();
  if (!root.contains("q2_buckets_deg")) throw InputError(path + ": q2_buckets_deg required");
  for (double q : number_list(root["q2_buckets_deg"], "q2_buckets_deg")) c.q2_buckets.push_back(deg2rad(q));
  if (root.contains("joint_limits_deg")) {
    const auto& jl = root["joint_limits_deg"];
    if (!jl.is_object() || !jl.contains("lower") || !jl.contains("upper"))
      throw InputError(path + ": joint_limits_deg needs lower and upper");
    const auto lo = number_list(jl["lower"], "joint_limits_deg.lower", 6);
    const auto hi = number_list(jl["upper"], "joint_limits_deg.upper", 6);
    for (int j = 0; j < 6; ++j) {
      c.lower(j) = deg2rad(lo[static_cast<std::size_t>(j)]);
      c.upper(j) = deg2rad(hi[static_cast<std::size_t>(j)]);
    }
  }
  if (root.contains("q1_allowed_deg")) {
    if (!root["q1_allowed_deg"].is_array()) throw InputError(path + ": q1_allowed_deg must be an array");
    for (const auto& iv : root["q1_allowed_deg"]) {
      const auto v = number_list(iv, "q1_allowed_deg[]", 2);
      c.q1_allowed.emplace_back(deg2rad(v[0]), deg2rad(v[1]));
    }
  }
  if (root.contains("load_direction")) {
    const auto v = number_list(root["load_direction"], "load_direction", 3);
    c.load_direction = Eigen::Vector3d(v[0], v[1], v[2]);
  }
  if (root.contains("cone_half_angle_deg")) c.cone_half_angle = deg2rad(root["cone_half_angle_deg"].get<double>());
  if (root.contains("cone_directions")) c.cone_directions = root["cone_directions"].get<int>();
  if (root.contains("joints")) {
    cfg.layout.joints.clear();
    for (double j : number_list(root["joints"], "joints")) cfg.layout.joints.push_back(static_cast<int>(j));
  }
  cfg.layout.q2_buckets = c.q2_buckets;
  if (!root.contains("test_pose")) throw InputError(path + ": test_pose required");
  const auto& tp = root["test_pose"];
  const auto q = number_list(tp.at("q_deg"), "test_pose.q_deg", 6);
  for (int j = 0; j < 6; ++j) cfg.test.q(j) = deg2rad(q[static_cast<std::size_t>(j)]);
  if (tp.contains("force_N")) {
    const auto f = number_list(tp["force_N"], "test_pose.force_N", 3);
    cfg.test.F.head<3>() = Eigen::Vector3d(f[0], f[1], f[2]);
  }
  if (tp.contains("moment_Nmm")) {
    const auto m = number_list(tp["moment_Nmm"], "test_pose.moment_Nmm", 3);
    cfg.test.F.tail<3>() = Eigen::Vector3d(m[0], m[1], m[2]);
  }
  if (root.contains("noise_sigma_mm")) cfg.noise.sigma = root["noise_sigma_mm"].get<double>();
  c.validate();
  cfg.layout.validate();
  return cfg;
}

std::optional<CompensatorGeometry> parse_geometry_json(const std::string& text, const std::string& path) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
  CompensatorGeometry g;
  try {
    g.L = root.at("L_mm").get<double>();
    g.a_x = root.at("ax_mm").get<double>();
    g.a_y = root.at("ay_mm").get<double>();
    g.gamma_offset = root.value("gamma_offset_rad", 0.0);
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  g.validate();
  return g;
}

std::vector<double> q2_grid(double from_deg, double to_deg, double step_deg) {
  if (!(step_deg > 0.0)) throw InputError("q2 grid: step must be positive");
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((to_deg - from_deg) / step_deg + 1e-9));
  for (int i = 0; i <= n; ++i) out.push_back(deg2rad(from_deg + i * step_deg));
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands.

struct Common {
  std::string out = "out";
  std::uint64_t seed = 1;
};

void cmd_geom_ident(const Common& common, const std::string& data, int samples, const std::string& mode) {
  Session s("geom-ident", common.out);
  const std::string text = s.input(data);
  s.seed(common.seed);
  s.option("samples", samples);
  s.option("mode", mode);
  const MarkerDataset ds = parse_marker_dataset(text, data);
  GeometryOptions opt;
  opt.mode = mode == "3d" ? ArcMode::Spatial3D : ArcMode::Planar2D;
  opt.ci_samples = samples;
  opt.seed = common.seed;
  const auto est = identify_compensator_geometry(ds, opt);
  const auto& g = est.geometry;

  std::ostringstream rep;
  rep << "Gravity compensator geometry (" << ds.rows() << " poses, " << ds.satellites.size()
      << " P0 markers, " << (opt.mode == ArcMode::Planar2D ? "planar" : "spatial") << " arc fit)\n\n";
  rep << "parameter      value        CI (+-3 sigma)\n";
  rep << "L [mm]         " << std::setw(10) << fixed(g.L, 2) << "   +- " << fixed(est.ci(0), 2) << "\n";
  rep << "a_x [mm]       " << std::setw(10) << fixed(g.a_x, 2) << "   +- " << fixed(est.ci(1), 2) << "\n";
  rep << "a_y [mm]       " << std::setw(10) << fixed(g.a_y, 2) << "   +- " << fixed(est.ci(2), 2) << "\n\n";
  rep << "P2 (joint-2 axis) [mm]  " << fixed(est.p2.x(), 3) << ", " << fixed(est.p2.y(), 3) << "\n";
  rep << "P0 (spring anchor) [mm] " << fixed(est.p0.x(), 3) << ", " << fixed(est.p0.y(), 3) << "\n";
  rep << "angle direction         " << (est.angle_direction < 0 ? "negated (tracker sees q2 clockwise)" : "as given")
      << "\n";
  rep << "gamma offset [rad]      " << fixed(g.gamma_offset, 6) << "\n";
  rep << "circle fit rms [mm]     " << fixed(est.circle_rms, 4) << "\n";
  rep << "arc fit rms [mm]        " << fixed(est.arcs_rms, 4) << "\n";
  rep << "CI samples              " << samples << " (seed " << common.seed << ")\n";

  std::ostringstream csv;
  csv << "parameter,value,ci_3sigma,unit\n";
  csv << "L," << format_number(g.L) << ',' << format_number(est.ci(0)) << ",mm\n";
  csv << "a_x," << format_number(g.a_x) << ',' << format_number(est.ci(1)) << ",mm\n";
  csv << "a_y," << format_number(g.a_y) << ',' << format_number(est.ci(2)) << ",mm\n";
  csv << "gamma_offset," << format_number(g.gamma_offset) << ",,rad\n";

  json geom{{"L_mm", g.L}, {"ax_mm", g.a_x}, {"ay_mm", g.a_y}, {"gamma_offset_rad", g.gamma_offset}};
  std::cout << rep.str();
  s.output("geometry_report.txt", rep.str());
  s.output("geometry.csv", csv.str());
  s.output("compensator_geometry.json", geom.dump(2) + "\n");
  s.finish();
}

void cmd_elasto_ident(const Common& common, const std::string& model_path, const std::string& records_path,
                      const std::vector<int>& joints, const std::vector<double>& buckets_deg,
                      const std::string& geometry_path, int samples) {
  Session s("elasto-ident", common.out);
  const std::string model_text = s.input(model_path);
  const std::string records_text = s.input(records_path);
  std::string geometry_text;
  if (!geometry_path.empty()) geometry_text = s.input(geometry_path);
  s.seed(common.seed);
  s.option("samples", samples);
  s.option("joints", joints);
  s.option("q2_buckets_deg", buckets_deg);

  ManipulatorModel model = load_model(model_text);
  const auto records = parse_records(records_text, records_path);
  if (records.empty()) throw InputError(records_path + ": no records");

  ParameterLayout layout;
  if (buckets_deg.empty()) {
    layout = ParameterLayout::from_records(records, joints);
  } else {
    layout.joints = joints;
    for (double q : buckets_deg) layout.q2_buckets.push_back(deg2rad(q));
  }
  std::optional<CompensatorGeometry> geometry;
  if (!geometry_path.empty())
    geometry = parse_geometry_json(geometry_text, geometry_path);
  else if (model.compensator)
    geometry = model.compensator->geometry;
  const auto est = identify_elastostatics(records, layout, model, geometry);
  // --samples 0 skips the intervals
  ElastostaticIntervals ci;
  ci.layout_k = Eigen::VectorXd::Zero(layout.size());
  if (samples > 0) ci = confidence_intervals_elasto(records, layout, model, geometry, est, samples, common.seed);

  auto row = [](std::ostringstream& o, const std::string& name, double value, double half, int decimals) {
    o << std::left << std::setw(26) << name << std::right << std::setw(12) << fixed(value, decimals) << "   +- "
      << fixed(half, decimals) << " (" << fixed(value != 0.0 ? 100.0 * half / std::abs(value) : 0.0, 1)
      << "%)\n";
  };
  std::ostringstream rep, csv;
  csv << "parameter,value,ci_3sigma,unit\n";
  rep << "Elastostatic parameters (" << records.size() << " records, " << est.compliances.equations
      << " equations, " << layout.q2_buckets.size() << " q2 buckets)\n\n";
  rep << "parameter                        value   CI (+-3 sigma)\n";
  if (est.compensator && geometry) {
    const auto& c = *est.compensator;
    const double aL = geometry->a() * geometry->L;
    const double kc = 1.0 / (c.K_c * aL) / kComplianceUnit;
    row(rep, "k_c [1e-9 rad/(N*mm)]", kc, kc * ci.K_c / std::abs(c.K_c), 3);
    row(rep, "s_0 [mm]", c.s0, ci.s0, 1);
    csv << "k_c," << format_number(kc) << ',' << format_number(kc * ci.K_c / std::abs(c.K_c)) << ",1e-9 rad/(N*mm)\n";
    csv << "K_c," << format_number(c.K_c) << ',' << format_number(ci.K_c) << ",N/mm\n";
    csv << "s_0," << format_number(c.s0) << ',' << format_number(ci.s0) << ",mm\n";
    csv << "K0_theta2," << format_number(c.K0) << ',' << format_number(ci.K0) << ",N*mm/rad\n";
  }
  for (int j = 1; j <= kNumJoints; ++j) {
    if (std::isnan(est.k(j - 1))) continue;
    const std::string name = "k_" + std::to_string(j);
    row(rep, name + " [1e-9 rad/(N*mm)]", est.k(j - 1) / kComplianceUnit, ci.k(j - 1) / kComplianceUnit, 3);
    csv << name << ',' << format_number(est.k(j - 1) / kComplianceUnit) << ','
        << format_number(ci.k(j - 1) / kComplianceUnit) << ",1e-9 rad/(N*mm)\n";
  }
  rep << "\nper-bucket joint-2 compliance [1e-9 rad/(N*mm)]\n";
  for (std::size_t b = 0; b < est.bucket_k2.size(); ++b) {
    const int col = layout.column_of_bucket(static_cast<int>(b));
    rep << "  q2 = " << std::setw(8) << fixed(rad2deg(layout.q2_buckets[b]), 2) << " deg   "
        << fixed(est.bucket_k2[b] / kComplianceUnit, 4) << "  +- " << fixed(ci.layout_k(col) / kComplianceUnit, 4)
        << "\n";
    csv << "k2_" << b + 1 << ',' << format_number(est.bucket_k2[b] / kComplianceUnit) << ','
        << format_number(ci.layout_k(col) / kComplianceUnit) << ",1e-9 rad/(N*mm)\n";
  }
  rep << "\nresidual rms [mm]        " << fixed(est.compliances.rms, 4) << "\n";
  rep << "noise estimate [mm]      " << fixed(est.compliances.sigma_hat, 4) << "\n";
  if (est.compensator) rep << "separation condition no. " << fmt(est.compensator->condition_number, 4) << "\n";
  rep << "CI samples               " << samples << " (seed " << common.seed << ")\n";
  for (const auto& w : est.compliances.warnings) rep << "warning: " << w << "\n";

  std::cout << rep.str();
  s.output("elasto_report.txt", rep.str());
  s.output("elasto.csv", csv.str());
  if (est.compensator && geometry) {
    CompensatorParams p;
    p.geometry = *geometry;
    p.elastics.K_c = est.compensator->K_c;
    p.elastics.s0 = est.compensator->s0;
    double lo = 0.0, hi = 0.0;
    for (double q : layout.q2_buckets) {
      lo = std::min(lo, rad2deg(q));
      hi = std::max(hi, rad2deg(q));
    }
    const auto grid = q2_grid(std::floor(lo), std::ceil(hi), 1.0);
    s.output("k2_equiv.csv", k2_plot_csv(p, est.compensator->K0, grid));
  }
  s.finish();
}

void cmd_doe(const Common& common, const std::string& model_path, const std::string& config_path, int per_bucket,
             int starts) {
  Session s("doe", common.out);
  const std::string model_text = s.input(model_path);
  const std::string config_text = s.input(config_path);
  s.seed(common.seed);
  s.option("per_bucket", per_bucket);
  s.option("starts", starts);
  const ManipulatorModel model = load_model(model_text);
  const DoeConfig cfg = parse_doe_config(config_text, config_path);
  OptimizerOptions opt;
  opt.starts = starts;
  const auto plan = optimize_plan(model, cfg.layout, cfg.test, cfg.constraints, per_bucket, common.seed, opt);
  const auto violations = check_plan(plan, cfg.constraints, cfg.layout);
  if (!violations.empty()) throw NumericalError("doe: optimizer produced an infeasible plan: " + violations.front());
  const auto acc = test_pose_accuracy(plan, model, cfg.layout, cfg.test, cfg.noise);

  std::ostringstream rep;
  rep << "Calibration plan: " << cfg.layout.q2_buckets.size() << " q2 buckets x " << per_bucket
      << " configurations, |F| = " << fixed(cfg.constraints.F_max, 1) << " N\n";
  rep << "score rho0^2/sigma^2     " << fmt(plan.score, 6) << "\n";
  rep << "rho0^2 [mm^2]            " << fmt(acc.rho2, 6) << "  (sigma = " << cfg.noise.sigma << " mm)\n";
  rep << "rho0 rms [mm]            " << fmt(acc.rms, 6) << "\n";
  rep << "search                   " << plan.diagnostics << "\n\n";
  rep << "bucket    q1       q2       q3       q4       q5       q6   [deg]\n";
  for (const auto& e : plan.entries) {
    rep << std::setw(4) << e.bucket + 1;
    for (int j = 0; j < kNumJoints; ++j) rep << std::setw(9) << fixed(rad2deg(e.q(j)), 2);
    rep << "\n";
  }
  std::cout << rep.str();
  s.output("plan.csv", format_plan(plan));
  s.output("doe_report.txt", rep.str());
  s.finish();
}

void cmd_simulate(const Common& common, const std::string& kind, const std::string& model_path,
                  const std::string& plan_path, double sigma, int repeats, bool linear,
                  const std::vector<double>& q2_deg) {
  Session s("simulate", common.out);
  s.seed(common.seed);
  s.option("kind", kind);
  s.option("sigma_mm", sigma);
  if (kind == "geometry") {
    GeometryTruth truth;
    if (!model_path.empty()) {
      const ManipulatorModel model = load_model(s.input(model_path));
      if (!model.compensator) throw InputError(model_path + ": model has no compensator");
      truth.geometry = model.compensator->geometry;
    } else {
      truth.geometry = {kDefaultL, kDefaultAx, kDefaultAy, kDefaultGammaOffset};
    }
    truth.sigma = sigma;
    truth.seed = common.seed;
    const auto& angles = q2_deg.empty() ? kSweepAngles : q2_deg;
    s.option("q2_deg", angles);
    s.output("geometry.csv", format_marker_dataset(simulate_geometry_dataset(truth, angles)));
  } else if (kind == "deflection") {
    if (model_path.empty() || plan_path.empty())
      throw InputError("simulate --kind deflection needs --model and --plan");
    const ManipulatorModel model = load_model(s.input(model_path));
    const CalibrationPlan plan = parse_plan(s.input(plan_path), plan_path);
    s.option("repeats", repeats);
    s.option("linear", linear);
    DeflectionSimOptions opt;
    opt.sigma = sigma;
    opt.seed = common.seed;
    opt.mode = linear ? DeflectionModel::Linear : DeflectionModel::Nonlinear;
    s.output("records.csv", format_records(simulate_deflection_records(model, plan, repeats, opt)));
  } else {
    throw InputError("simulate: --kind must be geometry or deflection");
  }
  s.finish();
}

void cmd_predict(const Common& common, const std::string& model_path, const std::string& cases_path,
                 bool nonlinear) {
  Session s("predict", common.out);
  const ManipulatorModel model = load_model(s.input(model_path));
  const auto cases = parse_load_cases(s.input(cases_path), cases_path);
  s.option("nonlinear", nonlinear);
  std::ostringstream csv;
  csv << "case,point,method,dx_mm,dy_mm,dz_mm\n";
  auto emit = [&csv](std::size_t c, const std::string& point, const char* method, const Eigen::Vector3d& d) {
    csv << c + 1 << ',' << point << ',' << method << ',' << format_number(d.x()) << ',' << format_number(d.y())
        << ',' << format_number(d.z()) << '\n';
  };
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& lc = cases[c];
    emit(c, "tool", "linear", predict_tool_deflection(model, model.compensator, lc.q, lc.F).head<3>());
    const auto markers = predict_marker_deflections(model, model.compensator, lc.q, lc.F);
    for (std::size_t m = 0; m < markers.size(); ++m) emit(c, "M" + std::to_string(m + 1), "linear", markers[m]);
    if (nonlinear) {
      const auto before = solve_equilibrium(model, model.compensator, lc.q, AppliedWrench{});
      const auto after = solve_equilibrium(model, model.compensator, lc.q, AppliedWrench{lc.F});
      if (!before.converged || !after.converged)
        throw NumericalError("predict: case " + std::to_string(c + 1) + ": equilibrium did not converge");
      emit(c, "tool", "nonlinear", after.t.translation() - before.t.translation());
      for (std::size_t m = 0; m < model.markers.size(); ++m)
        emit(c, "M" + std::to_string(m + 1), "nonlinear", after.t * model.markers[m] - before.t * model.markers[m]);
    }
  }
  s.output("deflections.csv", csv.str());
  s.finish();
}

void cmd_eta_curve(const Common& common, const std::string& model_path, std::optional<CompensatorGeometry> geom,
                   const std::vector<double>& s0_list, double from, double to, double step) {
  Session s("eta-curve", common.out);
  if (!model_path.empty()) {
    const ManipulatorModel model = load_model(s.input(model_path));
    if (!model.compensator) throw InputError(model_path + ": model has no compensator");
    geom = model.compensator->geometry;
  }
  if (!geom) throw InputError("eta-curve: give --model or --L, --ax and --ay");
  geom->validate();
  if (s0_list.empty()) throw InputError("eta-curve: --s0 list required");
  s.option("s0_mm", s0_list);
  s.option("q2_from_deg", from);
  s.option("q2_to_deg", to);
  s.option("q2_step_deg", step);
  const auto grid = q2_grid(from, to, step);
  s.output("eta.csv", eta_plot_csv(eta_curve(*geom, s0_list, grid)));
  s.finish();
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

std::string eta_plot_csv(const EtaTable& table) {
  std::ostringstream out;
  out << "x,series,y\n";
  for (std::size_t c = 0; c < table.s0.size(); ++c)
    for (std::size_t r = 0; r < table.q2.size(); ++r)
      out << format_number(rad2deg(table.q2[r])) << ",s0=" << format_number(table.s0[c]) << ','
          << format_number(table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))) << '\n';
  return out.str();
}

std::string k2_plot_csv(const CompensatorParams& params, double K0, std::span<const double> q2_grid) {
  if (q2_grid.empty()) throw InputError("empty grid");
  std::ostringstream out;
  out << "x,series,y\n";
  for (double q : q2_grid) {
    const auto eq = equivalent_joint_stiffness(params, K0, q);
    out << format_number(rad2deg(q)) << ",k2_equiv," << format_number(1.0 / eq.value / kComplianceUnit) << '\n';
  }
  for (double q : q2_grid)
    out << format_number(rad2deg(q)) << ",k2_bare," << format_number(1.0 / K0 / kComplianceUnit) << '\n';
  return out.str();
}

int run(int argc, const char* const* argv) {
  CLI::App app{"elastocal: elastostatic calibration of a manipulator with a spring gravity compensator"};
  app.set_version_flag("--version", ELASTOCAL_VERSION);
  app.require_subcommand(1);

  Common common;
  auto add_common = [&common](CLI::App* sub, bool seeded) {
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    if (seeded) sub->add_option("--seed", common.seed, "random seed")->capture_default_str();
  };

  std::string data, model, records, plan, geometry, cases, mode = "2d", kind = "geometry";
  int samples = 200, per_bucket = 3, starts = 20, repeats = 3;
  std::vector<int> joints{2, 3, 4, 5, 6};
  std::vector<double> buckets, q2_deg, s0_list;
  double sigma = 0.0, from = -140.0, to = 0.0, step = 1.0;
  bool linear = false, nonlinear = false;
  double L = 0.0, ax = 0.0, ay = 0.0, gamma_offset = 0.0;

  auto* geo = app.add_subcommand("geom-ident", "identify compensator geometry from tracker data");
  geo->add_option("--data", data, "marker CSV (q2_deg,P1_x,P1_y,P01_x,...)")->required()->check(CLI::ExistingFile);
  geo->add_option("--samples", samples, "confidence-interval samples")->capture_default_str();
  geo->add_option("--mode", mode, "arc fit: 2d or 3d")->check(CLI::IsMember({"2d", "3d"}))->capture_default_str();
  add_common(geo, true);

  auto* ela = app.add_subcommand("elasto-ident", "identify joint compliances and compensator elastics");
  ela->add_option("--model", model, "model JSON")->required()->check(CLI::ExistingFile);
  ela->add_option("--records", records, "deflection records CSV")->required()->check(CLI::ExistingFile);
  ela->add_option("--joints", joints, "included joints")->delimiter(',')->capture_default_str();
  ela->add_option("--q2-buckets-deg", buckets, "q2 bucket angles (default: from records)")->delimiter(',');
  ela->add_option("--geometry", geometry, "compensator geometry JSON from geom-ident")->check(CLI::ExistingFile);
  ela->add_option("--samples", samples, "confidence-interval samples")->capture_default_str();
  add_common(ela, true);

  auto* doe = app.add_subcommand("doe", "optimize calibration experiments");
  doe->add_option("--model", model, "model JSON")->required()->check(CLI::ExistingFile);
  doe->add_option("--constraints", plan, "plan constraints JSON")->required()->check(CLI::ExistingFile);
  doe->add_option("--per-bucket", per_bucket, "configurations per q2 bucket")->capture_default_str();
  doe->add_option("--starts", starts, "random starts")->capture_default_str();
  add_common(doe, true);

  auto* sim = app.add_subcommand("simulate", "generate synthetic measurements");
  sim->add_option("--kind", kind, "geometry or deflection")
      ->check(CLI::IsMember({"geometry", "deflection"}))
      ->capture_default_str();
  sim->add_option("--model", model, "model JSON")->check(CLI::ExistingFile);
  sim->add_option("--plan", plan, "plan CSV (deflection)")->check(CLI::ExistingFile);
  sim->add_option("--sigma-mm", sigma, "noise per coordinate")->capture_default_str();
  sim->add_option("--repeats", repeats, "repeats per plan entry")->capture_default_str();
  sim->add_option("--q2-deg", q2_deg, "q2 poses (geometry)")->delimiter(',');
  sim->add_flag("--linear", linear, "first-order deflections instead of the equilibrium solver");
  add_common(sim, true);

  auto* pre = app.add_subcommand("predict", "predict deflections under load");
  pre->add_option("--model", model, "model JSON")->required()->check(CLI::ExistingFile);
  pre->add_option("--cases", cases, "load cases CSV")->required()->check(CLI::ExistingFile);
  pre->add_flag("--nonlinear", nonlinear, "also solve the loaded equilibrium");
  add_common(pre, false);

  auto* eta = app.add_subcommand("eta-curve", "tabulate the compensator stiffness factor");
  eta->add_option("--model", model, "model JSON with a compensator")->check(CLI::ExistingFile);
  auto* oL = eta->add_option("--L", L, "crank radius, mm");
  auto* oax = eta->add_option("--ax", ax, "mm");
  auto* oay = eta->add_option("--ay", ay, "mm");
  eta->add_option("--gamma-offset", gamma_offset, "rad");
  eta->add_option("--s0", s0_list, "unloaded spring lengths, mm")->delimiter(',')->required();
  eta->add_option("--q2-from", from, "deg")->capture_default_str();
  eta->add_option("--q2-to", to, "deg")->capture_default_str();
  eta->add_option("--q2-step", step, "deg")->capture_default_str();
  add_common(eta, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (geo->parsed()) {
      cmd_geom_ident(common, data, samples, mode);
    } else if (ela->parsed()) {
      cmd_elasto_ident(common, model, records, joints, buckets, geometry, samples);
    } else if (doe->parsed()) {
      cmd_doe(common, model, plan, per_bucket, starts);
    } else if (sim->parsed()) {
      cmd_simulate(common, kind, model, plan, sigma, repeats, linear, q2_deg);
    } else if (pre->parsed()) {
      cmd_predict(common, model, cases, nonlinear);
    } else if (eta->parsed()) {
      std::optional<CompensatorGeometry> g;
      if (oL->count() && oax->count() && oay->count()) g = CompensatorGeometry{L, ax, ay, gamma_offset};
      cmd_eta_curve(common, model, g, s0_list, from, to, step);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace elastocal::cli
