#include "elastocal/robot_model.hpp"

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace elastocal {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw InputError(where + ": expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (auto key : allowed) known = known || item.key() == key;
    if (!known) throw InputError(where + ": unknown key \"" + item.key() + "\"");
  }
}

const json& require(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) throw InputError(where + ": missing field \"" + key + "\"");
  return obj.at(key);
}

double as_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw InputError(field + ": expected a number");
  return v.get<double>();
}

Eigen::Vector3d as_vec3(const json& v, const std::string& field) {
  if (!v.is_array() || v.size() != 3) throw InputError(field + ": expected an array of 3 numbers");
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i) out(i) = as_number(v[static_cast<std::size_t>(i)], field);
  return out;
}

Eigen::Isometry3d as_transform(const json& v, const std::string& field) {
  reject_unknown(v, field, {"translation_mm", "rotation_rpy_rad"});
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Vector3d rpy = Eigen::Vector3d::Zero();
  if (v.contains("translation_mm")) t = as_vec3(v["translation_mm"], field + ".translation_mm");
  if (v.contains("rotation_rpy_rad")) rpy = as_vec3(v["rotation_rpy_rad"], field + ".rotation_rpy_rad");
  return make_transform(t, rpy);
}

JointSpec parse_joint(const json& v, const std::string& field) {
  reject_unknown(v, field,
                 {"axis", "link_translation_mm", "link_rotation_rpy_rad", "compliance_rad_per_Nmm",
                  "mass_kg", "com_mm"});
  JointSpec j;
  j.axis = as_vec3(require(v, field, "axis"), field + ".axis");
  Eigen::Vector3d rpy = Eigen::Vector3d::Zero();
  if (v.contains("link_rotation_rpy_rad"))
    rpy = as_vec3(v["link_rotation_rpy_rad"], field + ".link_rotation_rpy_rad");
  j.link = make_transform(as_vec3(require(v, field, "link_translation_mm"), field + ".link_translation_mm"),
                          rpy);
  j.compliance = as_number(require(v, field, "compliance_rad_per_Nmm"), field + ".compliance_rad_per_Nmm");
  j.mass = v.contains("mass_kg") ? as_number(v["mass_kg"], field + ".mass_kg") : 0.0;
  if (v.contains("com_mm")) j.com = as_vec3(v["com_mm"], field + ".com_mm");
  return j;
}

CompensatorParams parse_compensator(const json& v) {
  const std::string field = "compensator";
  reject_unknown(v, field,
                 {"L_mm", "ax_mm", "ay_mm", "Kc_N_per_mm", "s0_mm", "gamma_offset_rad",
                  "torque_convention"});
  CompensatorParams c;
  c.geometry.L = as_number(require(v, field, "L_mm"), "compensator.L_mm");
  c.geometry.a_x = as_number(require(v, field, "ax_mm"), "compensator.ax_mm");
  c.geometry.a_y = as_number(require(v, field, "ay_mm"), "compensator.ay_mm");
  if (v.contains("gamma_offset_rad"))
    c.geometry.gamma_offset = as_number(v["gamma_offset_rad"], "compensator.gamma_offset_rad");
  c.elastics.K_c = as_number(require(v, field, "Kc_N_per_mm"), "compensator.Kc_N_per_mm");
  c.elastics.s0 = as_number(require(v, field, "s0_mm"), "compensator.s0_mm");
  if (v.contains("torque_convention")) {
    const auto& s = v["torque_convention"];
    if (s == "spring_on_joint")
      c.torque_convention = TorqueConvention::SpringOnJoint;
    else if (s == "literal")
      c.torque_convention = TorqueConvention::Literal;
    else
      throw InputError("compensator.torque_convention: expected \"spring_on_joint\" or \"literal\"");
  }
  return c;
}

}  // namespace

ManipulatorModel load_model(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end(), nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("model file: ") + e.what());
  }
  reject_unknown(root, "model", {"name", "gravity", "base", "tool", "markers", "joints", "compensator"});

  ManipulatorModel model;
  if (root.contains("name")) {
    if (!root["name"].is_string()) throw InputError("name: expected a string");
    model.name = root["name"].get<std::string>();
  }
  if (root.contains("gravity")) model.gravity = as_vec3(root["gravity"], "gravity");
  if (root.contains("base")) model.base = as_transform(root["base"], "base");
  if (root.contains("tool")) model.tool = as_transform(root["tool"], "tool");
  if (root.contains("markers")) {
    const auto& m = root["markers"];
    if (!m.is_array()) throw InputError("markers: expected an array");
    for (std::size_t i = 0; i < m.size(); ++i)
      model.markers.push_back(as_vec3(m[i], "markers[" + std::to_string(i) + "]"));
  }
  const auto& joints = require(root, "model", "joints");
  if (!joints.is_array() || joints.size() != kNumJoints)
    throw InputError("joints: exactly 6 joints required");
  for (std::size_t i = 0; i < kNumJoints; ++i)
    model.joints[i] = parse_joint(joints[i], "joints[" + std::to_string(i) + "]");
  if (root.contains("compensator")) model.compensator = parse_compensator(root["compensator"]);

  model.validate();
  return model;
}

ManipulatorModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return load_model(ss.str());
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

}  // namespace elastocal
