#include "elastocal/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace elastocal {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

const char* kJointCols[] = {"q1_deg", "q2_deg", "q3_deg", "q4_deg", "q5_deg", "q6_deg"};
const char* kWrenchCols[] = {"Fx_N", "Fy_N", "Fz_N", "Mx_Nmm", "My_Nmm", "Mz_Nmm"};

JointVector read_q(const CsvTable& t, const std::vector<double>& row, std::string_view ctx) {
  JointVector q;
  for (int j = 0; j < kNumJoints; ++j) q(j) = deg2rad(row[static_cast<std::size_t>(t.require(kJointCols[j], ctx))]);
  return q;
}

Wrench read_wrench(const CsvTable& t, const std::vector<double>& row, std::string_view ctx, bool moments_optional) {
  Wrench F = Wrench::Zero();
  for (int j = 0; j < 6; ++j) {
    const int c = (moments_optional && j >= 3) ? t.column(kWrenchCols[j]) : t.require(kWrenchCols[j], ctx);
    if (c >= 0) F(j) = row[static_cast<std::size_t>(c)];
  }
  return F;
}

void append_q_wrench(std::ostringstream& out, const JointVector& q, const Wrench& F) {
  for (int j = 0; j < kNumJoints; ++j) out << format_number(rad2deg(q(j))) << ',';
  for (int j = 0; j < 6; ++j) out << format_number(F(j)) << (j < 5 ? "," : "");
}

}  // namespace

int CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

int CsvTable::require(std::string_view name, std::string_view context) const {
  const int c = column(name);
  if (c < 0) throw InputError(std::string(context) + ": missing column \"" + std::string(name) + "\"");
  return c;
}

CsvTable parse_csv(std::string_view text, std::string_view context) {
  CsvTable t;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const auto line = trim(text.substr(start, end == std::string_view::npos ? end : end - start));
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split(line);
    if (t.header.empty()) {
      for (auto c : cells) t.header.emplace_back(c);
      continue;
    }
    if (cells.size() != t.header.size())
      throw InputError(std::string(context) + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " fields, header has " + std::to_string(t.header.size()));
    std::vector<double> row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double v = 0.0;
      const auto* first = cells[i].data();
      const auto* last = first + cells[i].size();
      if (!cells[i].empty() && *first == '+') ++first;
      const auto res = std::from_chars(first, last, v);
      if (cells[i].empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
        throw InputError(std::string(context) + ": line " + std::to_string(line_no) + ", column \"" +
                         t.header[i] + "\": not a number: \"" + std::string(cells[i]) + "\"");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw InputError(std::string(context) + ": empty file");
  return t;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
  if (!out) throw InputError("write failed: " + path);
}

std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

MarkerDataset parse_marker_dataset(std::string_view text, std::string_view context) {
  const CsvTable t = parse_csv(text, context);
  const int qc = t.require("q2_deg", context);
  MarkerDataset d;
  d.has_z = t.column("P1_z") >= 0;
  auto read_point = [&](const std::vector<double>& row, const std::string& name) {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    p.x() = row[static_cast<std::size_t>(t.require(name + "_x", context))];
    p.y() = row[static_cast<std::size_t>(t.require(name + "_y", context))];
    const int zc = t.column(name + "_z");
    if (d.has_z != (zc >= 0))
      throw InputError(std::string(context) + ": z columns must be given for all markers or none");
    if (zc >= 0) p.z() = row[static_cast<std::size_t>(zc)];
    return p;
  };
  int satellites = 0;
  while (t.column("P0" + std::to_string(satellites + 1) + "_x") >= 0) ++satellites;
  d.satellites.resize(static_cast<std::size_t>(satellites));
  for (const auto& row : t.rows) {
    d.q2_deg.push_back(row[static_cast<std::size_t>(qc)]);
    d.p1.push_back(read_point(row, "P1"));
    for (int k = 0; k < satellites; ++k)
      d.satellites[static_cast<std::size_t>(k)].push_back(read_point(row, "P0" + std::to_string(k + 1)));
  }
  return d;
}

std::string format_marker_dataset(const MarkerDataset& d) {
  std::ostringstream out;
  const int dims = d.has_z ? 3 : 2;
  const char* axes[] = {"_x", "_y", "_z"};
  out << "q2_deg";
  for (int c = 0; c < dims; ++c) out << ",P1" << axes[c];
  for (std::size_t k = 0; k < d.satellites.size(); ++k)
    for (int c = 0; c < dims; ++c) out << ",P0" << k + 1 << axes[c];
  out << '\n';
  for (std::size_t i = 0; i < d.rows(); ++i) {
    out << format_number(d.q2_deg[i]);
    for (int c = 0; c < dims; ++c) out << ',' << format_number(d.p1[i](c));
    for (const auto& s : d.satellites)
      for (int c = 0; c < dims; ++c) out << ',' << format_number(s[i](c));
    out << '\n';
  }
  return out.str();
}

std::vector<DeflectionRecord> parse_records(std::string_view text, std::string_view context) {
  const CsvTable t = parse_csv(text, context);
  const int mc = t.require("marker_id", context);
  const int rc = t.require("repeat", context);
  const int dx = t.require("dx_mm", context), dy = t.require("dy_mm", context), dz = t.require("dz_mm", context);
  std::vector<DeflectionRecord> out;
  for (const auto& row : t.rows) {
    const JointVector q = read_q(t, row, context);
    const Wrench F = read_wrench(t, row, context, false);
    const int repeat = static_cast<int>(row[static_cast<std::size_t>(rc)]);
    const double id = row[static_cast<std::size_t>(mc)];
    if (id < 1 || id != std::floor(id))
      throw InputError(std::string(context) + ": marker_id must be a positive integer");
    if (out.empty() || out.back().q != q || out.back().F != F || out.back().repeat != repeat) {
      DeflectionRecord r;
      r.q = q;
      r.F = F;
      r.repeat = repeat;
      out.push_back(std::move(r));
    }
    out.back().markers.push_back({static_cast<int>(id),
                                  Eigen::Vector3d(row[static_cast<std::size_t>(dx)], row[static_cast<std::size_t>(dy)],
                                                  row[static_cast<std::size_t>(dz)])});
  }
  return out;
}

std::string format_records(const std::vector<DeflectionRecord>& records) {
  std::ostringstream out;
  out << "q1_deg,q2_deg,q3_deg,q4_deg,q5_deg,q6_deg,Fx_N,Fy_N,Fz_N,Mx_Nmm,My_Nmm,Mz_Nmm,"
         "marker_id,dx_mm,dy_mm,dz_mm,repeat\n";
  for (const auto& r : records) {
    for (const auto& m : r.markers) {
      append_q_wrench(out, r.q, r.F);
      out << ',' << m.id << ',' << format_number(m.dp.x()) << ',' << format_number(m.dp.y()) << ','
          << format_number(m.dp.z()) << ',' << r.repeat << '\n';
    }
  }
  return out.str();
}

CalibrationPlan parse_plan(std::string_view text, std::string_view context) {
  const CsvTable t = parse_csv(text, context);
  const int bc = t.column("bucket");
  CalibrationPlan plan;
  std::vector<double> seen;
  for (const auto& row : t.rows) {
    PlanEntry e;
    e.q = read_q(t, row, context);
    e.F = read_wrench(t, row, context, true);
    if (bc >= 0) {
      e.bucket = static_cast<int>(row[static_cast<std::size_t>(bc)]) - 1;
      if (e.bucket < 0) throw InputError(std::string(context) + ": bucket ids are 1-based");
    } else {
      std::size_t b = 0;
      while (b < seen.size() && std::abs(seen[b] - e.q(1)) > deg2rad(0.1)) ++b;
      if (b == seen.size()) seen.push_back(e.q(1));
      e.bucket = static_cast<int>(b);
    }
    plan.entries.push_back(e);
  }
  return plan;
}

std::string format_plan(const CalibrationPlan& plan) {
  std::ostringstream out;
  out << "bucket,q1_deg,q2_deg,q3_deg,q4_deg,q5_deg,q6_deg,Fx_N,Fy_N,Fz_N,Mx_Nmm,My_Nmm,Mz_Nmm\n";
  for (const auto& e : plan.entries) {
    out << e.bucket + 1 << ',';
    append_q_wrench(out, e.q, e.F);
    out << '\n';
  }
  return out.str();
}

std::vector<TestPose> parse_load_cases(std::string_view text, std::string_view context) {
  const CsvTable t = parse_csv(text, context);
  std::vector<TestPose> out;
  for (const auto& row : t.rows) out.push_back({read_q(t, row, context), read_wrench(t, row, context, true)});
  return out;
}

}  // namespace elastocal
