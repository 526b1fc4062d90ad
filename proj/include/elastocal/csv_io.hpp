#pragma once

// Plain comma-separated files with a header row. Angles are degrees in
// every file; lines starting with '#' are comments.

#include "elastocal/doe.hpp"
#include "elastocal/elasto_ident.hpp"
#include "elastocal/geom_ident.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace elastocal {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Column index by name, -1 when absent.
  int column(std::string_view name) const;
  /// Column index by name; throws InputError naming the file context.
  int require(std::string_view name, std::string_view context) const;
};

CsvTable parse_csv(std::string_view text, std::string_view context = "csv");
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

/// Shortest round-trip decimal representation.
std::string format_number(double v);

/// q2_deg,P1_x,P1_y[,P1_z],P01_x,P01_y[,P01_z],P02_x,...
MarkerDataset parse_marker_dataset(std::string_view text, std::string_view context = "marker data");
std::string format_marker_dataset(const MarkerDataset& dataset);

/// q1_deg..q6_deg,Fx_N,Fy_N,Fz_N,Mx_Nmm,My_Nmm,Mz_Nmm,marker_id,dx_mm,dy_mm,dz_mm,repeat
/// One row per marker; consecutive rows sharing (q, F, repeat) form a record.
std::vector<DeflectionRecord> parse_records(std::string_view text, std::string_view context = "records");
std::string format_records(const std::vector<DeflectionRecord>& records);

/// bucket,q1_deg..q6_deg,Fx_N,Fy_N,Fz_N[,Mx_Nmm,My_Nmm,Mz_Nmm] (bucket 1-based).
/// A missing bucket column assigns buckets by distinct q2 in order of appearance.
CalibrationPlan parse_plan(std::string_view text, std::string_view context = "plan");
std::string format_plan(const CalibrationPlan& plan);

/// q1_deg..q6_deg,Fx_N,Fy_N,Fz_N[,Mx_Nmm,My_Nmm,Mz_Nmm]; used by `predict`.
std::vector<TestPose> parse_load_cases(std::string_view text, std::string_view context = "load cases");

}  // namespace elastocal
