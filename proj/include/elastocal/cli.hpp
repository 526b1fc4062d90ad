#pragma once

// Command-line front end. Every run writes its artifacts plus manifest.json
// (inputs with SHA-256 digests, options, seed, outputs) into --out.

#include "elastocal/compensator.hpp"

#include <span>
#include <string>
#include <vector>

namespace elastocal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  ///< usage or input error
inline constexpr int kExitNumerical = 2;

int run(int argc, const char* const* argv);

/// Long-format (x, series, y) plot data.
std::string eta_plot_csv(const EtaTable& table);

/// Equivalent joint-2 compliance against q2 (deg) next to the bare joint
/// compliance, both in 1e-9 rad/(N*mm).
std::string k2_plot_csv(const CompensatorParams& params, double K0, std::span<const double> q2_grid);

/// Hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace elastocal::cli
