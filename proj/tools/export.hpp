#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace awada::cli {

/// Reads every report and writes into `out`:
///   pr_curves.svg / pr_curves.csv   precision-recall curve per report and seed
///   seeds.svg / seeds.csv           per-seed foreground L1 against AP
///   l1_bars.svg / l1_bars.csv       mean foreground and background L1 per report
/// Output bytes depend only on the report contents and their order.
/// Returns the written paths; nothing is written for an empty list.
std::vector<std::filesystem::path> export_plots(const std::vector<std::filesystem::path>& reports,
                                                const std::filesystem::path& out);

}  // namespace awada::cli
