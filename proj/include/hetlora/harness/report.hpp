#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hetlora/harness/records.hpp"

namespace hetlora::harness {

/// Every *.jsonl stream under `dir`, in file-name order.
/// Throws ArgumentError if the directory holds none.
std::vector<RunStream> load_streams(const std::filesystem::path& dir);

/// Markdown report over the selected-η rows of `rows`:
///  - final eval loss per arm (mean ± std over seeds), in the layout of a
///    method-comparison table;
///  - rounds to reach the target and the communicated-parameter ratio to
///    full fine-tuning at that point, with "X" for targets never reached.
std::string render_report(std::span<const ArmSummary> rows);

}  // namespace hetlora::harness
