#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetlora/baselines.hpp"

namespace hetlora::harness {

inline constexpr const char* kRecordSchema = "hetlora.records/1";
inline constexpr const char* kSummarySchema = "hetlora.summary/1";

/// Identifies one record stream: an arm (strategy plus variant), a learning
/// rate and a seed.
struct StreamMeta {
    std::string label;
    StrategyTag strategy;
    double learning_rate = 0.0;
    std::uint64_t seed = 0;
    std::string config_text; ///< canonical config the stream was produced from
};

/// First round whose eval loss is ≤ target; 0 if the initial loss already
/// is; nullopt (the "X" case) if never reached.
std::optional<std::size_t> rounds_to_target(double initial_eval_loss, std::span<const RoundRecord> rounds,
                                            double target);
std::optional<std::size_t> rounds_to_target(const RunResult& run, double target);

/// Cumulative parameters communicated up to and including `round` (0 → 0).
std::uint64_t params_through(const RunResult& run, std::size_t round);

/// One header line, one line per round, one end line. Byte-stable for a
/// given (meta, run) unless wall-clock timing was recorded.
void write_jsonl(std::ostream& out, const StreamMeta& meta, const RunResult& run);

struct RunStream {
    StreamMeta meta;
    RunResult run;
};

/// Inverse of `write_jsonl`. Throws ArgumentError naming the bad line.
RunStream read_jsonl(std::istream& in, const std::string& source = "<jsonl>");

/// Aggregate over seeds for one (label, η).
struct ArmSummary {
    std::string label;
    StrategyTag strategy;
    double learning_rate = 0.0;
    bool selected = false; ///< the η picked by grid search for this label
    std::size_t seeds = 0;
    std::size_t complete = 0;
    double initial_loss_mean = 0.0;
    double final_loss_mean = 0.0;
    double final_loss_std = 0.0; ///< sample standard deviation (0 for one seed)
    double best_loss_mean = 0.0;
    double cumulative_params_mean = 0.0;
    double final_rank_mean = 0.0; ///< mean over seeds of the mean client rank; 0 for dense
    double target_fraction = 0.0;
    std::vector<std::optional<std::size_t>> rounds_to_target; ///< per seed
    std::vector<std::optional<std::uint64_t>> params_to_target; ///< per seed
};

/// Summaries for every (label, η) group, in first-seen order, with the η
/// of lowest mean final loss marked `selected` per label.
std::vector<ArmSummary> summarize(std::span<const RunStream> streams, double target_fraction);

void write_summary_csv(std::ostream& out, std::span<const ArmSummary> rows);

/// "12" or "X".
std::string format_rounds(const std::optional<std::size_t>& r);

/// File name for a stream, e.g. "homlora-2_lr0.01_seed1.jsonl".
std::string stream_file_name(const StreamMeta& meta);

}  // namespace hetlora::harness
