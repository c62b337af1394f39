#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hetlora/baselines.hpp"
#include "hetlora/tasks.hpp"

namespace hetlora::harness {

/// A full experiment: one synthetic task family, the protocol settings
/// shared by all strategies, the strategies to compare, and the seeds.
///
/// Run (strategy, η, seed) uses the task generated with `task.seed = seed`,
/// so all strategies see the same data for a given seed.
struct ExperimentConfig {
    SyntheticTaskSpec task;
    ProtocolConfig protocol;
    std::vector<StrategyTag> strategies{StrategyTag::hetlora()};
    /// One entry: fixed η. Several: per-strategy grid search on mean final loss.
    std::vector<double> learning_rates{0.01};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    /// Loss targets for rounds-to-target, as fractions of the initial eval loss.
    std::vector<double> target_fractions{0.5};

    /// Throws ArgumentError describing the first problem.
    void validate() const;
};

/// The synthetic benchmark the acceptance criteria refer to.
ExperimentConfig default_config();

/// Parses the key = value format. `source` is used in diagnostics only.
/// Throws ConfigError carrying the 1-based line of the offending entry.
///
///     # comment
///     [task]
///     d = 64
///     client_complexity = 1, 8
///     [protocol]
///     strategies = hetlora, homlora:2, recon_svd
///
/// Unset keys keep their `default_config()` value.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");

/// Reads and parses a file; "default" returns `default_config()`.
ExperimentConfig load_config(const std::string& path_or_default);

/// Canonical text form; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const ExperimentConfig& cfg);

}  // namespace hetlora::harness
