#include "hetlora/harness/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>

#include "hetlora/errors.hpp"

namespace hetlora::harness {

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string general(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// Mean parameters-to-target over seeds, or nullopt if any seed missed it.
std::optional<double> mean_params_to_target(const ArmSummary& row) {
    if (row.params_to_target.empty()) return std::nullopt;
    double s = 0.0;
    for (const auto& p : row.params_to_target) {
        if (!p) return std::nullopt;
        s += static_cast<double>(*p);
    }
    return s / static_cast<double>(row.params_to_target.size());
}

}  // namespace

std::vector<RunStream> load_streams(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ArgumentError(dir.string() + ": not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    if (files.empty()) throw ArgumentError(dir.string() + ": no .jsonl record streams found");
    std::sort(files.begin(), files.end());

    std::vector<RunStream> streams;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw ArgumentError(f.string() + ": cannot open");
        streams.push_back(read_jsonl(in, f.string()));
    }
    return streams;
}

std::string render_report(std::span<const ArmSummary> rows) {
    std::vector<const ArmSummary*> selected;
    for (const ArmSummary& r : rows)
        if (r.selected) selected.push_back(&r);
    if (selected.empty()) throw ArgumentError("nothing to report");

    std::optional<double> full_params;
    for (const ArmSummary* r : selected)
        if (r->strategy.kind == StrategyKind::full_ft) full_params = mean_params_to_target(*r);

    std::string out = "## Final eval loss\n\n";
    out += "| arm | strategy | lr | seeds | final loss (mean ± std) | best loss | final mean rank |\n";
    out += "|---|---|---|---|---|---|---|\n";
    for (const ArmSummary* r : selected) {
        out += "| " + r->label + " | " + r->strategy.to_string() + " | " + general(r->learning_rate) + " | " +
               std::to_string(r->complete) + "/" + std::to_string(r->seeds) + " | " + fixed(r->final_loss_mean) +
               " ± " + fixed(r->final_loss_std) + " | " + fixed(r->best_loss_mean) + " | " +
               (r->strategy.kind == StrategyKind::full_ft ? std::string("dense") : fixed(r->final_rank_mean, 2)) +
               " |\n";
    }

    const double fraction = selected.front()->target_fraction;
    out += "\n## Communication to reach " + general(fraction) + " × initial eval loss\n\n";
    out += "| arm | rounds to target (per seed) | params to target (mean) | ratio to full fine-tuning |\n";
    out += "|---|---|---|---|\n";
    for (const ArmSummary* r : selected) {
        std::string rounds;
        for (std::size_t i = 0; i < r->rounds_to_target.size(); ++i)
            rounds += (i ? ", " : "") + format_rounds(r->rounds_to_target[i]);
        const auto params = mean_params_to_target(*r);
        std::string ratio = "X";
        if (params) ratio = full_params && *full_params > 0.0 ? fixed(*params / *full_params, 4) : "n/a";
        out += "| " + r->label + " | " + rounds + " | " + (params ? general(*params) : std::string("X")) + " | " +
               ratio + " |\n";
    }
    out += "\nX: the target was not reached within the recorded rounds (on at least one seed).\n";
    return out;
}

}  // namespace hetlora::harness
