// Command-line front end: run, sweep, report.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <omp.h>

#include "hetlora/errors.hpp"
#include "hetlora/harness/config.hpp"
#include "hetlora/harness/experiment.hpp"
#include "hetlora/harness/records.hpp"
#include "hetlora/harness/report.hpp"

namespace fs = std::filesystem;
using namespace hetlora;
using namespace hetlora::harness;

namespace {

constexpr const char* kOutDirEnv = "HETLORA_OUT_DIR";

struct CommonArgs {
    std::string config = "default";
    std::vector<std::uint64_t> seeds;
    std::string out;
    int threads = 0;
    bool timing = false;
    double target_fraction = -1.0;
};

void add_common(CLI::App* app, CommonArgs& a) {
    app->add_option("--config", a.config, "config file, or 'default' for the built-in benchmark")
        ->capture_default_str();
    app->add_option("--seed", a.seeds, "seed(s), comma separated; overrides the config")->delimiter(',');
    app->add_option("--out", a.out, std::string("output directory (default: $") + kOutDirEnv + " or ./hetlora_out)");
    app->add_option("--threads", a.threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);
    app->add_flag("--timing", a.timing, "record per-round wall-clock (makes output non-reproducible)");
    app->add_option("--target-fraction", a.target_fraction, "report target as a fraction of the initial eval loss");
}

fs::path output_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
    return "hetlora_out";
}

ExperimentConfig prepare_config(const CommonArgs& a) {
    ExperimentConfig cfg = load_config(a.config);
    if (!a.seeds.empty()) cfg.seeds = a.seeds;
    if (a.target_fraction > 0.0) cfg.target_fractions = {a.target_fraction};
    if (a.threads > 0) omp_set_num_threads(a.threads);
    return cfg;
}

void execute(const ExperimentConfig& cfg, const std::vector<Arm>& arms, const CommonArgs& a) {
    const fs::path out = output_dir(a.out);
    const fs::path runs = out / "runs";
    fs::create_directories(runs);
    {
        std::ofstream cfg_out(out / "config.cfg", std::ios::binary);
        cfg_out << to_config_text(cfg);
    }

    ExperimentOptions options;
    options.run.record_wall_clock = a.timing;
    options.on_stream = [&](const RunStream& s) {
        std::ofstream f(runs / stream_file_name(s.meta), std::ios::binary);
        write_jsonl(f, s.meta, s.run);
        std::fprintf(stderr, "%-24s lr=%-8g seed=%-4llu final=%.6f%s\n", s.meta.label.c_str(), s.meta.learning_rate,
                     static_cast<unsigned long long>(s.meta.seed), s.run.final_eval_loss(),
                     s.run.complete ? "" : "  (diverged)");
    };
    const std::vector<RunStream> streams = run_experiment(cfg, arms, options);

    const double fraction = cfg.target_fractions.empty() ? 0.5 : cfg.target_fractions.front();
    const std::vector<ArmSummary> rows = summarize(streams, fraction);
    {
        std::ofstream csv(out / "summary.csv", std::ios::binary);
        write_summary_csv(csv, rows);
    }
    std::cout << render_report(rows);
    std::cout << "\nwrote " << streams.size() << " record streams to " << runs.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated heterogeneous-rank LoRA simulator"};
    app.require_subcommand(1);

    CommonArgs run_args;
    std::vector<std::string> strategies;
    CLI::App* run = app.add_subcommand("run", "run every configured strategy over every seed");
    add_common(run, run_args);
    run->add_option("--strategy", strategies, "strategy tag(s): hetlora, homlora:R, full_ft, recon_svd")
        ->delimiter(',');

    CommonArgs sweep_args;
    bool gamma_ablation = false, sweep_strategies = false;
    std::vector<std::size_t> sweep_ranks;
    CLI::App* sweep = app.add_subcommand("sweep", "grid over gamma, HomLoRA ranks and/or strategies");
    add_common(sweep, sweep_args);
    sweep->add_flag("--gamma-ablation", gamma_ablation, "HetLoRA at gamma in {1, 0.99, 0.95, 0.85}");
    sweep->add_option("--ranks", sweep_ranks, "HomLoRA ranks, comma separated")->delimiter(',');
    sweep->add_flag("--strategies", sweep_strategies, "every strategy listed in the config");

    std::string report_in, report_out;
    double report_fraction = 0.5;
    CLI::App* report = app.add_subcommand("report", "summarise existing record streams");
    report->add_option("--in", report_in, "directory of .jsonl streams (default: <out>/runs)");
    report->add_option("--out", report_out, "also write the markdown report to this file");
    report->add_option("--target-fraction", report_fraction, "target as a fraction of the initial eval loss")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            ExperimentConfig cfg = prepare_config(run_args);
            if (!strategies.empty()) {
                cfg.strategies.clear();
                for (const auto& s : strategies) cfg.strategies.push_back(StrategyTag::parse(s));
            }
            execute(cfg, strategy_arms(cfg), run_args);
        } else if (sweep->parsed()) {
            const ExperimentConfig cfg = prepare_config(sweep_args);
            std::vector<Arm> arms;
            if (gamma_ablation) {
                auto g = gamma_ablation_arms(cfg, kGammaAblation);
                arms.insert(arms.end(), g.begin(), g.end());
            }
            if (!sweep_ranks.empty()) {
                auto r = rank_arms(cfg, sweep_ranks);
                arms.insert(arms.end(), r.begin(), r.end());
            }
            if (sweep_strategies) {
                auto s = strategy_arms(cfg);
                arms.insert(arms.end(), s.begin(), s.end());
            }
            if (arms.empty()) throw ArgumentError("sweep needs --gamma-ablation, --ranks and/or --strategies");
            execute(cfg, arms, sweep_args);
        } else if (report->parsed()) {
            const fs::path in = report_in.empty() ? output_dir("") / "runs" : fs::path(report_in);
            const std::vector<RunStream> streams = load_streams(in);
            const std::string text = render_report(summarize(streams, report_fraction));
            std::cout << text;
            if (!report_out.empty()) {
                std::ofstream f(report_out, std::ios::binary);
                f << text;
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
