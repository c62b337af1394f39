#include "hetlora/harness/records.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include <json.hpp>

#include "hetlora/errors.hpp"

namespace hetlora::harness {

using json = nlohmann::ordered_json;

namespace {

std::string format_real(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double final_mean_rank(const RunResult& run) {
    if (run.final_ranks.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t r : run.final_ranks) s += static_cast<double>(r);
    return s / static_cast<double>(run.final_ranks.size());
}

}  // namespace

std::optional<std::size_t> rounds_to_target(double initial_eval_loss, std::span<const RoundRecord> rounds,
                                            double target) {
    if (!std::isfinite(target)) throw ArgumentError("target must be finite");
    if (initial_eval_loss <= target) return 0;
    for (const RoundRecord& r : rounds)
        if (r.eval_loss <= target) return r.round;
    return std::nullopt;
}

std::optional<std::size_t> rounds_to_target(const RunResult& run, double target) {
    return rounds_to_target(run.initial_eval_loss, run.rounds, target);
}

std::uint64_t params_through(const RunResult& run, std::size_t round) {
    if (round == 0) return 0;
    if (round > run.rounds.size()) throw ArgumentError("round beyond the recorded stream");
    return run.rounds[round - 1].params_cumulative;
}

void write_jsonl(std::ostream& out, const StreamMeta& meta, const RunResult& run) {
    json header = {{"type", "header"},
                   {"schema", kRecordSchema},
                   {"label", meta.label},
                   {"strategy", meta.strategy.to_string()},
                   {"learning_rate", meta.learning_rate},
                   {"seed", meta.seed},
                   {"initial_eval_loss", run.initial_eval_loss},
                   {"initial_ranks", run.initial_ranks},
                   {"config", meta.config_text}};
    out << header.dump() << '\n';

    for (const RoundRecord& r : run.rounds) {
        json participants = json::array();
        for (const ParticipantRecord& p : r.participants)
            participants.push_back({{"client", p.client},
                                    {"rank_in", p.rank_received},
                                    {"rank_out", p.rank_sent},
                                    {"pruned", p.pruned}});
        json line = {{"type", "round"},
                     {"round", r.round},
                     {"eval_loss", r.eval_loss},
                     {"global_rank", r.global_rank},
                     {"mean_client_rank", r.mean_client_rank},
                     {"params_down", r.params_down},
                     {"params_up", r.params_up},
                     {"params_cumulative", r.params_cumulative},
                     {"participants", std::move(participants)}};
        if (r.wall_ms) line["wall_ms"] = *r.wall_ms;
        out << line.dump() << '\n';
    }

    json end = {{"type", "end"},
                {"complete", run.complete},
                {"rounds", run.rounds.size()},
                {"final_eval_loss", run.final_eval_loss()},
                {"final_ranks", run.final_ranks}};
    if (!run.complete) end["error"] = run.error;
    out << end.dump() << '\n';
}

RunStream read_jsonl(std::istream& in, const std::string& source) {
    RunStream s;
    bool have_header = false, have_end = false;
    std::size_t line_no = 0;
    for (std::string text; std::getline(in, text);) {
        ++line_no;
        if (text.empty()) continue;
        auto fail = [&](const std::string& msg) {
            throw ArgumentError(source + ":" + std::to_string(line_no) + ": " + msg);
        };
        if (have_end) fail("content after the end record");
        try {
            const json j = json::parse(text);
            const std::string type = j.at("type").get<std::string>();
            if (type == "header") {
                if (have_header) fail("duplicate header");
                if (j.at("schema").get<std::string>() != kRecordSchema) fail("unsupported schema");
                s.meta.label = j.at("label").get<std::string>();
                s.meta.strategy = StrategyTag::parse(j.at("strategy").get<std::string>());
                s.meta.learning_rate = j.at("learning_rate").get<double>();
                s.meta.seed = j.at("seed").get<std::uint64_t>();
                s.meta.config_text = j.at("config").get<std::string>();
                s.run.strategy = s.meta.strategy;
                s.run.seed = s.meta.seed;
                s.run.initial_eval_loss = j.at("initial_eval_loss").get<double>();
                s.run.initial_ranks = j.at("initial_ranks").get<std::vector<std::size_t>>();
                have_header = true;
            } else if (type == "round") {
                if (!have_header) fail("round record before the header");
                RoundRecord r;
                r.round = j.at("round").get<std::size_t>();
                r.eval_loss = j.at("eval_loss").get<double>();
                r.global_rank = j.at("global_rank").get<std::size_t>();
                r.mean_client_rank = j.at("mean_client_rank").get<double>();
                r.params_down = j.at("params_down").get<std::uint64_t>();
                r.params_up = j.at("params_up").get<std::uint64_t>();
                r.params_cumulative = j.at("params_cumulative").get<std::uint64_t>();
                for (const json& p : j.at("participants"))
                    r.participants.push_back({p.at("client").get<std::size_t>(), p.at("rank_in").get<std::size_t>(),
                                              p.at("rank_out").get<std::size_t>(), p.at("pruned").get<bool>()});
                if (j.contains("wall_ms")) r.wall_ms = j.at("wall_ms").get<double>();
                if (r.round != s.run.rounds.size() + 1) fail("rounds out of order");
                s.run.rounds.push_back(std::move(r));
            } else if (type == "end") {
                if (!have_header) fail("end record before the header");
                s.run.complete = j.at("complete").get<bool>();
                s.run.final_ranks = j.at("final_ranks").get<std::vector<std::size_t>>();
                if (j.contains("error")) s.run.error = j.at("error").get<std::string>();
                have_end = true;
            } else {
                fail("unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            fail(std::string("malformed record: ") + e.what());
        }
    }
    if (!have_header) throw ArgumentError(source + ": no header record");
    if (!have_end) throw ArgumentError(source + ": stream has no end record (truncated?)");
    return s;
}

std::vector<ArmSummary> summarize(std::span<const RunStream> streams, double target_fraction) {
    std::vector<std::pair<std::string, double>> order;
    std::map<std::pair<std::string, double>, std::vector<const RunStream*>> groups;
    for (const RunStream& s : streams) {
        const auto key = std::make_pair(s.meta.label, s.meta.learning_rate);
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) order.push_back(key);
        it->second.push_back(&s);
    }

    std::vector<ArmSummary> rows;
    for (const auto& key : order) {
        const auto& members = groups.at(key);
        ArmSummary row;
        row.label = key.first;
        row.learning_rate = key.second;
        row.strategy = members.front()->meta.strategy;
        row.seeds = members.size();
        row.target_fraction = target_fraction;
        std::vector<double> initial, final, best, params, ranks;
        for (const RunStream* s : members) {
            const RunResult& run = s->run;
            if (run.complete) ++row.complete;
            initial.push_back(run.initial_eval_loss);
            final.push_back(run.final_eval_loss());
            double b = run.initial_eval_loss;
            for (const RoundRecord& r : run.rounds) b = std::min(b, r.eval_loss);
            best.push_back(b);
            params.push_back(run.rounds.empty() ? 0.0 : static_cast<double>(run.rounds.back().params_cumulative));
            ranks.push_back(final_mean_rank(run));
            const auto hit = rounds_to_target(run, target_fraction * run.initial_eval_loss);
            row.rounds_to_target.push_back(hit);
            row.params_to_target.push_back(hit ? std::optional<std::uint64_t>(params_through(run, *hit)) : std::nullopt);
        }
        row.initial_loss_mean = mean(initial);
        row.final_loss_mean = mean(final);
        row.final_loss_std = sample_std(final);
        row.best_loss_mean = mean(best);
        row.cumulative_params_mean = mean(params);
        row.final_rank_mean = mean(ranks);
        rows.push_back(std::move(row));
    }

    std::map<std::string, std::size_t> best_for_label;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto [it, inserted] = best_for_label.try_emplace(rows[i].label, i);
        if (!inserted && rows[i].final_loss_mean < rows[it->second].final_loss_mean) it->second = i;
    }
    for (const auto& [label, i] : best_for_label) rows[i].selected = true;
    return rows;
}

std::string format_rounds(const std::optional<std::size_t>& r) { return r ? std::to_string(*r) : "X"; }

void write_summary_csv(std::ostream& out, std::span<const ArmSummary> rows) {
    out << "label,strategy,learning_rate,selected,seeds,complete,initial_loss_mean,final_loss_mean,final_loss_std,"
           "best_loss_mean,cumulative_params_mean,final_rank_mean,target_fraction,rounds_to_target,params_to_target\n";
    for (const ArmSummary& r : rows) {
        std::string rounds, params;
        for (std::size_t i = 0; i < r.rounds_to_target.size(); ++i) {
            if (i) {
                rounds += ';';
                params += ';';
            }
            rounds += format_rounds(r.rounds_to_target[i]);
            params += r.params_to_target[i] ? std::to_string(*r.params_to_target[i]) : "X";
        }
        out << r.label << ',' << r.strategy.to_string() << ',' << format_real(r.learning_rate) << ','
            << (r.selected ? "true" : "false") << ',' << r.seeds << ',' << r.complete << ','
            << format_real(r.initial_loss_mean) << ',' << format_real(r.final_loss_mean) << ','
            << format_real(r.final_loss_std) << ',' << format_real(r.best_loss_mean) << ','
            << format_real(r.cumulative_params_mean) << ',' << format_real(r.final_rank_mean) << ','
            << format_real(r.target_fraction) << ',' << rounds << ',' << params << '\n';
    }
}

std::string stream_file_name(const StreamMeta& meta) {
    std::string label;
    for (char c : meta.label) {
        const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                          c == '-' || c == '_';
        label += keep ? c : '-';
    }
    return label + "_lr" + format_real(meta.learning_rate) + "_seed" + std::to_string(meta.seed) + ".jsonl";
}

}  // namespace hetlora::harness
