#include "hetlora/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "hetlora/errors.hpp"

namespace hetlora::harness {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// Value parsers throw std::invalid_argument with a bare message; the caller
// attaches source and line.
std::uint64_t parse_u64(std::string_view s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw std::invalid_argument("expected a non-negative integer, got '" + std::string(s) + "'");
    return v;
}

std::size_t parse_size(std::string_view s) { return static_cast<std::size_t>(parse_u64(s)); }

double parse_real(std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        throw std::invalid_argument("expected a finite number, got '" + std::string(s) + "'");
    return v;
}

bool parse_bool(std::string_view s) {
    if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "off" || s == "no" || s == "0") return false;
    throw std::invalid_argument("expected true or false, got '" + std::string(s) + "'");
}

template <class T, class Parse>
std::vector<T> parse_list(std::string_view s, Parse parse) {
    std::vector<T> out;
    for (std::string_view item : split_list(s)) out.push_back(parse(item));
    return out;
}

std::string format_real(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <class T, class Format>
std::string format_list(const std::vector<T>& v, Format format) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += format(v[i]);
    }
    return out;
}

std::string format_size(std::uint64_t v) { return std::to_string(v); }
std::string format_bool(bool v) { return v ? "true" : "false"; }

std::vector<std::size_t> sizes(std::string_view v) { return parse_list<std::size_t>(v, parse_size); }
std::string sizes_text(const std::vector<std::size_t>& v) { return format_list(v, format_size); }

struct Field {
    std::string section;
    std::string key;
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define HETLORA_FIELD(SECTION, KEY, MEMBER, PARSE, FORMAT)                                                          \
    Field {                                                                                                          \
        SECTION, KEY, [](ExperimentConfig& c, std::string_view v) { c.MEMBER = PARSE(v); },                         \
            [](const ExperimentConfig& c) { return std::string(FORMAT(c.MEMBER)); }                                  \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        return std::vector<Field>{
            HETLORA_FIELD("task", "d", task.d, parse_size, format_size),
            HETLORA_FIELD("task", "l", task.l, parse_size, format_size),
            HETLORA_FIELD("task", "true_rank", task.true_rank, parse_size, format_size),
            HETLORA_FIELD("task", "num_clients", task.num_clients, parse_size, format_size),
            HETLORA_FIELD("task", "samples_per_client", task.samples_per_client, sizes, sizes_text),
            HETLORA_FIELD("task", "noise_std", task.noise_std, parse_real, format_real),
            HETLORA_FIELD("task", "client_complexity", task.client_complexity, sizes, sizes_text),
            HETLORA_FIELD("task", "target_norm", task.target_norm, parse_real, format_real),
            HETLORA_FIELD("task", "spectrum_decay", task.spectrum_decay, parse_real, format_real),
            HETLORA_FIELD("task", "subspace", task.subspace, parse_input_subspace, to_string),
            HETLORA_FIELD("task", "eval_samples", task.eval_samples, parse_size, format_size),
            HETLORA_FIELD("task", "eval_noise", task.eval_noise, parse_bool, format_bool),

            Field{"protocol", "strategies",
                  [](ExperimentConfig& c, std::string_view v) {
                      c.strategies = parse_list<StrategyTag>(v, [](std::string_view s) { return StrategyTag::parse(s); });
                  },
                  [](const ExperimentConfig& c) {
                      return format_list(c.strategies, [](const StrategyTag& t) { return t.to_string(); });
                  }},
            HETLORA_FIELD("protocol", "r_min", protocol.r_min, parse_size, format_size),
            HETLORA_FIELD("protocol", "r_max", protocol.r_max, parse_size, format_size),
            HETLORA_FIELD("protocol", "alpha", protocol.alpha, parse_real, format_real),
            HETLORA_FIELD("protocol", "initial_ranks", protocol.initial_ranks, sizes, sizes_text),
            HETLORA_FIELD("protocol", "clients_per_round", protocol.clients_per_round, parse_size, format_size),
            HETLORA_FIELD("protocol", "rounds", protocol.rounds, parse_size, format_size),
            HETLORA_FIELD("protocol", "aggregation", protocol.aggregation, parse_aggregation, to_string),
            HETLORA_FIELD("protocol", "weight_by_size", protocol.weight_by_size, parse_bool, format_bool),
            HETLORA_FIELD("protocol", "init_std", protocol.init_std, parse_real, format_real),
            HETLORA_FIELD("protocol", "svd_split", protocol.svd_split, parse_svd_split, to_string),

            HETLORA_FIELD("local", "local_steps", protocol.local.local_steps, parse_size, format_size),
            HETLORA_FIELD("local", "batch_size", protocol.local.batch_size, parse_size, format_size),
            Field{"local", "learning_rates",
                  [](ExperimentConfig& c, std::string_view v) {
                      c.learning_rates = parse_list<double>(v, parse_real);
                  },
                  [](const ExperimentConfig& c) { return format_list(c.learning_rates, format_real); }},
            HETLORA_FIELD("local", "lambda", protocol.local.lambda, parse_real, format_real),
            HETLORA_FIELD("local", "gamma", protocol.local.gamma, parse_real, format_real),

            Field{"experiment", "seeds",
                  [](ExperimentConfig& c, std::string_view v) { c.seeds = parse_list<std::uint64_t>(v, parse_u64); },
                  [](const ExperimentConfig& c) { return format_list(c.seeds, format_size); }},
            Field{"experiment", "target_fractions",
                  [](ExperimentConfig& c, std::string_view v) {
                      c.target_fractions = parse_list<double>(v, parse_real);
                  },
                  [](const ExperimentConfig& c) { return format_list(c.target_fractions, format_real); }},
        };
    }();
    return table;
}

#undef HETLORA_FIELD

}  // namespace

void ExperimentConfig::validate() const {
    task.validate();
    if (strategies.empty()) throw ArgumentError("at least one strategy is required");
    if (learning_rates.empty()) throw ArgumentError("at least one learning rate is required");
    for (double lr : learning_rates)
        if (!(lr > 0.0)) throw ArgumentError("learning rates must be > 0");
    if (seeds.empty()) throw ArgumentError("at least one seed is required");
    for (double f : target_fractions)
        if (!(f > 0.0)) throw ArgumentError("target fractions must be > 0");
    for (const StrategyTag& s : strategies) {
        ProtocolConfig p = protocol;
        p.strategy = s;
        p.local.learning_rate = learning_rates.front();
        p.validate(task.d, task.l, task.num_clients);
    }
}

ExperimentConfig default_config() {
    ExperimentConfig c;
    c.strategies = {StrategyTag::hetlora(), StrategyTag::homlora(2), StrategyTag::homlora(16),
                    StrategyTag::recon_svd(), StrategyTag::full_ft()};
    c.task.subspace = InputSubspace::target;
    c.task.spectrum_decay = 0.3;
    c.task.target_norm = 1.0;
    c.protocol.init_std = 0.1;
    c.protocol.local.lambda = 0.1;
    c.protocol.local.gamma = 0.99;
    c.learning_rates = {0.1, 0.01, 0.001, 0.0001};
    return c;
}

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
    ExperimentConfig cfg = default_config();
    std::map<std::string, const Field*, std::less<>> lookup;
    for (const Field& f : fields()) lookup.emplace(f.section + "." + f.key, &f);

    std::string section;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    for (std::string raw; std::getline(in, raw);) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(source, line_no, "unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section != "task" && section != "protocol" && section != "local" && section != "experiment")
                throw ConfigError(source, line_no, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(source, line_no, "expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(source, line_no, "missing key before '='");
        if (section.empty()) throw ConfigError(source, line_no, "key '" + key + "' appears before any [section]");

        const std::string full = section + "." + key;
        const auto it = lookup.find(full);
        if (it == lookup.end()) throw ConfigError(source, line_no, "unknown key '" + key + "' in [" + section + "]");
        if (!seen.insert(full).second) throw ConfigError(source, line_no, "duplicate key '" + key + "'");
        try {
            it->second->set(cfg, value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(source, line_no, key + ": " + e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(source, 0, e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path_or_default) {
    if (path_or_default == "default") return default_config();
    std::ifstream in(path_or_default, std::ios::binary);
    if (!in) throw ConfigError(path_or_default, 0, "cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path_or_default);
}

std::string to_config_text(const ExperimentConfig& cfg) {
    std::string out;
    std::string section;
    for (const Field& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out += "\n";
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

}  // namespace hetlora::harness
