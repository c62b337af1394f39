#include "hetlora/baselines.hpp"

#include <charconv>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>

#include "hetlora/errors.hpp"

namespace hetlora {

namespace {

enum StreamTag : std::uint64_t { kInit = 201, kClientStream = 202, kProtocolRanks = 203 };

using Clock = std::chrono::steady_clock;

// Runs body(i) for i in [0, n) across OpenMP threads. Each index owns its own
// state, so the result does not depend on the thread count. The first failure
// by index is rethrown after the barrier.
template <class Body>
void parallel_for_each(std::size_t n, Body&& body) {
    std::vector<std::exception_ptr> errors(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double mean_of(std::span<const std::size_t> v) {
    if (v.empty()) return 0.0;
    return static_cast<double>(std::accumulate(v.begin(), v.end(), std::size_t{0})) / static_cast<double>(v.size());
}

std::vector<std::size_t> initial_ranks_for(const ProtocolConfig& cfg, std::size_t num_clients, std::uint64_t seed) {
    if (cfg.strategy.kind == StrategyKind::homlora) return std::vector<std::size_t>(num_clients, cfg.strategy.rank);
    if (!cfg.initial_ranks.empty()) return cfg.initial_ranks;
    return assign_ranks(num_clients, cfg.r_min, cfg.r_max, cfg.alpha, linalg::derive_seed(seed, {kProtocolRanks}))
        .ranks;
}

std::vector<ClientState> make_clients(const SyntheticTask& task, std::span<const std::size_t> ranks,
                                      std::uint64_t seed) {
    std::vector<ClientState> clients;
    clients.reserve(task.clients.size());
    for (std::size_t k = 0; k < task.clients.size(); ++k) {
        const std::size_t rank = ranks.empty() ? 1 : ranks[k];
        clients.push_back(
            ClientState{k, rank, std::cref(task.clients[k]), linalg::Rng(client_stream_seed(seed, k))});
    }
    return clients;
}

// Per-round bookkeeping shared by every strategy.
class Recorder {
public:
    Recorder(RunResult& out, const RunOptions& options) : out_(out), options_(options) {}

    void begin_round() { start_ = Clock::now(); }

    void end_round(RoundRecord rec) {
        cumulative_ += rec.params_down + rec.params_up;
        rec.params_cumulative = cumulative_;
        if (options_.record_wall_clock)
            rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
        out_.rounds.push_back(std::move(rec));
    }

private:
    RunResult& out_;
    const RunOptions& options_;
    Clock::time_point start_{};
    std::uint64_t cumulative_ = 0;
};

// Divergence ends the run early but keeps the rounds recorded so far.
template <class Loop>
void guarded(RunResult& out, Loop&& loop) {
    try {
        loop();
    } catch (const TrainingError& e) {
        out.complete = false;
        out.error = e.what();
    } catch (const NumericError& e) {
        out.complete = false;
        out.error = e.what();
    }
}

RunResult run_lora(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                   const RunOptions& options) {
    const std::size_t d = task.spec.d, l = task.spec.l, M = task.clients.size();
    const std::vector<std::size_t> ranks = initial_ranks_for(cfg, M, seed);
    const std::size_t top = *std::max_element(ranks.begin(), ranks.end());

    ServerState server(initial_global_pair(d, l, top, cfg.init_std, seed), ranks, cfg.aggregation, cfg.weight_by_size);
    std::vector<ClientState> clients = make_clients(task, ranks, seed);

    const DatasetMoments eval = dataset_moments(task.eval);
    RunResult out;
    out.strategy = cfg.strategy;
    out.seed = seed;
    out.initial_ranks = ranks;
    out.initial_eval_loss = moment_loss(server.global_pair(), task.base, eval);
    Recorder recorder(out, options);

    guarded(out, [&] {
        for (std::size_t t = 0; t < cfg.rounds; ++t) {
            recorder.begin_round();
            const std::vector<std::size_t> selected = select_clients(M, cfg.clients_per_round, t, seed);
            const std::size_t m = selected.size();

            std::vector<LoraPair> received;
            received.reserve(m);
            for (std::size_t id : selected) received.push_back(distribute(server, clients[id].current_rank));

            std::vector<std::optional<LocalTrainResult>> results(m);
            parallel_for_each(m, [&](std::size_t i) {
                results[i].emplace(local_train(clients[selected[i]], received[i], task.base, cfg.local));
            });

            RoundRecord rec;
            rec.round = t + 1;
            std::vector<ClientUpdate> updates;
            updates.reserve(m);
            for (std::size_t i = 0; i < m; ++i) {
                LocalTrainResult& r = *results[i];
                rec.participants.push_back({selected[i], received[i].rank(), r.new_rank, r.pruned});
                rec.params_down += lora_param_count(received[i].rank(), d, l);
                rec.params_up += lora_param_count(r.new_rank, d, l);
                updates.push_back({selected[i], std::move(r.pair), task.clients[selected[i]].size()});
            }
            server = aggregate(std::move(server), updates);

            rec.eval_loss = moment_loss(server.global_pair(), task.base, eval);
            rec.global_rank = server.global_rank();
            rec.mean_client_rank = mean_of(server.client_ranks());
            recorder.end_round(std::move(rec));
        }
    });
    out.final_ranks.assign(server.client_ranks().begin(), server.client_ranks().end());
    return out;
}

Matrix dense_local_train(ClientState& state, const Matrix& received, const FrozenBaseModel& base,
                         const LocalTrainConfig& cfg) {
    const ClientDataset& data = state.dataset.get();
    const std::size_t batch = std::min(cfg.batch_size, data.size());
    Matrix delta = received;
    for (std::size_t step = 0; step < cfg.local_steps; ++step) {
        const auto idx = state.rng.sample_without_replacement(data.size(), batch);
        try {
            delta.add_scaled(dense_grad(delta, base, data.select(idx)), -cfg.learning_rate);
        } catch (const NumericError& e) {
            throw TrainingError("client " + std::to_string(state.id) + " diverged: " + e.what(), step);
        }
    }
    return delta;
}

// Uniform average of dense matrices, accumulated in list order.
Matrix dense_average(std::span<const Matrix> mats) {
    Matrix avg = Matrix::zeros(mats.front().rows(), mats.front().cols());
    const double w = 1.0 / static_cast<double>(mats.size());
    for (const Matrix& m : mats) avg.add_scaled(m, w);
    return avg;
}

RunResult run_dense(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                    const RunOptions& options) {
    const std::size_t d = task.spec.d, l = task.spec.l, M = task.clients.size();
    std::vector<ClientState> clients = make_clients(task, {}, seed);
    Matrix global = Matrix::zeros(d, l);

    const DatasetMoments eval = dataset_moments(task.eval);
    RunResult out;
    out.strategy = cfg.strategy;
    out.seed = seed;
    out.initial_eval_loss = moment_loss(global, task.base, eval);
    Recorder recorder(out, options);

    guarded(out, [&] {
        for (std::size_t t = 0; t < cfg.rounds; ++t) {
            recorder.begin_round();
            const std::vector<std::size_t> selected = select_clients(M, cfg.clients_per_round, t, seed);
            const std::size_t m = selected.size();

            std::vector<std::optional<Matrix>> results(m);
            parallel_for_each(m, [&](std::size_t i) {
                results[i].emplace(dense_local_train(clients[selected[i]], global, task.base, cfg.local));
            });

            RoundRecord rec;
            rec.round = t + 1;
            std::vector<Matrix> deltas;
            deltas.reserve(m);
            for (std::size_t i = 0; i < m; ++i) {
                rec.participants.push_back({selected[i], 0, 0, false});
                rec.params_down += dense_param_count(d, l);
                rec.params_up += dense_param_count(d, l);
                deltas.push_back(std::move(*results[i]));
            }
            global = dense_average(deltas);

            rec.eval_loss = moment_loss(global, task.base, eval);
            recorder.end_round(std::move(rec));
        }
    });
    return out;
}

RunResult run_recon(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                    const RunOptions& options) {
    const std::size_t d = task.spec.d, l = task.spec.l, M = task.clients.size();
    const std::vector<std::size_t> ranks = initial_ranks_for(cfg, M, seed);
    const std::size_t top = *std::max_element(ranks.begin(), ranks.end());
    if (top > std::min(d, l)) throw ArgumentError("recon_svd needs client ranks <= min(d, l)");

    LocalTrainConfig local = cfg.local;
    local.lambda = 0.0;
    local.gamma = 1.0;

    // The first round hands out the factored initial pair: refactoring its
    // product (which is zero) would give an all-zero pair that SGD cannot move.
    const LoraPair init = initial_global_pair(d, l, top, cfg.init_std, seed);
    Matrix global = reconstruct(init);
    std::vector<ClientState> clients = make_clients(task, ranks, seed);

    const DatasetMoments eval = dataset_moments(task.eval);
    RunResult out;
    out.strategy = cfg.strategy;
    out.seed = seed;
    out.initial_ranks = ranks;
    out.final_ranks = ranks;
    out.initial_eval_loss = moment_loss(global, task.base, eval);
    Recorder recorder(out, options);

    guarded(out, [&] {
        for (std::size_t t = 0; t < cfg.rounds; ++t) {
            recorder.begin_round();
            const std::vector<std::size_t> selected = select_clients(M, cfg.clients_per_round, t, seed);
            const std::size_t m = selected.size();

            std::optional<linalg::SvdResult> factors;
            if (t > 0) factors = linalg::svd(global, top);

            std::vector<std::optional<LocalTrainResult>> results(m);
            parallel_for_each(m, [&](std::size_t i) {
                ClientState& c = clients[selected[i]];
                const LoraPair received =
                    factors ? refactor_svd(*factors, c.current_rank, cfg.svd_split) : truncate(init, c.current_rank);
                results[i].emplace(local_train(c, received, task.base, local));
            });

            RoundRecord rec;
            rec.round = t + 1;
            std::vector<Matrix> deltas;
            deltas.reserve(m);
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t r = results[i]->pair.rank();
                rec.participants.push_back({selected[i], r, r, false});
                rec.params_down += lora_param_count(r, d, l);
                rec.params_up += lora_param_count(r, d, l);
                deltas.push_back(reconstruct(results[i]->pair));
            }
            global = dense_average(deltas);

            rec.eval_loss = moment_loss(global, task.base, eval);
            rec.global_rank = top;
            rec.mean_client_rank = mean_of(ranks);
            recorder.end_round(std::move(rec));
        }
    });
    return out;
}

}  // namespace

StrategyTag StrategyTag::parse(std::string_view text) {
    if (text == "hetlora") return hetlora();
    if (text == "full_ft" || text == "full") return full_ft();
    if (text == "recon_svd") return recon_svd();
    constexpr std::string_view prefix = "homlora";
    if (text.starts_with(prefix)) {
        std::string_view rest = text.substr(prefix.size());
        if (rest.size() >= 2 && rest.front() == '(' && rest.back() == ')') {
            rest = rest.substr(1, rest.size() - 2);
        } else if (!rest.empty() && rest.front() == ':') {
            rest.remove_prefix(1);
        } else {
            rest = {};
        }
        std::size_t r = 0;
        const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), r);
        if (!rest.empty() && ec == std::errc{} && ptr == rest.data() + rest.size() && r > 0) return homlora(r);
    }
    throw ArgumentError("unknown strategy '" + std::string(text) +
                        "' (expected hetlora, homlora:R, full_ft or recon_svd)");
}

std::string StrategyTag::to_string() const {
    switch (kind) {
    case StrategyKind::hetlora: return "hetlora";
    case StrategyKind::homlora: return "homlora:" + std::to_string(rank);
    case StrategyKind::full_ft: return "full_ft";
    case StrategyKind::recon_svd: return "recon_svd";
    }
    return "unknown";
}

void ProtocolConfig::validate(std::size_t d, std::size_t l, std::size_t num_clients) const {
    local.validate();
    if (clients_per_round == 0 || clients_per_round > num_clients)
        throw ArgumentError("clients_per_round must lie in [1, num_clients]");
    if (!(init_std >= 0.0) || !std::isfinite(init_std)) throw ArgumentError("init_std must be >= 0");
    if (strategy.kind == StrategyKind::full_ft) return;
    if (strategy.kind == StrategyKind::homlora) {
        if (strategy.rank == 0 || strategy.rank > std::min(d, l))
            throw ArgumentError("homlora rank must lie in [1, min(d, l)]");
        return;
    }
    if (!initial_ranks.empty()) {
        if (initial_ranks.size() != num_clients) throw ArgumentError("initial_ranks needs one entry per client");
        for (std::size_t r : initial_ranks)
            if (r == 0) throw ArgumentError("initial ranks must be >= 1");
    } else {
        rank_pmf(r_min, r_max, alpha);
    }
    if (strategy.kind == StrategyKind::recon_svd) {
        const std::size_t top = initial_ranks.empty() ? r_max : *std::max_element(initial_ranks.begin(), initial_ranks.end());
        if (top > std::min(d, l)) throw ArgumentError("recon_svd ranks must be <= min(d, l)");
    }
}

LoraPair initial_global_pair(std::size_t d, std::size_t l, std::size_t rank, double init_std, std::uint64_t seed) {
    linalg::Rng rng(linalg::derive_seed(seed, {kInit}));
    return LoraPair(Matrix::zeros(d, rank), rng.gaussian(rank, l, init_std));
}

std::uint64_t client_stream_seed(std::uint64_t seed, std::size_t client) {
    return linalg::derive_seed(seed, {kClientStream, client});
}

double lora_param_fraction(std::size_t rank, std::size_t d, std::size_t l) {
    return static_cast<double>(lora_param_count(rank, d, l)) / static_cast<double>(dense_param_count(d, l));
}

double RunResult::final_eval_loss() const { return rounds.empty() ? initial_eval_loss : rounds.back().eval_loss; }

ProtocolConfig homlora_config(const ProtocolConfig& cfg, std::size_t rank) {
    ProtocolConfig c = cfg;
    c.strategy = StrategyTag::homlora(rank);
    c.r_min = c.r_max = rank;
    c.initial_ranks.clear();
    c.local.lambda = 0.0;
    c.local.gamma = 1.0;
    c.aggregation = Aggregation::simple;
    return c;
}

RunResult run_protocol(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                       const RunOptions& options) {
    switch (cfg.strategy.kind) {
    case StrategyKind::hetlora: return run_hetlora(task, cfg, seed, options);
    case StrategyKind::homlora: return run_homlora(task, cfg.strategy.rank, cfg, seed, options);
    case StrategyKind::full_ft: return run_full_ft(task, cfg, seed, options);
    case StrategyKind::recon_svd: return run_recon_svd(task, cfg, seed, options);
    }
    throw ArgumentError("unknown strategy");
}

RunResult run_hetlora(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                      const RunOptions& options) {
    ProtocolConfig c = cfg;
    c.strategy = StrategyTag::hetlora();
    c.validate(task.spec.d, task.spec.l, task.clients.size());
    return run_lora(task, c, seed, options);
}

RunResult run_homlora(const SyntheticTask& task, std::size_t rank, const ProtocolConfig& cfg, std::uint64_t seed,
                      const RunOptions& options) {
    const ProtocolConfig c = homlora_config(cfg, rank);
    c.validate(task.spec.d, task.spec.l, task.clients.size());
    return run_lora(task, c, seed, options);
}

RunResult run_full_ft(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                      const RunOptions& options) {
    ProtocolConfig c = cfg;
    c.strategy = StrategyTag::full_ft();
    c.validate(task.spec.d, task.spec.l, task.clients.size());
    return run_dense(task, c, seed, options);
}

RunResult run_recon_svd(const SyntheticTask& task, const ProtocolConfig& cfg, std::uint64_t seed,
                        const RunOptions& options) {
    ProtocolConfig c = cfg;
    c.strategy = StrategyTag::recon_svd();
    c.validate(task.spec.d, task.spec.l, task.clients.size());
    return run_recon(task, c, seed, options);
}

}  // namespace hetlora
