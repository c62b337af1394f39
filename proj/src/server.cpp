#include "hetlora/server.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetlora/errors.hpp"
#include "hetlora/linalg/rng.hpp"

namespace hetlora {

namespace {

enum StreamTag : std::uint64_t { kRanks = 101, kSelect = 102 };

std::size_t max_rank(std::span<const std::size_t> ranks) {
    return ranks.empty() ? 0 : *std::max_element(ranks.begin(), ranks.end());
}

}  // namespace

Aggregation parse_aggregation(std::string_view name) {
    if (name == "simple") return Aggregation::simple;
    if (name == "sparsity_weighted" || name == "sparsity") return Aggregation::sparsity_weighted;
    throw ArgumentError("unknown aggregation '" + std::string(name) + "' (expected simple or sparsity_weighted)");
}

std::string_view to_string(Aggregation a) { return a == Aggregation::simple ? "simple" : "sparsity_weighted"; }

std::vector<double> rank_pmf(std::size_t r_min, std::size_t r_max, double alpha) {
    if (r_min < 1 || r_min > r_max) {
        throw ArgumentError("rank range [" + std::to_string(r_min) + ", " + std::to_string(r_max) + "] is invalid");
    }
    if (!std::isfinite(alpha)) throw ArgumentError("alpha must be finite");
    std::vector<double> pmf;
    double total = 0.0;
    for (std::size_t r = r_min; r <= r_max; ++r) {
        pmf.push_back(std::pow(static_cast<double>(r), alpha - 1.0));
        total += pmf.back();
    }
    for (double& p : pmf) p /= total;
    return pmf;
}

RankAssignment assign_ranks(std::size_t num_clients, std::size_t r_min, std::size_t r_max, double alpha,
                            std::uint64_t seed) {
    const std::vector<double> pmf = rank_pmf(r_min, r_max, alpha);
    linalg::Rng rng(linalg::derive_seed(seed, {kRanks}));
    RankAssignment out{r_min, r_max, {}};
    out.ranks.reserve(num_clients);
    for (std::size_t k = 0; k < num_clients; ++k) out.ranks.push_back(r_min + rng.sample_discrete(pmf));
    return out;
}

std::vector<std::size_t> select_clients(std::size_t num_clients, std::size_t m, std::size_t round,
                                        std::uint64_t seed) {
    if (m == 0 || m > num_clients) {
        throw ArgumentError("cannot select " + std::to_string(m) + " of " + std::to_string(num_clients) + " clients");
    }
    linalg::Rng rng(linalg::derive_seed(seed, {kSelect, round}));
    std::vector<std::size_t> ids = rng.sample_without_replacement(num_clients, m);
    std::sort(ids.begin(), ids.end());
    return ids;
}

ServerState::ServerState(const LoraPair& initial, std::vector<std::size_t> client_ranks, Aggregation strategy,
                         bool weight_by_size)
    : global_(initial), strategy_(strategy), weight_by_size_(weight_by_size), registry_(std::move(client_ranks)) {
    if (registry_.empty()) throw ArgumentError("server needs at least one client");
    const std::size_t top = max_rank(registry_);
    if (top == 0) throw ArgumentError("client ranks must be >= 1");
    if (top > initial.rank()) {
        throw ArgumentError("initial global rank " + std::to_string(initial.rank()) + " is below the largest client rank " +
                            std::to_string(top));
    }
    global_ = truncate(initial, top);
}

LoraPair distribute(const ServerState& state, std::size_t client_rank) {
    if (client_rank == 0 || client_rank > state.global_rank()) {
        throw ProtocolError("cannot distribute rank " + std::to_string(client_rank) + " from a global rank " +
                            std::to_string(state.global_rank()) + " module");
    }
    return truncate(state.global_pair(), client_rank);
}

std::vector<double> aggregation_weights(std::span<const ClientUpdate> updates, Aggregation strategy,
                                        bool weight_by_size) {
    if (updates.empty()) throw ArgumentError("aggregation needs at least one update");
    const std::size_t m = updates.size();
    std::vector<double> w(m, 1.0 / static_cast<double>(m));
    if (strategy == Aggregation::simple) return w;

    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        w[k] = sparsity_score(updates[k].pair);
        if (weight_by_size) w[k] *= static_cast<double>(updates[k].samples);
        total += w[k];
    }
    if (!(total > 0.0)) return std::vector<double>(m, 1.0 / static_cast<double>(m));
    for (double& x : w) x /= total;
    return w;
}

ServerState aggregate(ServerState state, std::span<const ClientUpdate> updates) {
    const std::vector<double> weights = aggregation_weights(updates, state.strategy_, state.weight_by_size_);
    std::vector<LoraPair> pairs;
    pairs.reserve(updates.size());
    for (const ClientUpdate& u : updates) {
        if (u.client >= state.registry_.size()) throw ArgumentError("update from unknown client");
        if (u.pair.d() != state.global_.d() || u.pair.l() != state.global_.l())
            throw ArgumentError("update dimensions do not match the global module");
        if (u.pair.rank() > state.registry_[u.client]) {
            throw ProtocolError("client " + std::to_string(u.client) + " sent rank " + std::to_string(u.pair.rank()) +
                                " above its registered rank " + std::to_string(state.registry_[u.client]));
        }
        pairs.push_back(u.pair);
        state.registry_[u.client] = u.pair.rank();
    }
    LoraPair merged = aggregate_pairs(pairs, weights);

    const std::size_t next_rank = max_rank(state.registry_);
    if (merged.rank() > next_rank) {
        throw ProtocolError("aggregate rank " + std::to_string(merged.rank()) + " exceeds registered maximum " +
                            std::to_string(next_rank));
    }
    state.global_ = zero_pad(merged, next_rank);
    ++state.round_;
    return state;
}

}  // namespace hetlora
