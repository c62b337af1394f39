#include "hetlora/client.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetlora/errors.hpp"

namespace hetlora {

namespace {

struct Tail {
    std::size_t keep;
    double b_norm = 0.0;
    double a_norm = 0.0;

    bool empty(std::size_t rank) const noexcept { return keep >= rank; }
};

Tail tail_of(const LoraPair& p, double gamma) {
    Tail t{pruned_rank(p.rank(), gamma)};
    if (t.empty(p.rank())) return t;
    const std::size_t width = p.rank() - t.keep;
    t.b_norm = linalg::frobenius_norm(p.b().col_block(t.keep, width));
    t.a_norm = linalg::frobenius_norm(p.a().row_block(t.keep, width));
    return t;
}

}  // namespace

void LocalTrainConfig::validate() const {
    if (local_steps == 0) throw ArgumentError("local_steps (tau) must be >= 1");
    if (batch_size == 0) throw ArgumentError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ArgumentError("learning_rate must be > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("lambda must be >= 0");
    if (!(gamma > 0.0) || gamma > 1.0) throw ArgumentError("gamma must lie in (0, 1]");
}

std::size_t pruned_rank(std::size_t rank, double gamma) {
    // The small slack absorbs representation error, e.g. 0.29 * 100 = 28.999999999999996.
    const auto keep = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(rank) + 1e-9));
    return std::clamp<std::size_t>(keep, 1, std::max<std::size_t>(rank, 1));
}

double tail_block_norm(const LoraPair& p, double gamma) {
    const Tail t = tail_of(p, gamma);
    return t.b_norm * t.a_norm;
}

double regularized_loss(const LoraPair& p, const FrozenBaseModel& base, const ClientDataset& batch, double lambda,
                        double gamma) {
    const double data = loss(p, base, batch);
    return lambda > 0.0 ? data + lambda * tail_block_norm(p, gamma) : data;
}

LossAndGradient regularized_loss_and_grad(const LoraPair& p, const FrozenBaseModel& base,
                                          const ClientDataset& batch, double lambda, double gamma) {
    LossAndGradient out = loss_and_grad(p, base, batch);
    if (lambda == 0.0) return out;
    const Tail t = tail_of(p, gamma);
    if (t.empty(p.rank())) return out;
    out.loss += lambda * t.b_norm * t.a_norm;
    if (t.b_norm == 0.0 || t.a_norm == 0.0) return out;

    const double b_scale = lambda * t.a_norm / t.b_norm;
    const double a_scale = lambda * t.b_norm / t.a_norm;
    for (std::size_t i = 0; i < p.d(); ++i)
        for (std::size_t k = t.keep; k < p.rank(); ++k) out.grad.b(i, k) += b_scale * p.b()(i, k);
    for (std::size_t k = t.keep; k < p.rank(); ++k)
        for (std::size_t j = 0; j < p.l(); ++j) out.grad.a(k, j) += a_scale * p.a()(k, j);
    return out;
}

LocalTrainResult local_train(ClientState& state, const LoraPair& received, const FrozenBaseModel& base,
                             const LocalTrainConfig& cfg) {
    if (received.rank() != state.current_rank) {
        throw ProtocolError("client " + std::to_string(state.id) + " holds rank " +
                            std::to_string(state.current_rank) + " but received rank " +
                            std::to_string(received.rank()));
    }
    const ClientDataset& data = state.dataset.get();
    const std::size_t batch = std::min(cfg.batch_size, data.size());

    LoraPair p = received;
    double last_loss = 0.0;
    for (std::size_t step = 0; step < cfg.local_steps; ++step) {
        const auto idx = state.rng.sample_without_replacement(data.size(), batch);
        try {
            const LossAndGradient lg = regularized_loss_and_grad(p, base, data.select(idx), cfg.lambda, cfg.gamma);
            if (!std::isfinite(lg.loss)) throw NumericError("non-finite loss");
            p.sgd_step(lg.grad.b, lg.grad.a, cfg.learning_rate);
            last_loss = lg.loss;
        } catch (const NumericError& e) {
            throw TrainingError("client " + std::to_string(state.id) + " diverged: " + e.what(), step);
        }
    }

    LocalTrainResult result{std::move(p)};
    result.last_batch_loss = last_loss;
    result.tail_received = tail_block_norm(received, cfg.gamma);
    result.tail_trained = tail_block_norm(result.pair, cfg.gamma);
    result.new_rank = received.rank();
    if (result.tail_trained < result.tail_received) {
        result.new_rank = pruned_rank(received.rank(), cfg.gamma);
        result.pair = truncate(result.pair, result.new_rank);
        result.pruned = true;
    }
    state.current_rank = result.new_rank;
    return result;
}

}  // namespace hetlora
