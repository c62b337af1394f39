#include <doctest.h>

#include <cmath>
#include <limits>

#include "hetlora/client.hpp"
#include "hetlora/errors.hpp"
#include "support/oracles.hpp"

using namespace hetlora;
using linalg::Matrix;
using linalg::Rng;

TEST_CASE("pruned rank") {
    CHECK(pruned_rank(10, 1.0) == 10);
    CHECK(pruned_rank(10, 0.99) == 9);
    CHECK(pruned_rank(10, 0.95) == 9);
    CHECK(pruned_rank(10, 0.85) == 8);
    CHECK(pruned_rank(16, 0.85) == 13);
    CHECK(pruned_rank(1, 0.5) == 1);
    CHECK(pruned_rank(2, 0.3) == 1);
    // γr lands on an integer up to rounding
    CHECK(pruned_rank(20, 0.95) == 19);
    CHECK(pruned_rank(100, 0.07) == 7);
}

TEST_CASE("tail block norm") {
    Rng rng(1);
    const LoraPair p = oracle::random_pair(rng, 6, 5, 10);
    CHECK(tail_block_norm(p, 1.0) == 0.0);
    for (double g : {0.99, 0.85, 0.5, 0.1})
        CHECK(tail_block_norm(p, g) == doctest::Approx(oracle::tail_product(p, g)).epsilon(1e-12));

    // r = 10, γ = 0.99 keeps 9: only the last column of B and row of A count.
    Matrix b(6, 10), a(10, 5);
    b(2, 9) = 3.0;
    a(9, 4) = 4.0;
    b(0, 0) = 100.0;
    CHECK(tail_block_norm(LoraPair(b, a), 0.99) == doctest::Approx(12.0).epsilon(1e-15));
    CHECK(tail_block_norm(LoraPair::zeros(6, 5, 1), 0.5) == 0.0);
}

TEST_CASE("train config validation") {
    LocalTrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.gamma = 0.0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.gamma = 1.5;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.local_steps = 0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.lambda = -1.0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("regularized gradient matches central differences") {
    Rng rng(2);
    const FrozenBaseModel base(rng.gaussian(7, 6, 1.0));
    const ClientDataset batch = oracle::random_dataset(rng, 8, 7, 6);
    for (double gamma : {0.99, 0.85, 0.5}) {
        for (int state = 0; state < 4; ++state) {
            const LoraPair p = oracle::random_pair(rng, 7, 6, 5, 0.7);
            const double lambda = 0.3;
            const auto f = [&](const LoraPair& q) { return regularized_loss(q, base, batch, lambda, gamma); };
            const LossAndGradient lg = regularized_loss_and_grad(p, base, batch, lambda, gamma);
            CHECK(lg.loss == doctest::Approx(f(p)).epsilon(1e-13));
            for (int dir = 0; dir < 8; ++dir) {
                const Matrix db = rng.gaussian(7, 5, 1.0), da = rng.gaussian(5, 6, 1.0);
                const double fd = oracle::directional_derivative(f, p, db, da, 1e-6);
                const double an = oracle::inner(lg.grad.b, db) + oracle::inner(lg.grad.a, da);
                CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(an)));
            }
        }
    }
}

TEST_CASE("regularizer uses the zero subgradient on an empty tail factor") {
    Rng rng(3);
    const FrozenBaseModel base(rng.gaussian(5, 4, 1.0));
    const ClientDataset batch = oracle::random_dataset(rng, 6, 5, 4);
    LoraPair p = oracle::random_pair(rng, 5, 4, 4);
    Matrix b = p.b();
    for (std::size_t i = 0; i < 5; ++i) b(i, 3) = 0.0;
    p = LoraPair(b, p.a());
    const LossAndGradient with = regularized_loss_and_grad(p, base, batch, 5.0, 0.75);
    const LossAndGradient without = loss_and_grad(p, base, batch);
    CHECK(with.grad.a == without.grad.a);
    CHECK(with.grad.b == without.grad.b);
}

namespace {

struct Fixture {
    Rng rng{4};
    FrozenBaseModel base{rng.gaussian(6, 5, 1.0)};
    ClientDataset data = oracle::random_dataset(rng, 12, 6, 5);

    ClientState client(std::size_t rank) { return ClientState{3, rank, std::cref(data), Rng(99)}; }
};

}  // namespace

TEST_CASE("local training rejects a module of the wrong rank") {
    Fixture f;
    ClientState s = f.client(4);
    CHECK_THROWS_AS(local_train(s, LoraPair::zeros(6, 5, 3), f.base, LocalTrainConfig{}), ProtocolError);
}

TEST_CASE("one full-batch step equals a manual gradient step") {
    Fixture f;
    ClientState s = f.client(3);
    const LoraPair start = oracle::random_pair(f.rng, 6, 5, 3, 0.3);
    LocalTrainConfig cfg;
    cfg.local_steps = 1;
    cfg.batch_size = 12;
    cfg.learning_rate = 0.05;
    const LocalTrainResult r = local_train(s, start, f.base, cfg);

    const LoraGradient g = grad(start, f.base, f.data);
    Matrix b = start.b(), a = start.a();
    b.add_scaled(g.b, -0.05);
    a.add_scaled(g.a, -0.05);
    CHECK(linalg::max_abs_diff(r.pair.b(), b) < 1e-12);
    CHECK(linalg::max_abs_diff(r.pair.a(), a) < 1e-12);
    CHECK_FALSE(r.pruned);
    CHECK(s.current_rank == 3);
}

TEST_CASE("local training lowers the loss") {
    Fixture f;
    ClientState s = f.client(2);
    LocalTrainConfig cfg;
    cfg.local_steps = 50;
    cfg.learning_rate = 0.02;
    const LoraPair start = oracle::random_pair(f.rng, 6, 5, 2, 0.1);
    const LocalTrainResult r = local_train(s, start, f.base, cfg);
    CHECK(loss(r.pair, f.base, f.data) < loss(start, f.base, f.data));
}

TEST_CASE("pruning fires exactly when the trained tail shrinks") {
    Fixture f;
    LocalTrainConfig cfg;
    cfg.gamma = 0.75;
    cfg.local_steps = 20;
    cfg.learning_rate = 0.01;

    // A large tail with a strong regulariser shrinks, so the client prunes 4 -> 3.
    {
        ClientState s = f.client(4);
        cfg.lambda = 1.0;
        const LoraPair start = oracle::random_pair(f.rng, 6, 5, 4, 1.0);
        const LocalTrainResult r = local_train(s, start, f.base, cfg);
        CHECK(r.tail_trained < r.tail_received);
        CHECK(r.pruned);
        CHECK(r.new_rank == 3);
        CHECK(r.pair.rank() == 3);
        CHECK(s.current_rank == 3);
    }
    // A zero tail cannot shrink further.
    {
        ClientState s = f.client(4);
        cfg.lambda = 0.0;
        Matrix b = f.rng.gaussian(6, 4, 1.0), a = f.rng.gaussian(4, 5, 1.0);
        for (std::size_t i = 0; i < 6; ++i) b(i, 3) = 0.0;
        for (std::size_t j = 0; j < 5; ++j) a(3, j) = 0.0;
        const LocalTrainResult r = local_train(s, LoraPair(b, a), f.base, cfg);
        CHECK(r.tail_received == 0.0);
        CHECK_FALSE(r.pruned);
        CHECK(s.current_rank == 4);
    }
    // γ = 1 never prunes.
    {
        ClientState s = f.client(4);
        cfg.gamma = 1.0;
        cfg.lambda = 1.0;
        const LocalTrainResult r = local_train(s, oracle::random_pair(f.rng, 6, 5, 4), f.base, cfg);
        CHECK_FALSE(r.pruned);
        CHECK(r.pair.rank() == 4);
    }
}

TEST_CASE("divergence raises a training error carrying the step") {
    Fixture f;
    ClientState s = f.client(2);
    LocalTrainConfig cfg;
    cfg.local_steps = 200;
    cfg.learning_rate = 50.0;
    try {
        local_train(s, oracle::random_pair(f.rng, 6, 5, 2), f.base, cfg);
        FAIL("expected divergence");
    } catch (const TrainingError& e) {
        CHECK(e.step() < 200);
        CHECK(std::string(e.what()).find("client 3") != std::string::npos);
    }
}

TEST_CASE("local training is deterministic in the client stream") {
    Fixture f;
    const LoraPair start = oracle::random_pair(f.rng, 6, 5, 3, 0.3);
    ClientState s1 = f.client(3), s2 = f.client(3);
    LocalTrainConfig cfg;
    cfg.lambda = 0.1;
    cfg.gamma = 0.7;
    CHECK(local_train(s1, start, f.base, cfg).pair == local_train(s2, start, f.base, cfg).pair);
}
