#include <doctest.h>

#include <cmath>

#include "hetlora/errors.hpp"
#include "hetlora/tasks.hpp"
#include "support/oracles.hpp"

using namespace hetlora;
using linalg::Matrix;
using linalg::Rng;

namespace {

SyntheticTaskSpec small_spec() {
    SyntheticTaskSpec s;
    s.d = 12;
    s.l = 10;
    s.true_rank = 4;
    s.num_clients = 6;
    s.samples_per_client = {20};
    s.eval_samples = 200;
    s.seed = 5;
    return s;
}

std::size_t numerical_rank(const Matrix& m) {
    const linalg::SvdResult s = linalg::svd(m, std::min(m.rows(), m.cols()));
    std::size_t r = 0;
    for (double x : s.singular_values)
        if (x > 1e-8 * s.singular_values.front()) ++r;
    return r;
}

}  // namespace

TEST_CASE("loss matches the per-sample oracle") {
    Rng rng(1);
    const FrozenBaseModel base(rng.gaussian(7, 5, 1.0));
    for (int trial = 0; trial < 20; ++trial) {
        const LoraPair p = oracle::random_pair(rng, 7, 5, 1 + rng.uniform_index(4));
        const ClientDataset batch = oracle::random_dataset(rng, 1 + rng.uniform_index(9), 7, 5);
        CHECK(std::abs(loss(p, base, batch) - oracle::per_sample_loss(p, base, batch)) < 1e-10);
        CHECK(std::abs(dense_loss(oracle::product(p), base, batch) - oracle::per_sample_loss(p, base, batch)) <
              1e-10);
        CHECK(loss_and_grad(p, base, batch).loss == loss(p, base, batch));
    }
}

TEST_CASE("loss rejects a pair that does not match the base model") {
    Rng rng(2);
    const FrozenBaseModel base(rng.gaussian(4, 3, 1.0));
    const ClientDataset batch = oracle::random_dataset(rng, 5, 4, 3);
    CHECK_THROWS_AS(loss(LoraPair::zeros(5, 3, 1), base, batch), ShapeError);
}

TEST_CASE("gradient matches central differences") {
    Rng rng(3);
    const FrozenBaseModel base(rng.gaussian(6, 5, 1.0));
    const ClientDataset batch = oracle::random_dataset(rng, 8, 6, 5);
    for (int state = 0; state < 5; ++state) {
        const LoraPair p = oracle::random_pair(rng, 6, 5, 3, 0.5);
        const LoraGradient g = grad(p, base, batch);
        for (int dir = 0; dir < 10; ++dir) {
            const Matrix db = rng.gaussian(6, 3, 1.0), da = rng.gaussian(3, 5, 1.0);
            const double fd = oracle::directional_derivative(
                [&](const LoraPair& q) { return loss(q, base, batch); }, p, db, da, 1e-5);
            const double an = oracle::inner(g.b, db) + oracle::inner(g.a, da);
            CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(an)));
        }
    }
}

TEST_CASE("dense gradient matches central differences") {
    Rng rng(4);
    const FrozenBaseModel base(rng.gaussian(5, 4, 1.0));
    const ClientDataset batch = oracle::random_dataset(rng, 6, 5, 4);
    const Matrix w = rng.gaussian(5, 4, 0.5);
    const Matrix g = dense_grad(w, base, batch);
    for (int dir = 0; dir < 10; ++dir) {
        const Matrix dw = rng.gaussian(5, 4, 1.0);
        Matrix wp = w, wm = w;
        wp.add_scaled(dw, 1e-5);
        wm.add_scaled(dw, -1e-5);
        const double fd = (dense_loss(wp, base, batch) - dense_loss(wm, base, batch)) / 2e-5;
        CHECK(std::abs(fd - oracle::inner(g, dw)) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("moment loss agrees with the per-sample loss") {
    Rng rng(5);
    const FrozenBaseModel base(rng.gaussian(8, 6, 1.0));
    const ClientDataset data = oracle::random_dataset(rng, 50, 8, 6);
    const DatasetMoments m = dataset_moments(data);
    for (int trial = 0; trial < 10; ++trial) {
        const LoraPair p = oracle::random_pair(rng, 8, 6, 2);
        const double direct = oracle::per_sample_loss(p, base, data);
        CHECK(std::abs(moment_loss(p, base, m) - direct) < 1e-9 * std::max(1.0, direct));
        CHECK(std::abs(moment_loss(oracle::product(p), base, m) - direct) < 1e-9 * std::max(1.0, direct));
    }
    CHECK_THROWS_AS(moment_loss(Matrix(3, 3), base, m), ShapeError);
}

TEST_CASE("task spec validation") {
    SyntheticTaskSpec s = small_spec();
    CHECK_NOTHROW(s.validate());
    s.true_rank = 11;
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    s = small_spec();
    s.client_complexity = {5};
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    s = small_spec();
    s.samples_per_client = {1, 2};
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    s = small_spec();
    s.spectrum_decay = 0.0;
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    CHECK_THROWS_AS(parse_input_subspace("somewhere"), ArgumentError);
    CHECK(parse_input_subspace(to_string(InputSubspace::target)) == InputSubspace::target);
}

TEST_CASE("generated task shapes and target") {
    SyntheticTaskSpec s = small_spec();
    s.samples_per_client = {3, 4, 5, 6, 7, 8};
    const SyntheticTask t = generate_task(s);
    CHECK(t.base.d() == 12);
    CHECK(t.base.l() == 10);
    REQUIRE(t.clients.size() == 6);
    for (std::size_t k = 0; k < 6; ++k) {
        CHECK(t.clients[k].size() == k + 3);
        CHECK(t.clients[k].targets.cols() == 12);
        CHECK(t.clients[k].inputs.cols() == 10);
    }
    CHECK(t.eval.size() == 200);
    CHECK(numerical_rank(t.target_delta) == 4);
    CHECK(oracle::frobenius(t.target_delta) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("client inputs have exactly the configured complexity") {
    for (InputSubspace mode : {InputSubspace::ambient, InputSubspace::target}) {
        SyntheticTaskSpec s = small_spec();
        s.subspace = mode;
        s.client_complexity = {1, 2, 3, 4, 1, 4};
        const SyntheticTask t = generate_task(s);
        for (std::size_t k = 0; k < 6; ++k) {
            CAPTURE(k);
            CHECK(t.complexity[k] == s.client_complexity[k]);
            CHECK(numerical_rank(t.clients[k].inputs) == s.client_complexity[k]);
        }
    }
}

TEST_CASE("drawn complexity stays in range") {
    SyntheticTaskSpec s = small_spec();
    s.num_clients = 50;
    const SyntheticTask t = generate_task(s);
    for (std::size_t rho : t.complexity) {
        CHECK(rho >= 1);
        CHECK(rho <= 4);
    }
}

TEST_CASE("noiseless targets are fit exactly by the true update") {
    SyntheticTaskSpec s = small_spec();
    s.noise_std = 0.0;
    const SyntheticTask t = generate_task(s);
    for (const ClientDataset& c : t.clients) CHECK(dense_loss(t.target_delta, t.base, c) < 1e-20);
    CHECK(dense_loss(t.target_delta, t.base, t.eval) < 1e-20);
    CHECK(dense_loss(Matrix(12, 10), t.base, t.eval) > 1e-3);
}

TEST_CASE("eval targets are clean unless eval noise is requested") {
    SyntheticTaskSpec s = small_spec();
    s.noise_std = 0.5;
    CHECK(dense_loss(generate_task(s).target_delta, generate_task(s).base, generate_task(s).eval) < 1e-20);
    s.eval_noise = true;
    const SyntheticTask noisy = generate_task(s);
    CHECK(dense_loss(noisy.target_delta, noisy.base, noisy.eval) > 0.1);
}

TEST_CASE("generation is deterministic in the seed") {
    const SyntheticTask a = generate_task(small_spec());
    const SyntheticTask b = generate_task(small_spec());
    CHECK(a.base.w0() == b.base.w0());
    CHECK(a.target_delta == b.target_delta);
    CHECK(a.clients[3].inputs == b.clients[3].inputs);
    CHECK(a.eval.targets == b.eval.targets);
    SyntheticTaskSpec other = small_spec();
    other.seed = 6;
    CHECK_FALSE(generate_task(other).target_delta == a.target_delta);
}
