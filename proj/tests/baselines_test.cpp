#include <doctest.h>

#include <cmath>

#include "hetlora/baselines.hpp"
#include "hetlora/errors.hpp"
#include "support/oracles.hpp"

using namespace hetlora;

namespace {

SyntheticTaskSpec tiny_spec(std::uint64_t seed = 3) {
    SyntheticTaskSpec s;
    s.d = 8;
    s.l = 6;
    s.true_rank = 3;
    s.num_clients = 12;
    s.samples_per_client = {16};
    s.eval_samples = 100;
    s.seed = seed;
    return s;
}

ProtocolConfig tiny_protocol(StrategyTag tag) {
    ProtocolConfig c;
    c.strategy = tag;
    c.r_min = 1;
    c.r_max = 4;
    c.alpha = 0.5;
    c.clients_per_round = 4;
    c.rounds = 15;
    c.local.learning_rate = 0.05;
    c.local.lambda = 0.05;
    c.local.gamma = 0.9;
    return c;
}

}  // namespace

TEST_CASE("strategy tags") {
    CHECK(StrategyTag::parse("hetlora") == StrategyTag::hetlora());
    CHECK(StrategyTag::parse("homlora:4") == StrategyTag::homlora(4));
    CHECK(StrategyTag::parse("homlora(16)") == StrategyTag::homlora(16));
    CHECK(StrategyTag::parse("full") == StrategyTag::full_ft());
    CHECK(StrategyTag::parse("recon_svd") == StrategyTag::recon_svd());
    CHECK(StrategyTag::homlora(2).to_string() == "homlora:2");
    for (const char* bad : {"homlora", "homlora:0", "homlora:x", "homlora(3", "fedavg"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(StrategyTag::parse(bad), ArgumentError);
    }
}

TEST_CASE("communication arithmetic") {
    CHECK(lora_param_count(1, 64, 32) == 96);
    CHECK(lora_param_count(16, 64, 32) == 1536);
    CHECK(dense_param_count(64, 32) == 2048);
    CHECK(lora_param_fraction(1, 64, 32) == 96.0 / 2048.0);
    CHECK(lora_param_fraction(8, 64, 32) == 0.375);
}

TEST_CASE("protocol validation") {
    ProtocolConfig c = tiny_protocol(StrategyTag::hetlora());
    CHECK_NOTHROW(c.validate(8, 6, 12));
    c.clients_per_round = 13;
    CHECK_THROWS_AS(c.validate(8, 6, 12), ArgumentError);
    c = tiny_protocol(StrategyTag::hetlora());
    c.r_max = 7;
    CHECK_NOTHROW(c.validate(8, 6, 12));
    c.strategy = StrategyTag::recon_svd();
    CHECK_THROWS_AS(c.validate(8, 6, 12), ArgumentError);
    c.r_min = 5;
    c.r_max = 4;
    c.strategy = StrategyTag::hetlora();
    CHECK_THROWS_AS(c.validate(8, 6, 12), ArgumentError);
    c = tiny_protocol(StrategyTag::hetlora());
    c.initial_ranks = {1, 2};
    CHECK_THROWS_AS(c.validate(8, 6, 12), ArgumentError);
}

TEST_CASE("homlora configuration") {
    const ProtocolConfig c = homlora_config(tiny_protocol(StrategyTag::hetlora()), 3);
    CHECK(c.r_min == 3);
    CHECK(c.r_max == 3);
    CHECK(c.local.lambda == 0.0);
    CHECK(c.local.gamma == 1.0);
    CHECK(c.aggregation == Aggregation::simple);
    CHECK(c.strategy == StrategyTag::homlora(3));
}

TEST_CASE("full fine-tuning drives a noiseless task to zero") {
    SyntheticTaskSpec s = tiny_spec();
    s.noise_std = 0.0;
    const SyntheticTask task = generate_task(s);
    ProtocolConfig c = tiny_protocol(StrategyTag::full_ft());
    c.rounds = 400;
    c.clients_per_round = 12;
    c.local.learning_rate = 0.1;
    const RunResult r = run_protocol(task, c, 0);
    REQUIRE(r.complete);
    CHECK(r.final_eval_loss() < 1e-6);
    CHECK(r.rounds.back().global_rank == 0);
    CHECK(r.rounds.front().params_down == 12 * dense_param_count(8, 6));
}

TEST_CASE("hetlora run records") {
    const SyntheticTask task = generate_task(tiny_spec());
    const RunResult r = run_protocol(task, tiny_protocol(StrategyTag::hetlora()), 1);
    REQUIRE(r.complete);
    REQUIRE(r.rounds.size() == 15);
    CHECK(r.initial_ranks.size() == 12);
    std::uint64_t cumulative = 0;
    for (std::size_t t = 0; t < r.rounds.size(); ++t) {
        const RoundRecord& rec = r.rounds[t];
        CHECK(rec.round == t + 1);
        CHECK(rec.participants.size() == 4);
        std::uint64_t down = 0, up = 0;
        for (const ParticipantRecord& p : rec.participants) {
            CHECK(p.rank_sent <= p.rank_received);
            CHECK(p.pruned == (p.rank_sent < p.rank_received));
            down += lora_param_count(p.rank_received, 8, 6);
            up += lora_param_count(p.rank_sent, 8, 6);
        }
        CHECK(rec.params_down == down);
        CHECK(rec.params_up == up);
        cumulative += down + up;
        CHECK(rec.params_cumulative == cumulative);
        CHECK_FALSE(rec.wall_ms.has_value());
    }
    CHECK(r.final_eval_loss() < r.initial_eval_loss);
    for (std::size_t k = 0; k < 12; ++k) CHECK(r.final_ranks[k] <= r.initial_ranks[k]);
}

TEST_CASE("explicit initial ranks override the draw") {
    const SyntheticTask task = generate_task(tiny_spec());
    ProtocolConfig c = tiny_protocol(StrategyTag::hetlora());
    c.initial_ranks = {1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4};
    const RunResult r = run_protocol(task, c, 2);
    CHECK(r.initial_ranks == c.initial_ranks);
}

TEST_CASE("runs are deterministic in the seed") {
    const SyntheticTask task = generate_task(tiny_spec());
    for (StrategyTag tag : {StrategyTag::hetlora(), StrategyTag::homlora(2), StrategyTag::recon_svd(),
                            StrategyTag::full_ft()}) {
        CAPTURE(tag.to_string());
        const RunResult a = run_protocol(task, tiny_protocol(tag), 4);
        const RunResult b = run_protocol(task, tiny_protocol(tag), 4);
        REQUIRE(a.rounds.size() == b.rounds.size());
        for (std::size_t t = 0; t < a.rounds.size(); ++t) CHECK(a.rounds[t].eval_loss == b.rounds[t].eval_loss);
        CHECK(a.final_ranks == b.final_ranks);
        CHECK(run_protocol(task, tiny_protocol(tag), 5).final_eval_loss() != a.final_eval_loss());
    }
}

TEST_CASE("recon_svd with a single client matches homlora for the first round") {
    SyntheticTaskSpec s = tiny_spec();
    s.num_clients = 1;
    const SyntheticTask task = generate_task(s);
    ProtocolConfig c = tiny_protocol(StrategyTag::recon_svd());
    c.clients_per_round = 1;
    c.rounds = 1;
    c.initial_ranks = {3};
    const RunResult recon = run_protocol(task, c, 6);
    const RunResult hom = run_homlora(task, 3, c, 6);
    CHECK(recon.initial_eval_loss == doctest::Approx(hom.initial_eval_loss).epsilon(1e-12));
    CHECK(recon.final_eval_loss() == doctest::Approx(hom.final_eval_loss()).epsilon(1e-10));
    CHECK(recon.final_ranks == std::vector<std::size_t>{3});
}

TEST_CASE("recon_svd clients never prune") {
    const SyntheticTask task = generate_task(tiny_spec());
    const RunResult r = run_protocol(task, tiny_protocol(StrategyTag::recon_svd()), 7);
    REQUIRE(r.complete);
    CHECK(r.final_ranks == r.initial_ranks);
    for (const RoundRecord& rec : r.rounds)
        for (const ParticipantRecord& p : rec.participants) CHECK_FALSE(p.pruned);
}

TEST_CASE("a diverging run stops early and is marked incomplete") {
    const SyntheticTask task = generate_task(tiny_spec());
    ProtocolConfig c = tiny_protocol(StrategyTag::homlora(2));
    c.local.learning_rate = 40.0;
    const RunResult r = run_protocol(task, c, 8);
    CHECK_FALSE(r.complete);
    CHECK(r.rounds.size() < 15);
    CHECK(r.error.find("diverged") != std::string::npos);
}

TEST_CASE("per-round communication is ordered by adapter size") {
    const SyntheticTask task = generate_task(tiny_spec());
    const auto first_round = [&](StrategyTag tag) {
        return run_protocol(task, tiny_protocol(tag), 9).rounds.front().params_down;
    };
    CHECK(first_round(StrategyTag::homlora(1)) < first_round(StrategyTag::homlora(2)));
    CHECK(first_round(StrategyTag::homlora(2)) < first_round(StrategyTag::full_ft()));
    CHECK(first_round(StrategyTag::homlora(1)) == 4 * lora_param_count(1, 8, 6));
}

TEST_CASE("wall clock is only recorded on request") {
    const SyntheticTask task = generate_task(tiny_spec());
    const RunResult r = run_protocol(task, tiny_protocol(StrategyTag::homlora(2)), 1, RunOptions{true});
    for (const RoundRecord& rec : r.rounds) CHECK(rec.wall_ms.has_value());
}
