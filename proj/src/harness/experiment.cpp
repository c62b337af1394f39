#include "hetlora/harness/experiment.hpp"

#include <charconv>

namespace hetlora::harness {

namespace {

std::string short_real(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

std::vector<Arm> strategy_arms(const ExperimentConfig& cfg) {
    std::vector<Arm> arms;
    for (const StrategyTag& tag : cfg.strategies) {
        ProtocolConfig p = cfg.protocol;
        p.strategy = tag;
        arms.push_back({tag.to_string(), std::move(p)});
    }
    return arms;
}

std::vector<Arm> gamma_ablation_arms(const ExperimentConfig& cfg, std::span<const double> gammas) {
    std::vector<Arm> arms;
    for (double g : gammas) {
        ProtocolConfig p = cfg.protocol;
        p.strategy = StrategyTag::hetlora();
        p.local.gamma = g;
        arms.push_back({"hetlora_gamma" + short_real(g), std::move(p)});
    }
    return arms;
}

std::vector<Arm> rank_arms(const ExperimentConfig& cfg, std::span<const std::size_t> ranks) {
    std::vector<Arm> arms;
    for (std::size_t r : ranks) {
        ProtocolConfig p = cfg.protocol;
        p.strategy = StrategyTag::homlora(r);
        arms.push_back({p.strategy.to_string(), std::move(p)});
    }
    return arms;
}

std::vector<RunStream> run_experiment(const ExperimentConfig& cfg, std::span<const Arm> arms,
                                      const ExperimentOptions& options) {
    cfg.validate();
    const std::string config_text = to_config_text(cfg);
    std::vector<RunStream> streams;
    for (std::uint64_t seed : cfg.seeds) {
        SyntheticTaskSpec spec = cfg.task;
        spec.seed = seed;
        const SyntheticTask task = generate_task(spec);
        for (const Arm& arm : arms) {
            for (double lr : cfg.learning_rates) {
                ProtocolConfig p = arm.protocol;
                p.local.learning_rate = lr;
                RunStream s{StreamMeta{arm.label, p.strategy, lr, seed, config_text},
                            run_protocol(task, p, seed, options.run)};
                if (options.on_stream) options.on_stream(s);
                streams.push_back(std::move(s));
            }
        }
    }
    return streams;
}

}  // namespace hetlora::harness
