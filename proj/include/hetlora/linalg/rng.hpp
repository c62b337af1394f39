#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include "hetlora/linalg/matrix.hpp"

namespace hetlora::linalg {

/// Mixes a parent seed with a list of stream tags (splitmix64 finaliser).
/// Used to give every client, round and purpose its own independent stream.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

/// Seeded random stream. Single owner; do not share across threads.
///
/// Built on std::mt19937_64, whose output sequence is fixed by the standard.
/// The uniform and normal transforms are implemented here rather than taken
/// from <random>, so streams are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Independent child stream, deterministic in (seed, tags).
    Rng child(std::initializer_list<std::uint64_t> tags) const { return Rng(derive_seed(seed_, tags)); }

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer on [0, n). n > 0.
    std::size_t uniform_index(std::size_t n);
    double normal();

    /// rows × cols matrix of i.i.d. N(0, stddev²) entries.
    Matrix gaussian(std::size_t rows, std::size_t cols, double stddev);

    /// Index drawn with probability proportional to `weights`.
    /// Weights must be finite and non-negative with a positive sum.
    std::size_t sample_discrete(std::span<const double> weights);

    /// `count` distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hetlora::linalg
