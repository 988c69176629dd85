#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace kgllm {

/// Derives an independent seed for a named sub-stream (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator whose outputs are identical across standard libraries.
///
/// std::uniform_int_distribution and std::shuffle are implementation-defined,
/// so bounded draws and permutations are done here on top of mt19937_64,
/// whose output sequence is fixed by the standard.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform_unit();

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_unit(); }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        shuffle(std::span<T>(items));
    }

    /// k distinct indices from [0, n), returned in ascending order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
};

}  // namespace kgllm
