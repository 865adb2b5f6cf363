#pragma once

#include <cstdint>
#include <random>

namespace pbc {

// All library randomness flows through an injected, seedable engine so that
// compilation traces and generated circuits are reproducible.
using Rng = std::mt19937_64;

inline int coin_pm1(Rng &rng) { return (rng() & 1) ? -1 : +1; }

inline uint64_t uniform_below(Rng &rng, uint64_t bound) {
    std::uniform_int_distribution<uint64_t> dist(0, bound - 1);
    return dist(rng);
}

}  // namespace pbc
