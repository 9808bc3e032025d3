#pragma once

#include <cstdint>
#include <random>

namespace alrite {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t value);

/// Counter-based seed derivation: the result depends only on the arguments,
/// so members trained in any order or on any worker get the same stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace alrite
