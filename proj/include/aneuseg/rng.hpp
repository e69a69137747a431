#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace aneuseg {

/// Derives an independent stream seed from the top-level run seed, a module
/// label and an index (FNV-1a of the label, mixed with splitmix64). Every
/// random stream in the pipeline is created through this function.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view label, std::uint64_t index = 0)
{
    return std::mt19937_64(derive_seed(seed, label, index));
}

}  // namespace aneuseg
