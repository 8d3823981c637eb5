#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace bpr {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives a sub-stream seed from a master seed and a path of indices.
/// The result depends only on the arguments, never on call order, so
/// per-agent streams are stable regardless of scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// FNV-1a, used to turn stage tags into seed path components.
std::uint64_t hash_tag(std::string_view tag);

} // namespace bpr
