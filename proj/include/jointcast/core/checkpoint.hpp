#pragma once

#include <filesystem>
#include <string>

#include "jointcast/core/parameter_store.hpp"

namespace jointcast {

/// Binary checkpoint:
///   "JCKPT1"
///   u32 entry count
///   per entry: u32 name length, name bytes, u32 rank, u32 extent * rank
///   per entry, in manifest order: f32 values (little-endian, row-major)
///
/// Each parameter `n` is followed by its AdamW moments `n.m1` and `n.m2`; the
/// optimizer step count is stored as a one-element entry "adam.step".
template <typename Scalar>
void save_checkpoint(const ParameterStore<Scalar>& store, const std::filesystem::path& path);

/// Loads a checkpoint written by save_checkpoint into a fresh store.
template <typename Scalar>
ParameterStore<Scalar> load_checkpoint(const std::filesystem::path& path, std::uint64_t rng_seed = 0);

/// Throws ConfigError unless `loaded` has exactly the names and shapes of `expected`.
template <typename Scalar>
void require_same_layout(const ParameterStore<Scalar>& expected, const ParameterStore<Scalar>& loaded);

}  // namespace jointcast
