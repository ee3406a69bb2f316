#pragma once

// Parameter checkpoints: a JSON manifest (names, shapes, seed, step) next to
// one raw little-endian float32 blob per tensor.

#include "kgrec/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>

namespace kgrec::nn {

struct CheckpointInfo {
  std::uint64_t seed = 0;
  long step = 0;
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& dir, std::span<const Parameter* const> params,
                     const CheckpointInfo& info);

/// Loads every parameter by name. Missing names or shape mismatches throw.
CheckpointInfo load_checkpoint(const std::filesystem::path& dir, std::span<Parameter* const> params);

/// Rounds every entry to the nearest float32, i.e. what a save/load cycle does.
void round_to_f32(Matrix& m);

}  // namespace kgrec::nn
