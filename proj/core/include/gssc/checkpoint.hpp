// Versioned checkpoint format (all theta and psi tensors with shape headers
// plus the producing TrainConfig) and JSON text round-trips for TrainConfig.
#pragma once

#include "gssc/nn.hpp"
#include "gssc/sparsifier.hpp"
#include "gssc/trainer.hpp"

#include <filesystem>
#include <string>

namespace gssc {

inline constexpr const char* kCheckpointFormat = "gssc-checkpoint-v1";

struct Checkpoint {
  BackboneState theta;
  SparsifierState psi;
  TrainConfig config;
};

void save_checkpoint(const std::filesystem::path& path, const BackboneState& theta,
                     const SparsifierState& psi, const TrainConfig& config);

Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string config_to_json_text(const TrainConfig& cfg, int indent = 2);

// Parses a full or partial config (missing keys keep their defaults).
// Unknown keys are hard errors.
TrainConfig config_from_json_text(const std::string& text);

}  // namespace gssc
