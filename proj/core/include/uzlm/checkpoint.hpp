#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "uzlm/model.hpp"

namespace uzlm::model {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Unsupported format_version.
struct CheckpointVersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};
// Tensor table disagrees with the config-derived shapes or names.
struct CheckpointShapeError : CheckpointError {
  using CheckpointError::CheckpointError;
};
// Payload shorter or longer than the manifest promises.
struct CheckpointTruncatedError : CheckpointError {
  using CheckpointError::CheckpointError;
};

struct PhaseMetadata {
  int phase_id = 1;
  int completed_epochs = 0;
  int64_t step_in_epoch = 0;  // optimizer steps already taken inside the current epoch
  int64_t global_step = 0;
  uint64_t rng_seed = 0;
};

// Adam moments captured alongside the parameters so training can resume
// exactly. Stored in a side file (optim.bin) referenced from the manifest.
struct OptimizerSnapshot {
  EncoderState<float> m;
  EncoderState<float> v;
  int64_t step = 0;
};

// Writes <dir>/manifest.json and <dir>/params.bin (little-endian float32,
// row-major, tensors concatenated in named_tensors() order), plus
// <dir>/optim.bin when optimizer moments are provided. Creates dir.
void save_checkpoint(const std::string& dir, const EncoderState<float>& state,
                     const PhaseMetadata& meta, const OptimizerSnapshot* optimizer = nullptr);

struct LoadedCheckpoint {
  EncoderState<float> state;
  PhaseMetadata meta;
  std::optional<OptimizerSnapshot> optimizer;
};

// Reconstructs the state from a checkpoint directory. Throws the specific
// CheckpointError subclasses above; a reload-save round trip is
// byte-identical.
LoadedCheckpoint load_checkpoint(const std::string& dir);

// Highest-step "ckpt-*" subdirectory of parent, or "" when none exists.
std::string find_latest_checkpoint(const std::string& parent);

}  // namespace uzlm::model
