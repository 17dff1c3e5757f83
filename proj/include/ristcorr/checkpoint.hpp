#pragma once

#include "ristcorr/model.hpp"
#include "ristcorr/training.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace ristcorr {

// Serialized training state. Binary layout: magic "RISTCKPT", u32 format
// version, JSON config blob, then named double tensors (model parameters
// and, when present, optimizer moments), the optimizer step counter, the
// epoch, and the sampler RNG state. Round-trips bitwise.
struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  std::map<std::string, Mat> tensors;
  bool has_optimizer = false;
  std::uint64_t adam_step = 0;
  std::uint64_t epoch = 0;
  std::string rng_state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Checkpoint make_checkpoint(Model& model, const TrainConfig& train_cfg,
                           const Adam* adam = nullptr, std::uint64_t epoch = 0,
                           const std::string& rng_state = "");

// Throws CorruptCheckpointError on truncated/garbled files and
// CheckpointVersionError on an unknown format version.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Builds a model from the checkpoint's config and installs its tensors.
Model restore_model(const Checkpoint& ckpt);
// Installs optimizer moments saved alongside the parameters.
void restore_adam(const Checkpoint& ckpt, Model& model, Adam& adam);

// FNV-1a over the file bytes; recorded in correspondence file headers.
std::uint64_t file_hash(const std::string& path);

}  // namespace ristcorr
