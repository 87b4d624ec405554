#pragma once

#include <cstdint>
#include <string>

#include "hivla/model/adamw.hpp"
#include "hivla/model/config.hpp"
#include "hivla/sim2d/types.hpp"

namespace hivla::harness {

struct TrainConfig {
  model::DiTConfig dit;
  model::EncoderConfig enc;  ///< empty vocab is replaced by the default word list
  model::AdamWConfig opt;
  int steps = 2000;
  int batch_size = 16;
  std::uint64_t seed = 7;
  int checkpoint_every = 500;  ///< 0 disables periodic checkpoints
  bool crop_from_hd = true;    ///< crop source for the rendered training inputs
  bool reuse_cached = true;    ///< return an existing finished run with this identity
  bool resume = true;          ///< continue from the newest periodic checkpoint
  std::string out_dir;

  void validate() const;
};

/// The run's identity: every field that changes what gets trained, as
/// canonical JSON. Procedural fields (out_dir, reuse/resume flags) excluded.
std::string train_identity_json(const TrainConfig& cfg, const std::string& dataset_dir);

struct TrainResult {
  std::string checkpoint_path;  ///< final weights (no optimizer state)
  std::string loss_curve_path;  ///< CSV: step,loss,grad_norm — one row per step
  double final_loss = 0.0;
  int steps_done = 0;
  bool reused_cache = false;
  std::string config_hash;  ///< content hash of the identity JSON
};

/// Minibatch flow-matching training over a generated dataset. Deterministic:
/// each optimizer step draws its batch, interpolation times and noise from a
/// seed derived from (seed, step), so resuming from a periodic checkpoint
/// continues the loss curve exactly. A non-finite loss aborts with an error
/// naming the newest surviving checkpoint.
TrainResult train(const std::string& dataset_dir, const TrainConfig& cfg,
                  const sim2d::SimConfig& sim = {});

}  // namespace hivla::harness
