#pragma once

#include <cstdint>
#include <string>

#include "hivla/model/config.hpp"
#include "hivla/model/params.hpp"

namespace hivla::model {

/// Everything needed to resume training or run inference: configs, weights,
/// and (optionally) AdamW moment tensors.
template <typename S>
struct CheckpointData {
  DiTConfig dit;
  EncoderConfig enc;
  std::int64_t step = 0;  ///< training steps completed
  Params<S> params;
  bool has_opt = false;
  Params<S> opt_m, opt_v;  ///< valid only when has_opt
};

/// Header fields readable without loading tensors (and without knowing the
/// stored scalar type).
struct CheckpointInfo {
  std::string dtype;  ///< "f32" or "f64"
  std::int64_t step = 0;
  DiTConfig dit;
  EncoderConfig enc;
  bool has_opt = false;
};

/// Writes a checkpoint file: magic "HVCK", format version, JSON header with
/// both configs, then named tensors. Atomic via write-to-temp-then-rename.
template <typename S>
void save_checkpoint(const std::string& path, const CheckpointData<S>& ck);

/// Reads a checkpoint written by save_checkpoint. The stored dtype must match
/// S ("f32" for float, "f64" for double); shape or name mismatches throw.
template <typename S>
CheckpointData<S> load_checkpoint(const std::string& path);

/// Reads only the header of a checkpoint file.
CheckpointInfo peek_checkpoint(const std::string& path);

/// JSON round-trip for the model configs (used by checkpoints and the
/// experiment config files).
std::string dit_config_to_json(const DiTConfig& cfg);
DiTConfig dit_config_from_json(const std::string& text);
std::string encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const std::string& text);

}  // namespace hivla::model
