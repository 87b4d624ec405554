#pragma once

#include <string>
#include <vector>

#include "hivla/core/errors.hpp"

namespace hivla::model {

/// Conditioning streams, in the order the cascade may attend to them.
enum class Stream { global = 0, local = 1, lang = 2 };

const char* stream_name(Stream s);
Stream stream_from_name(const std::string& name);

enum class NormKind { layernorm, rmsnorm };

struct DiTConfig {
  int d_model = 128;
  int layers = 4;
  int heads = 4;
  int kv_heads = 2;
  int horizon = 16;
  int d_a = 3;
  int d_s = 3;
  /// SwiGLU hidden width; 0 derives round-to-8 of (8/3) * d_model.
  int ffn_hidden = 0;
  /// Cross-attention cascade order, coarse to fine by default.
  std::vector<Stream> ordering{Stream::global, Stream::local, Stream::lang};
  NormKind norm_kind = NormKind::layernorm;
  int ode_steps = 10;

  int head_dim() const { return d_model / heads; }
  int ffn_dim() const {
    if (ffn_hidden > 0) return ffn_hidden;
    const int raw = (8 * d_model + 2) / 3;
    return ((raw + 7) / 8) * 8;
  }

  void validate() const {
    if (d_model <= 0 || layers <= 0 || heads <= 0 || kv_heads <= 0) {
      throw ConfigError("model dimensions must be positive");
    }
    if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
    if (heads % kv_heads != 0) throw ConfigError("heads must be divisible by kv_heads");
    if (d_model % 4 != 0) throw ConfigError("d_model must be divisible by 4 for the 2d encoding");
    if (horizon <= 0) throw ConfigError("horizon must be positive");
    if (d_a < 1 || d_s < 1) throw ConfigError("action and state dims must be positive");
    if (ordering.empty()) throw ConfigError("cross-attention ordering must be non-empty");
    if (ode_steps <= 0) throw ConfigError("ode_steps must be positive");
  }
};

struct EncoderConfig {
  int d_model = 128;
  int patch = 16;
  double pe_temperature = 10000.0;
  /// Closed word list; unknown words map to a reserved index 0.
  std::vector<std::string> vocab;
  int crop_side = 96;
  /// When false, the crop's absolute position encoding is skipped and local
  /// tokens carry appearance only.
  bool use_abs_pe = true;

  void validate() const {
    if (d_model <= 0 || d_model % 4 != 0) throw ConfigError("encoder d_model must be divisible by 4");
    if (patch <= 0) throw ConfigError("patch side must be positive");
    if (crop_side <= 0 || crop_side % patch != 0) {
      throw ConfigError("crop side must be a positive multiple of the patch side");
    }
    if (vocab.empty()) throw ConfigError("vocabulary must be non-empty");
  }
};

/// Word list covering every instruction and subtask template the task
/// registry can emit.
std::vector<std::string> default_vocab();

}  // namespace hivla::model
