#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "hivla/core/rng.hpp"
#include "hivla/model/config.hpp"
#include "hivla/model/nn.hpp"

namespace hivla::model {

/// All learnable tensors. Vectors are stored as single-column matrices so a
/// single visitor covers everything. Initialization draws in a fixed order
/// from one generator, in double precision, so float and double instances of
/// the same seed agree to float rounding.
template <class S>
struct Params {
  using M = Mat<S>;

  // Vision encoder, shared across views.
  M patch_proj_w, patch_proj_b;
  M view_emb;  // 3 x d: global, wrist, local crop
  M vis_w1, vis_b1, vis_w2, vis_b2;

  // Language encoder.
  M lang_embed;  // (vocab + 1) x d, row 0 reserved for unknown words
  M txt_w1, txt_b1, txt_w2, txt_b2;

  // State and action adapters, flow-time embedding MLP.
  M state_w1, state_b1, state_w2, state_b2, state_w3, state_b3;
  M act_w1, act_b1, act_w2, act_b2, act_w3, act_b3;
  M tau_w1, tau_b1, tau_w2, tau_b2;

  struct CrossAttn {
    M wq, wk, wv, wo;
    M norm_gain, norm_bias;
  };
  struct Block {
    M adaln_w, adaln_b;
    M sa_wq, sa_wk, sa_wv, sa_wo;
    std::array<CrossAttn, 3> cross;  // indexed by Stream
    M ffn_gate, ffn_up, ffn_down;
  };
  std::vector<Block> blocks;

  M final_adaln_w, final_adaln_b;
  M dec_w1, dec_b1, dec_w2, dec_b2, dec_w3, dec_b3;

  template <class F>
  void for_each_tensor(F&& f) {
    f("patch_proj_w", patch_proj_w);
    f("patch_proj_b", patch_proj_b);
    f("view_emb", view_emb);
    f("vis_w1", vis_w1);
    f("vis_b1", vis_b1);
    f("vis_w2", vis_w2);
    f("vis_b2", vis_b2);
    f("lang_embed", lang_embed);
    f("txt_w1", txt_w1);
    f("txt_b1", txt_b1);
    f("txt_w2", txt_w2);
    f("txt_b2", txt_b2);
    f("state_w1", state_w1);
    f("state_b1", state_b1);
    f("state_w2", state_w2);
    f("state_b2", state_b2);
    f("state_w3", state_w3);
    f("state_b3", state_b3);
    f("act_w1", act_w1);
    f("act_b1", act_b1);
    f("act_w2", act_w2);
    f("act_b2", act_b2);
    f("act_w3", act_w3);
    f("act_b3", act_b3);
    f("tau_w1", tau_w1);
    f("tau_b1", tau_b1);
    f("tau_w2", tau_w2);
    f("tau_b2", tau_b2);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "blocks." + std::to_string(i) + ".";
      Block& blk = blocks[i];
      f(p + "adaln_w", blk.adaln_w);
      f(p + "adaln_b", blk.adaln_b);
      f(p + "sa_wq", blk.sa_wq);
      f(p + "sa_wk", blk.sa_wk);
      f(p + "sa_wv", blk.sa_wv);
      f(p + "sa_wo", blk.sa_wo);
      for (const Stream s : {Stream::global, Stream::local, Stream::lang}) {
        CrossAttn& c = blk.cross[static_cast<std::size_t>(s)];
        const std::string q = p + "cross." + stream_name(s) + ".";
        f(q + "wq", c.wq);
        f(q + "wk", c.wk);
        f(q + "wv", c.wv);
        f(q + "wo", c.wo);
        f(q + "norm_gain", c.norm_gain);
        f(q + "norm_bias", c.norm_bias);
      }
      f(p + "ffn_gate", blk.ffn_gate);
      f(p + "ffn_up", blk.ffn_up);
      f(p + "ffn_down", blk.ffn_down);
    }
    f("final_adaln_w", final_adaln_w);
    f("final_adaln_b", final_adaln_b);
    f("dec_w1", dec_w1);
    f("dec_b1", dec_b1);
    f("dec_w2", dec_w2);
    f("dec_b2", dec_b2);
    f("dec_w3", dec_w3);
    f("dec_b3", dec_b3);
  }

  template <class F>
  void for_each_tensor(F&& f) const {
    const_cast<Params*>(this)->for_each_tensor(
        [&f](const std::string& name, M& m) { f(name, static_cast<const M&>(m)); });
  }

  void set_zero() {
    for_each_tensor([](const std::string&, M& m) { m.setZero(); });
  }

  std::size_t count() const {
    std::size_t n = 0;
    for_each_tensor([&n](const std::string&, const M& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  std::size_t count_tensors() const {
    std::size_t n = 0;
    for_each_tensor([&n](const std::string&, const M&) { ++n; });
    return n;
  }

  template <class T>
  Params<T> cast() const {
    Params<T> out = Params<T>::zeros_like_shapes(*this);
    auto src = collect_const();
    std::size_t i = 0;
    out.for_each_tensor([&](const std::string&, Mat<T>& m) {
      m = src[i++]->template cast<T>();
    });
    return out;
  }

  static Params zeros_like(const Params& other) {
    Params out = other;
    out.set_zero();
    return out;
  }

  template <class T>
  static Params zeros_like_shapes(const Params<T>& other) {
    Params out;
    std::vector<const Mat<T>*> src;
    other.for_each_tensor([&src](const std::string&, const Mat<T>& m) { src.push_back(&m); });
    out.blocks.resize(other.blocks.size());
    std::size_t i = 0;
    out.for_each_tensor([&](const std::string&, M& m) {
      m.setZero(src[i]->rows(), src[i]->cols());
      ++i;
    });
    return out;
  }

  std::vector<const M*> collect_const() const {
    std::vector<const M*> out;
    for_each_tensor([&out](const std::string&, const M& m) { out.push_back(&m); });
    return out;
  }

  /// Zero-valued parameter set with every tensor shaped for the configs.
  static Params zeros(const DiTConfig& cfg, const EncoderConfig& enc);

  static Params init(const DiTConfig& cfg, const EncoderConfig& enc, std::uint64_t seed);
};

template <class S>
Params<S> Params<S>::zeros(const DiTConfig& cfg, const EncoderConfig& enc) {
  cfg.validate();
  enc.validate();
  if (enc.d_model != cfg.d_model) throw ConfigError("encoder and model widths must agree");

  const int d = cfg.d_model;
  const int dkv = cfg.kv_heads * cfg.head_dim();
  const int ff = cfg.ffn_dim();
  const int pdim = enc.patch * enc.patch * 3;
  const int vocab_rows = static_cast<int>(enc.vocab.size()) + 1;

  Params<S> p;
  p.blocks.resize(static_cast<std::size_t>(cfg.layers));

  auto alloc = [](M& m, int rows, int cols) { m.setZero(rows, cols); };
  alloc(p.patch_proj_w, pdim, d);
  alloc(p.patch_proj_b, d, 1);
  alloc(p.view_emb, 3, d);
  alloc(p.vis_w1, d, d);
  alloc(p.vis_b1, d, 1);
  alloc(p.vis_w2, d, d);
  alloc(p.vis_b2, d, 1);
  alloc(p.lang_embed, vocab_rows, d);
  alloc(p.txt_w1, d, d);
  alloc(p.txt_b1, d, 1);
  alloc(p.txt_w2, d, d);
  alloc(p.txt_b2, d, 1);
  alloc(p.state_w1, cfg.d_s, d);
  alloc(p.state_b1, d, 1);
  alloc(p.state_w2, d, d);
  alloc(p.state_b2, d, 1);
  alloc(p.state_w3, d, d);
  alloc(p.state_b3, d, 1);
  alloc(p.act_w1, cfg.d_a, d);
  alloc(p.act_b1, d, 1);
  alloc(p.act_w2, d, d);
  alloc(p.act_b2, d, 1);
  alloc(p.act_w3, d, d);
  alloc(p.act_b3, d, 1);
  alloc(p.tau_w1, d, d);
  alloc(p.tau_b1, d, 1);
  alloc(p.tau_w2, d, d);
  alloc(p.tau_b2, d, 1);
  for (auto& blk : p.blocks) {
    alloc(blk.adaln_w, d, 6 * d);
    alloc(blk.adaln_b, 6 * d, 1);
    alloc(blk.sa_wq, d, d);
    alloc(blk.sa_wk, d, dkv);
    alloc(blk.sa_wv, d, dkv);
    alloc(blk.sa_wo, d, d);
    for (auto& c : blk.cross) {
      alloc(c.wq, d, d);
      alloc(c.wk, d, dkv);
      alloc(c.wv, d, dkv);
      alloc(c.wo, d, d);
      alloc(c.norm_gain, d, 1);
      alloc(c.norm_bias, d, 1);
    }
    alloc(blk.ffn_gate, d, ff);
    alloc(blk.ffn_up, d, ff);
    alloc(blk.ffn_down, ff, d);
  }
  alloc(p.final_adaln_w, d, 2 * d);
  alloc(p.final_adaln_b, 2 * d, 1);
  alloc(p.dec_w1, d, d);
  alloc(p.dec_b1, d, 1);
  alloc(p.dec_w2, d, d);
  alloc(p.dec_b2, d, 1);
  alloc(p.dec_w3, d, cfg.d_a);
  alloc(p.dec_b3, cfg.d_a, 1);
  return p;
}

template <class S>
Params<S> Params<S>::init(const DiTConfig& cfg, const EncoderConfig& enc, std::uint64_t seed) {
  Params<S> p = Params<S>::zeros(cfg, enc);
  Rng rng(derive_seed(seed, "params.init"));

  const auto fill_normal = [&rng](M& m, double std) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<S>(rng.normal() * std);
    }
  };
  const auto fan_in_init = [&fill_normal](M& m) { fill_normal(m, 1.0 / std::sqrt(double(m.rows()))); };

  fan_in_init(p.patch_proj_w);
  fill_normal(p.view_emb, 0.02);
  fan_in_init(p.vis_w1);
  fan_in_init(p.vis_w2);
  fill_normal(p.lang_embed, 0.02);
  fan_in_init(p.txt_w1);
  fan_in_init(p.txt_w2);
  fan_in_init(p.state_w1);
  fan_in_init(p.state_w2);
  fan_in_init(p.state_w3);
  fan_in_init(p.act_w1);
  fan_in_init(p.act_w2);
  fan_in_init(p.act_w3);
  fan_in_init(p.tau_w1);
  fan_in_init(p.tau_w2);
  for (auto& blk : p.blocks) {
    fan_in_init(blk.sa_wq);
    fan_in_init(blk.sa_wk);
    fan_in_init(blk.sa_wv);
    fan_in_init(blk.sa_wo);
    for (auto& c : blk.cross) {
      fan_in_init(c.wq);
      fan_in_init(c.wk);
      fan_in_init(c.wv);
      c.norm_gain.setOnes();
      // wo stays zero so a fresh block is the identity map.
    }
    fan_in_init(blk.ffn_gate);
    fan_in_init(blk.ffn_up);
    fan_in_init(blk.ffn_down);
  }
  fan_in_init(p.dec_w1);
  fan_in_init(p.dec_w2);
  // adaln, final modulation and the last decoder layer stay zero: the model
  // output is exactly zero at initialization.
  return p;
}

/// Copies every global cross-attention tensor onto the local stream, block by
/// block, so local attention starts from the trained global weights.
template <class S>
void init_local_from_global(Params<S>& p) {
  for (auto& blk : p.blocks) {
    const auto& g = blk.cross[static_cast<std::size_t>(Stream::global)];
    auto& l = blk.cross[static_cast<std::size_t>(Stream::local)];
    if (g.wq.rows() != l.wq.rows() || g.wq.cols() != l.wq.cols()) {
      throw ConfigError("local/global cross-attention shapes differ");
    }
    l.wq = g.wq;
    l.wk = g.wk;
    l.wv = g.wv;
    l.wo = g.wo;
    l.norm_gain = g.norm_gain;
    l.norm_bias = g.norm_bias;
  }
}

}  // namespace hivla::model
