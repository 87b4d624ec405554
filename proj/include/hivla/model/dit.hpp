#pragma once

#include <array>
#include <vector>

#include "hivla/model/params.hpp"
#include "hivla/model/pe.hpp"

namespace hivla::model {

/// Conditioning inputs for one denoising call: token matrices per stream
/// (zero rows = stream absent) and the proprioceptive state vector.
template <class S>
struct ConditioningContext {
  Mat<S> global, local, lang;
  Vec<S> state;

  const Mat<S>& stream_tokens(Stream s) const {
    switch (s) {
      case Stream::global: return global;
      case Stream::local: return local;
      case Stream::lang: return lang;
    }
    throw ConfigError("unknown stream");
  }
  Mat<S>& stream_tokens(Stream s) {
    return const_cast<Mat<S>&>(static_cast<const ConditioningContext*>(this)->stream_tokens(s));
  }
  bool has(Stream s) const { return stream_tokens(s).rows() > 0; }
};

/// Gradients with respect to the conditioning inputs, mirrored shapes.
template <class S>
struct ConditioningGrads {
  Mat<S> global, local, lang;
  Vec<S> state;

  static ConditioningGrads zeros_like(const ConditioningContext<S>& ctx) {
    ConditioningGrads g;
    g.global.setZero(ctx.global.rows(), ctx.global.cols());
    g.local.setZero(ctx.local.rows(), ctx.local.cols());
    g.lang.setZero(ctx.lang.rows(), ctx.lang.cols());
    g.state.setZero(ctx.state.size());
    return g;
  }
  Mat<S>& stream_tokens(Stream s) {
    switch (s) {
      case Stream::global: return global;
      case Stream::local: return local;
      case Stream::lang: return lang;
    }
    throw ConfigError("unknown stream");
  }
};

/// Precomputed cross-attention keys/values for every block and stream, used
/// to avoid re-projecting static context tokens at each ODE step.
template <class S>
struct CrossKV {
  std::vector<std::array<std::pair<Mat<S>, Mat<S>>, 3>> per_block;
};

template <class S>
CrossKV<S> build_cross_kv(const ConditioningContext<S>& ctx, const Params<S>& p,
                          const DiTConfig& cfg) {
  CrossKV<S> out;
  out.per_block.resize(p.blocks.size());
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    for (const Stream s : cfg.ordering) {
      const auto& c = p.blocks[b].cross[static_cast<std::size_t>(s)];
      const Mat<S>& toks = ctx.stream_tokens(s);
      auto& kv = out.per_block[b][static_cast<std::size_t>(s)];
      kv.first.noalias() = toks * c.wk;
      kv.second.noalias() = toks * c.wv;
    }
  }
  return out;
}

template <class S>
struct BlockCache {
  LinearCache<S> adaln;
  Mat<S> adaln_out;  // 1 x 6d
  NormCache<S> n1;
  AttentionCache<S> sa;
  Mat<S> sa_out;
  std::vector<NormCache<S>> cross_norm;
  std::vector<AttentionCache<S>> cross_attn;
  NormCache<S> n2;
  Mat<S> ffn_in, ffn_gate_pre, ffn_up_out, ffn_gate_act, ffn_hidden, ffn_out;
  SiluCache<S> ffn_silu;
};

template <class S>
struct DitCache {
  Mlp2Cache<S> tau_mlp;
  SiluCache<S> tau_act;
  Mat<S> c_act;  // 1 x d
  Mlp3Cache<S> state_mlp;
  Mlp3Cache<S> act_mlp;
  std::vector<BlockCache<S>> blocks;
  NormCache<S> final_norm;
  LinearCache<S> final_adaln;
  Mat<S> final_mod_out;  // 1 x 2d
  Mlp3Cache<S> dec;
  int horizon = 0;
};

namespace detail {

template <class S>
void attend_rows(Mat<S>& h, const Mat<S>& add, const Eigen::RowVectorX<S>& gate) {
  h.array() += add.array().rowwise() * gate.array();
}

}  // namespace detail

/// Velocity prediction for one sample. x_tau: horizon x d_a noisy actions,
/// tau in [0, 1]. When `cache` is given every intermediate needed by
/// dit_backward is stored. `kv` optionally supplies precomputed cross K/V
/// (sampling fast path; ignored when cache is set).
template <class S>
Mat<S> dit_forward(const Mat<S>& x_tau, S tau, const ConditioningContext<S>& ctx,
                   const Params<S>& p, const DiTConfig& cfg, DitCache<S>* cache,
                   const CrossKV<S>* kv = nullptr) {
  if (x_tau.rows() != cfg.horizon || x_tau.cols() != cfg.d_a) {
    throw ConfigError("x_tau must be horizon x d_a");
  }
  if (ctx.state.size() != cfg.d_s) throw ConfigError("state vector must have d_s entries");
  for (const Stream s : cfg.ordering) {
    if (!ctx.has(s)) {
      throw ConfigError(std::string("ordering requires missing stream: ") + stream_name(s));
    }
  }
  const int d = cfg.d_model;
  const int H = cfg.horizon;

  DitCache<S> local;
  DitCache<S>* c = cache != nullptr ? cache : &local;
  const bool fast = cache == nullptr;
  c->horizon = H;
  c->blocks.resize(p.blocks.size());

  // Flow-time conditioning vector.
  const Mat<S> tau_sin = timestep_embedding(static_cast<double>(tau), d).transpose().template cast<S>();
  const Mat<S> tau_h = mlp2_fwd(tau_sin, p.tau_w1, p.tau_b1, p.tau_w2, p.tau_b2, &c->tau_mlp);
  c->c_act = silu_fwd(tau_h, &c->tau_act);

  // Token sequence: one state token, then horizon action tokens.
  const Mat<S> state_row = ctx.state.transpose();
  const Mat<S> s_tok = mlp3_fwd(state_row, p.state_w1, p.state_b1, p.state_w2, p.state_b2,
                                p.state_w3, p.state_b3, &c->state_mlp);
  Mat<S> a_tok = mlp3_fwd(x_tau, p.act_w1, p.act_b1, p.act_w2, p.act_b2, p.act_w3, p.act_b3,
                          &c->act_mlp);
  a_tok += sinusoidal_pe_1d(H, d).template cast<S>();

  Mat<S> h(H + 1, d);
  h.row(0) = s_tok.row(0);
  h.bottomRows(H) = a_tok;

  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& blk = p.blocks[b];
    BlockCache<S>& bc = c->blocks[b];

    bc.adaln_out = linear_fwd(c->c_act, blk.adaln_w, blk.adaln_b, &bc.adaln);
    const auto seg = [&bc, d](int i) { return bc.adaln_out.row(0).segment(i * d, d); };
    const Eigen::RowVectorX<S> g1 = seg(0), b1 = seg(1), gate1 = seg(2);
    const Eigen::RowVectorX<S> g2 = seg(3), b2 = seg(4), gate2 = seg(5);

    // Self-attention with AdaLN modulation and zero-init gate.
    Mat<S> u = norm_fwd(h, cfg.norm_kind, &bc.n1);
    u = ((u.array().rowwise() * (g1.array() + S(1))).rowwise() + b1.array()).matrix();
    bc.sa_out = attention_fwd(u, u, blk.sa_wq, blk.sa_wk, blk.sa_wv, blk.sa_wo, cfg.heads,
                              cfg.kv_heads, fast ? nullptr : &bc.sa);
    detail::attend_rows(h, bc.sa_out, gate1);

    // Cascaded cross-attention in configured order.
    bc.cross_norm.resize(cfg.ordering.size());
    bc.cross_attn.resize(cfg.ordering.size());
    for (std::size_t oi = 0; oi < cfg.ordering.size(); ++oi) {
      const Stream s = cfg.ordering[oi];
      const auto& cw = blk.cross[static_cast<std::size_t>(s)];
      Mat<S> q = norm_fwd(h, cfg.norm_kind, &bc.cross_norm[oi]);
      q = ((q.array().rowwise() * cw.norm_gain.col(0).transpose().array()).rowwise() +
           cw.norm_bias.col(0).transpose().array())
              .matrix();
      if (fast && kv != nullptr) {
        const auto& kvp = kv->per_block[b][static_cast<std::size_t>(s)];
        const int dh = cfg.head_dim();
        const int group = cfg.heads / cfg.kv_heads;
        const S scale = S(1) / std::sqrt(S(dh));
        const Mat<S> qm = q * cw.wq;
        Mat<S> concat(q.rows(), d);
        for (int hh = 0; hh < cfg.heads; ++hh) {
          const int g = hh / group;
          Mat<S> scores = qm.middleCols(hh * dh, dh) * kvp.first.middleCols(g * dh, dh).transpose() * scale;
          for (Eigen::Index i = 0; i < scores.rows(); ++i) {
            const S m = scores.row(i).maxCoeff();
            scores.row(i) = (scores.row(i).array() - m).exp();
            scores.row(i) /= scores.row(i).sum();
          }
          concat.middleCols(hh * dh, dh).noalias() = scores * kvp.second.middleCols(g * dh, dh);
        }
        h += concat * cw.wo;
      } else {
        h += attention_fwd(q, ctx.stream_tokens(s), cw.wq, cw.wk, cw.wv, cw.wo, cfg.heads,
                           cfg.kv_heads, fast ? nullptr : &bc.cross_attn[oi]);
      }
    }

    // SwiGLU feed-forward with AdaLN modulation and zero-init gate.
    Mat<S> v = norm_fwd(h, cfg.norm_kind, &bc.n2);
    v = ((v.array().rowwise() * (g2.array() + S(1))).rowwise() + b2.array()).matrix();
    bc.ffn_in = v;
    bc.ffn_gate_pre.noalias() = v * blk.ffn_gate;
    bc.ffn_up_out.noalias() = v * blk.ffn_up;
    bc.ffn_gate_act = silu_fwd(bc.ffn_gate_pre, fast ? nullptr : &bc.ffn_silu);
    bc.ffn_hidden = bc.ffn_gate_act.cwiseProduct(bc.ffn_up_out);
    bc.ffn_out.noalias() = bc.ffn_hidden * blk.ffn_down;
    detail::attend_rows(h, bc.ffn_out, gate2);
  }

  // Final modulated norm and 3-layer decoder over action tokens.
  Mat<S> xh = norm_fwd(h, cfg.norm_kind, &c->final_norm);
  c->final_mod_out = linear_fwd(c->c_act, p.final_adaln_w, p.final_adaln_b, &c->final_adaln);
  const Eigen::RowVectorX<S> gf = c->final_mod_out.row(0).segment(0, d);
  const Eigen::RowVectorX<S> bf = c->final_mod_out.row(0).segment(d, d);
  xh = ((xh.array().rowwise() * (gf.array() + S(1))).rowwise() + bf.array()).matrix();

  return mlp3_fwd(Mat<S>(xh.bottomRows(H)), p.dec_w1, p.dec_b1, p.dec_w2, p.dec_b2, p.dec_w3,
                  p.dec_b3, &c->dec);
}

/// Reverse-mode gradients for one sample. Accumulates into `g` (parameter
/// gradients) and `dctx` (conditioning gradients); returns d loss / d x_tau.
template <class S>
Mat<S> dit_backward(const Mat<S>& dout, const DitCache<S>& c, const ConditioningContext<S>& ctx,
                    const Params<S>& p, const DiTConfig& cfg, Params<S>& g,
                    ConditioningGrads<S>* dctx) {
  const int d = cfg.d_model;
  const int H = c.horizon;

  Mat<S> dc_act = Mat<S>::Zero(1, d);

  // Decoder and final modulation.
  const Mat<S> dxh_actions = mlp3_bwd(dout, c.dec, p.dec_w1, p.dec_w2, p.dec_w3, g.dec_w1, g.dec_b1,
                                      g.dec_w2, g.dec_b2, g.dec_w3, g.dec_b3);
  Mat<S> dmod = Mat<S>::Zero(H + 1, d);
  dmod.bottomRows(H) = dxh_actions;

  const Eigen::RowVectorX<S> gf = c.final_mod_out.row(0).segment(0, d);
  const Mat<S>& xh_final = c.final_norm.xhat;
  Mat<S> dfinal_row(1, 2 * d);
  dfinal_row.row(0).segment(0, d) = (dmod.array() * xh_final.array()).colwise().sum().matrix();
  dfinal_row.row(0).segment(d, d) = dmod.colwise().sum();
  dc_act += linear_bwd(dfinal_row, c.final_adaln, p.final_adaln_w, g.final_adaln_w, g.final_adaln_b,
                       true);
  const Mat<S> dxh = (dmod.array().rowwise() * (gf.array() + S(1))).matrix();
  Mat<S> dh = norm_bwd(dxh, c.final_norm);

  for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
    const auto& blk = p.blocks[bi];
    const BlockCache<S>& bc = c.blocks[bi];
    auto& gblk = g.blocks[bi];
    const auto seg = [&bc, d](int i) { return bc.adaln_out.row(0).segment(i * d, d); };
    const Eigen::RowVectorX<S> g1 = seg(0), gate1 = seg(2);
    const Eigen::RowVectorX<S> g2 = seg(3), gate2 = seg(5);
    Mat<S> dadaln = Mat<S>::Zero(1, 6 * d);

    // FFN branch.
    {
      const Mat<S> dffn_out = (dh.array().rowwise() * gate2.array()).matrix();
      dadaln.row(0).segment(5 * d, d) = (dh.array() * bc.ffn_out.array()).colwise().sum().matrix();
      gblk.ffn_down.noalias() += bc.ffn_hidden.transpose() * dffn_out;
      const Mat<S> dhidden = dffn_out * blk.ffn_down.transpose();
      const Mat<S> dup = dhidden.cwiseProduct(bc.ffn_gate_act);
      const Mat<S> dgate_act = dhidden.cwiseProduct(bc.ffn_up_out);
      const Mat<S> dgate_pre = silu_bwd(dgate_act, bc.ffn_silu);
      gblk.ffn_up.noalias() += bc.ffn_in.transpose() * dup;
      gblk.ffn_gate.noalias() += bc.ffn_in.transpose() * dgate_pre;
      const Mat<S> dv = dup * blk.ffn_up.transpose() + dgate_pre * blk.ffn_gate.transpose();
      dadaln.row(0).segment(3 * d, d) = (dv.array() * bc.n2.xhat.array()).colwise().sum().matrix();
      dadaln.row(0).segment(4 * d, d) = dv.colwise().sum();
      const Mat<S> dxhat2 = (dv.array().rowwise() * (g2.array() + S(1))).matrix();
      dh += norm_bwd(dxhat2, bc.n2);
    }

    // Cross-attention branches, reverse order.
    for (std::size_t oi = cfg.ordering.size(); oi-- > 0;) {
      const Stream s = cfg.ordering[oi];
      const auto& cw = blk.cross[static_cast<std::size_t>(s)];
      auto& gcw = gblk.cross[static_cast<std::size_t>(s)];
      Mat<S> dctx_tokens = Mat<S>::Zero(ctx.stream_tokens(s).rows(), d);
      const Mat<S> dq_aff = attention_bwd(dh, bc.cross_attn[oi], cw.wq, cw.wk, cw.wv, cw.wo,
                                          cfg.heads, cfg.kv_heads, gcw.wq, gcw.wk, gcw.wv, gcw.wo,
                                          dctx_tokens);
      if (dctx != nullptr) dctx->stream_tokens(s) += dctx_tokens;
      gcw.norm_gain.col(0) +=
          (dq_aff.array() * bc.cross_norm[oi].xhat.array()).colwise().sum().matrix().transpose();
      gcw.norm_bias.col(0) += dq_aff.colwise().sum().transpose();
      const Mat<S> dxhat =
          (dq_aff.array().rowwise() * cw.norm_gain.col(0).transpose().array()).matrix();
      dh += norm_bwd(dxhat, bc.cross_norm[oi]);
    }

    // Self-attention branch.
    {
      const Mat<S> dsa = (dh.array().rowwise() * gate1.array()).matrix();
      dadaln.row(0).segment(2 * d, d) = (dh.array() * bc.sa_out.array()).colwise().sum().matrix();
      Mat<S> du_kv = Mat<S>::Zero(dh.rows(), d);
      const Mat<S> du_q = attention_bwd(dsa, bc.sa, blk.sa_wq, blk.sa_wk, blk.sa_wv, blk.sa_wo,
                                        cfg.heads, cfg.kv_heads, gblk.sa_wq, gblk.sa_wk, gblk.sa_wv,
                                        gblk.sa_wo, du_kv);
      const Mat<S> du = du_q + du_kv;
      dadaln.row(0).segment(0, d) = (du.array() * bc.n1.xhat.array()).colwise().sum().matrix();
      dadaln.row(0).segment(d, d) = du.colwise().sum();
      const Mat<S> dxhat1 = (du.array().rowwise() * (g1.array() + S(1))).matrix();
      dh += norm_bwd(dxhat1, bc.n1);
    }

    dc_act += linear_bwd(dadaln, bc.adaln, blk.adaln_w, gblk.adaln_w, gblk.adaln_b, true);
  }

  // Token adapters.
  const Mat<S> ds_tok = dh.topRows(1);
  const Mat<S> da_tok = dh.bottomRows(H);
  const Mat<S> dstate_row = mlp3_bwd(ds_tok, c.state_mlp, p.state_w1, p.state_w2, p.state_w3,
                                     g.state_w1, g.state_b1, g.state_w2, g.state_b2, g.state_w3,
                                     g.state_b3);
  if (dctx != nullptr) dctx->state += dstate_row.row(0).transpose();
  const Mat<S> dx_tau = mlp3_bwd(da_tok, c.act_mlp, p.act_w1, p.act_w2, p.act_w3, g.act_w1,
                                 g.act_b1, g.act_w2, g.act_b2, g.act_w3, g.act_b3);

  // Flow-time pathway.
  const Mat<S> dtau_h = silu_bwd(dc_act, c.tau_act);
  mlp2_bwd(dtau_h, c.tau_mlp, p.tau_w1, p.tau_w2, g.tau_w1, g.tau_b1, g.tau_w2, g.tau_b2);

  return dx_tau;
}

}  // namespace hivla::model
