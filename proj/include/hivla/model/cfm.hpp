#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "hivla/core/action_space.hpp"
#include "hivla/core/errors.hpp"
#include "hivla/core/image.hpp"
#include "hivla/core/rng.hpp"
#include "hivla/model/dit.hpp"
#include "hivla/model/encoders.hpp"
#include "hivla/plan/crop.hpp"

namespace hivla::model {

/// Conditional flow matching over action chunks. Training regresses the
/// constant velocity field (target - noise) along the straight path
/// x_tau = tau * target + (1 - tau) * noise; sampling integrates the learned
/// field from pure noise at tau = 0 to an action chunk at tau = 1 with
/// forward Euler steps.

/// Linear interpolant between noise (tau = 0) and target (tau = 1).
template <typename S>
Mat<S> cfm_interpolate(const Mat<S>& target, const Mat<S>& noise, S tau) {
  if (target.rows() != noise.rows() || target.cols() != noise.cols())
    throw ConfigError("cfm_interpolate: target/noise shape mismatch");
  if (!(tau >= S(0) && tau <= S(1))) throw ConfigError("cfm_interpolate: tau outside [0, 1]");
  return tau * target + (S(1) - tau) * noise;
}

/// Velocity regression target along the straight path; independent of tau.
template <typename S>
Mat<S> target_vector_field(const Mat<S>& target, const Mat<S>& noise) {
  if (target.rows() != noise.rows() || target.cols() != noise.cols())
    throw ConfigError("target_vector_field: target/noise shape mismatch");
  return target - noise;
}

/// Forward Euler from tau = 0 to tau = 1 in `steps` uniform increments.
/// `field(x, tau)` must return dx/dtau with the shape of x. Because the
/// regression target is constant along the path, an exactly learned field
/// makes this integrator exact for any step count.
template <typename S, typename Field>
Mat<S> euler_integrate(Mat<S> x, int steps, Field&& field) {
  if (steps < 1) throw ConfigError("euler_integrate: steps must be >= 1");
  const S dt = S(1) / S(steps);
  for (int k = 0; k < steps; ++k) {
    const S tau = S(k) / S(steps);
    const Mat<S> v = field(static_cast<const Mat<S>&>(x), tau);
    if (v.rows() != x.rows() || v.cols() != x.cols())
      throw RuntimeError("euler_integrate: field returned wrong shape");
    x += dt * v;
  }
  return x;
}

/// Integrates an externally supplied velocity field from the given noise.
/// The acceptance check injects the oracle field here to confirm the
/// integrator recovers the target exactly.
template <typename S, typename Field>
Mat<S> sample_actions(const Mat<S>& noise, int steps, Field&& field) {
  return euler_integrate<S>(noise, steps, std::forward<Field>(field));
}

/// Integrates the learned model field, reusing cross-attention K/V across all
/// Euler steps (the conditioning tokens do not change along the path).
template <typename S>
Mat<S> sample_actions(const ConditioningContext<S>& ctx, const Params<S>& p, const DiTConfig& cfg,
                      const Mat<S>& noise, int steps = 0) {
  if (steps == 0) steps = cfg.ode_steps;
  const CrossKV<S> kv = build_cross_kv(ctx, p, cfg);
  return euler_integrate<S>(noise, steps, [&](const Mat<S>& x, S tau) {
    return dit_forward<S>(x, tau, ctx, p, cfg, nullptr, &kv);
  });
}

/// Gaussian noise chunk with the model's horizon/action shape.
template <typename S>
Mat<S> draw_noise(int horizon, int d_a, Rng& rng) {
  Mat<S> z(horizon, d_a);
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = static_cast<S>(rng.normal());
  return z;
}

/// Raw observation bundle for one decision point, before encoding.
struct ModelInputs {
  Image global_image;          ///< low-res global view
  Image wrist_image;           ///< gripper-centered view
  plan::CropResult crop;       ///< local crop of the planner's bbox
  std::vector<int> token_ids;  ///< tokenized subtask description
  Eigen::VectorXd state;       ///< proprioceptive vector, d_s entries
};

/// Caches from the three stream encoders for one decision point.
template <typename S>
struct ContextCache {
  GlobalEncodeCache<S> global;
  LocalEncodeCache<S> local;
  LangEncodeCache<S> lang;
};

/// Runs all three stream encoders and assembles the conditioning context.
template <typename S>
ConditioningContext<S> encode_context(const ModelInputs& in, const Params<S>& p,
                                      const EncoderConfig& cfg, ContextCache<S>* cache) {
  ContextCache<S> local_cache;
  ContextCache<S>* c = cache ? cache : &local_cache;
  ConditioningContext<S> ctx;
  ctx.global = encode_global(in.global_image, in.wrist_image, p, cfg, &c->global).tokens;
  ctx.local = encode_local(in.crop, p, cfg, &c->local).tokens;
  ctx.lang = encode_language(in.token_ids, p, cfg, &c->lang).tokens;
  ctx.state = in.state.template cast<S>();
  return ctx;
}

/// Routes conditioning-token gradients back through the stream encoders.
template <typename S>
void encode_context_bwd(const ConditioningGrads<S>& dctx, const ContextCache<S>& cache,
                        const Params<S>& p, Params<S>& g) {
  encode_global_bwd(dctx.global, cache.global, p, g);
  encode_local_bwd(dctx.local, cache.local, p, g);
  encode_language_bwd(dctx.lang, cache.lang, p, g);
}

/// Flow-matching loss for one sample at a fixed (tau, noise) pair:
///   L = mean over all H*d_a entries of (v_theta(x_tau) - (target - noise))^2.
/// When `grads` is non-null, gradients of L with respect to every parameter
/// (encoders included) are accumulated into it. Deterministic given its
/// arguments, which makes it directly checkable by finite differences.
template <typename S>
S flow_loss_sample(const ModelInputs& in, const Mat<S>& target, S tau, const Mat<S>& noise,
                   const Params<S>& p, const DiTConfig& cfg, const EncoderConfig& enc,
                   Params<S>* grads) {
  if (target.rows() != cfg.horizon || target.cols() != cfg.d_a)
    throw ConfigError("flow_loss_sample: target must be horizon x d_a");
  ContextCache<S> ecache;
  const ConditioningContext<S> ctx = encode_context(in, p, enc, &ecache);
  const Mat<S> x_tau = cfm_interpolate(target, noise, tau);
  const Mat<S> field = target_vector_field(target, noise);
  const S inv_n = S(1) / S(target.size());

  if (!grads) {
    const Mat<S> v = dit_forward<S>(x_tau, tau, ctx, p, cfg, nullptr, nullptr);
    return (v - field).squaredNorm() * inv_n;
  }
  DitCache<S> cache;
  const Mat<S> v = dit_forward<S>(x_tau, tau, ctx, p, cfg, &cache, nullptr);
  const Mat<S> resid = v - field;
  const Mat<S> dout = S(2) * inv_n * resid;
  ConditioningGrads<S> dctx = ConditioningGrads<S>::zeros_like(ctx);
  dit_backward<S>(dout, cache, ctx, p, cfg, *grads, &dctx);
  encode_context_bwd(dctx, ecache, p, *grads);
  return resid.squaredNorm() * inv_n;
}

/// One training example: observations plus the supervised action chunk.
template <typename S>
struct FlowSample {
  const ModelInputs* inputs = nullptr;
  Mat<S> target;
};

/// Mean flow-matching loss over a batch, drawing tau ~ U[0,1) and noise ~
/// N(0,1) per sample from `rng`. `grads` must arrive zeroed; on return it
/// holds the batch-averaged gradient. Pass null to skip the backward pass.
template <typename S>
S flow_loss_batch(const std::vector<FlowSample<S>>& batch, const Params<S>& p,
                  const DiTConfig& cfg, const EncoderConfig& enc, Rng& rng, Params<S>* grads) {
  if (batch.empty()) throw ConfigError("flow_loss_batch: empty batch");
  S total = S(0);
  for (const FlowSample<S>& s : batch) {
    if (!s.inputs) throw ConfigError("flow_loss_batch: null inputs");
    const S tau = static_cast<S>(rng.uniform());
    const Mat<S> noise = draw_noise<S>(cfg.horizon, cfg.d_a, rng);
    total += flow_loss_sample(*s.inputs, s.target, tau, noise, p, cfg, enc, grads);
  }
  const S inv_b = S(1) / S(batch.size());
  if (grads)
    grads->for_each_tensor([&](const std::string&, Mat<S>& t) { t *= inv_b; });
  return total * inv_b;
}

/// Encodes raw inputs, samples one chunk from the learned flow, and clamps it
/// to the action limits. Returns a double-precision chunk ready for the
/// environment regardless of the model scalar.
template <typename S>
Eigen::MatrixXd sample_action_chunk(const ModelInputs& in, const Params<S>& p, const DiTConfig& cfg,
                                    const EncoderConfig& enc, const ActionSpace& space, Rng& rng,
                                    int steps = 0) {
  ContextCache<S> ecache;
  const ConditioningContext<S> ctx = encode_context(in, p, enc, &ecache);
  const Mat<S> noise = draw_noise<S>(cfg.horizon, cfg.d_a, rng);
  const Mat<S> chunk = sample_actions(ctx, p, cfg, noise, steps);
  Eigen::MatrixXd out = chunk.template cast<double>();
  space.clamp_chunk(out);
  return out;
}

}  // namespace hivla::model
