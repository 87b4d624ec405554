#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "hivla/core/errors.hpp"
#include "hivla/model/config.hpp"

namespace hivla::model {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// ---- linear ----------------------------------------------------------------

template <class S>
struct LinearCache {
  Mat<S> x;
};

/// y = x * w + 1 b^T, rows are tokens. b may be empty (no bias).
template <class S>
Mat<S> linear_fwd(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b, LinearCache<S>* cache) {
  if (cache != nullptr) cache->x = x;
  Mat<S> y = x * w;
  if (b.size() > 0) y.rowwise() += b.col(0).transpose();
  return y;
}

template <class S>
Mat<S> linear_bwd(const Mat<S>& dy, const LinearCache<S>& cache, const Mat<S>& w, Mat<S>& dw,
                  Mat<S>& db, bool has_bias) {
  dw.noalias() += cache.x.transpose() * dy;
  if (has_bias) db.col(0) += dy.colwise().sum().transpose();
  return dy * w.transpose();
}

// ---- silu ------------------------------------------------------------------

template <class S>
struct SiluCache {
  Mat<S> x;
};

template <class S>
Mat<S> silu_fwd(const Mat<S>& x, SiluCache<S>* cache) {
  if (cache != nullptr) cache->x = x;
  return x.array() / (S(1) + (-x.array()).exp());
}

template <class S>
Mat<S> silu_bwd(const Mat<S>& dy, const SiluCache<S>& cache) {
  const auto sig = (S(1) + (-cache.x.array()).exp()).inverse();
  return (dy.array() * sig * (S(1) + cache.x.array() * (S(1) - sig))).matrix();
}

// ---- row-wise normalization -------------------------------------------------

template <class S>
struct NormCache {
  Mat<S> xhat;
  Vec<S> inv_std;
  NormKind kind = NormKind::layernorm;
};

/// Non-affine LayerNorm or RMSNorm over each row, eps inside the square root.
template <class S>
Mat<S> norm_fwd(const Mat<S>& x, NormKind kind, NormCache<S>* cache, S eps = S(1e-5)) {
  const auto n = x.cols();
  Mat<S> xhat(x.rows(), n);
  Vec<S> inv(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (kind == NormKind::layernorm) {
      const S mu = x.row(i).mean();
      const auto centered = (x.row(i).array() - mu);
      const S var = centered.square().sum() / S(n);
      inv(i) = S(1) / std::sqrt(var + eps);
      xhat.row(i) = centered * inv(i);
    } else {
      const S ms = x.row(i).array().square().sum() / S(n);
      inv(i) = S(1) / std::sqrt(ms + eps);
      xhat.row(i) = x.row(i) * inv(i);
    }
  }
  if (cache != nullptr) {
    cache->xhat = xhat;
    cache->inv_std = inv;
    cache->kind = kind;
  }
  return xhat;
}

template <class S>
Mat<S> norm_bwd(const Mat<S>& dy, const NormCache<S>& cache) {
  const auto n = cache.xhat.cols();
  Mat<S> dx(cache.xhat.rows(), n);
  for (Eigen::Index i = 0; i < cache.xhat.rows(); ++i) {
    const S dot = (dy.row(i).array() * cache.xhat.row(i).array()).sum() / S(n);
    if (cache.kind == NormKind::layernorm) {
      const S mean_dy = dy.row(i).mean();
      dx.row(i) =
          ((dy.row(i).array() - mean_dy) - cache.xhat.row(i).array() * dot) * cache.inv_std(i);
    } else {
      dx.row(i) = (dy.row(i).array() - cache.xhat.row(i).array() * dot) * cache.inv_std(i);
    }
  }
  return dx;
}

// ---- two/three layer SiLU MLPs ----------------------------------------------

template <class S>
struct Mlp2Cache {
  LinearCache<S> l1, l2;
  SiluCache<S> act;
};

template <class S>
Mat<S> mlp2_fwd(const Mat<S>& x, const Mat<S>& w1, const Mat<S>& b1, const Mat<S>& w2,
                const Mat<S>& b2, Mlp2Cache<S>* cache) {
  Mlp2Cache<S> local;
  Mlp2Cache<S>* c = cache != nullptr ? cache : &local;
  const Mat<S> h = silu_fwd(linear_fwd(x, w1, b1, &c->l1), &c->act);
  return linear_fwd(h, w2, b2, &c->l2);
}

template <class S>
Mat<S> mlp2_bwd(const Mat<S>& dy, const Mlp2Cache<S>& cache, const Mat<S>& w1, const Mat<S>& w2,
                Mat<S>& dw1, Mat<S>& db1, Mat<S>& dw2, Mat<S>& db2) {
  const Mat<S> dh = linear_bwd(dy, cache.l2, w2, dw2, db2, true);
  return linear_bwd(silu_bwd(dh, cache.act), cache.l1, w1, dw1, db1, true);
}

template <class S>
struct Mlp3Cache {
  LinearCache<S> l1, l2, l3;
  SiluCache<S> a1, a2;
};

template <class S>
Mat<S> mlp3_fwd(const Mat<S>& x, const Mat<S>& w1, const Mat<S>& b1, const Mat<S>& w2,
                const Mat<S>& b2, const Mat<S>& w3, const Mat<S>& b3, Mlp3Cache<S>* cache) {
  Mlp3Cache<S> local;
  Mlp3Cache<S>* c = cache != nullptr ? cache : &local;
  const Mat<S> h1 = silu_fwd(linear_fwd(x, w1, b1, &c->l1), &c->a1);
  const Mat<S> h2 = silu_fwd(linear_fwd(h1, w2, b2, &c->l2), &c->a2);
  return linear_fwd(h2, w3, b3, &c->l3);
}

template <class S>
Mat<S> mlp3_bwd(const Mat<S>& dy, const Mlp3Cache<S>& cache, const Mat<S>& w1, const Mat<S>& w2,
                const Mat<S>& w3, Mat<S>& dw1, Mat<S>& db1, Mat<S>& dw2, Mat<S>& db2, Mat<S>& dw3,
                Mat<S>& db3) {
  const Mat<S> dh2 = linear_bwd(dy, cache.l3, w3, dw3, db3, true);
  const Mat<S> dh1 = linear_bwd(silu_bwd(dh2, cache.a2), cache.l2, w2, dw2, db2, true);
  return linear_bwd(silu_bwd(dh1, cache.a1), cache.l1, w1, dw1, db1, true);
}

// ---- grouped-query attention -------------------------------------------------

template <class S>
struct AttentionCache {
  Mat<S> q_in, kv_in;
  Mat<S> q, k, v;
  std::vector<Mat<S>> probs;
  Mat<S> concat;
};

/// Attention with `heads` query heads sharing `kv_heads` key/value heads.
/// q_in: N x d. kv_in: M x d. wq, wo: d x d. wk, wv: d x (kv_heads * head_dim).
template <class S>
Mat<S> attention_fwd(const Mat<S>& q_in, const Mat<S>& kv_in, const Mat<S>& wq, const Mat<S>& wk,
                     const Mat<S>& wv, const Mat<S>& wo, int heads, int kv_heads,
                     AttentionCache<S>* cache) {
  const int d = static_cast<int>(wq.cols());
  const int dh = d / heads;
  const int group = heads / kv_heads;
  const S scale = S(1) / std::sqrt(S(dh));

  AttentionCache<S> local;
  AttentionCache<S>* c = cache != nullptr ? cache : &local;
  c->q_in = q_in;
  c->kv_in = kv_in;
  c->q.noalias() = q_in * wq;
  c->k.noalias() = kv_in * wk;
  c->v.noalias() = kv_in * wv;
  c->probs.assign(static_cast<std::size_t>(heads), Mat<S>());
  c->concat.resize(q_in.rows(), d);

  for (int h = 0; h < heads; ++h) {
    const int g = h / group;
    const auto qh = c->q.middleCols(h * dh, dh);
    const auto kg = c->k.middleCols(g * dh, dh);
    const auto vg = c->v.middleCols(g * dh, dh);
    Mat<S> scores = qh * kg.transpose() * scale;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      const S m = scores.row(i).maxCoeff();
      scores.row(i) = (scores.row(i).array() - m).exp();
      scores.row(i) /= scores.row(i).sum();
    }
    c->probs[static_cast<std::size_t>(h)] = scores;
    c->concat.middleCols(h * dh, dh).noalias() = scores * vg;
  }
  return c->concat * wo;
}

/// Backward pass; accumulates weight gradients, returns dq_in and adds the
/// kv-side gradient into dkv_in (callers pass a zero or accumulating matrix).
template <class S>
Mat<S> attention_bwd(const Mat<S>& dy, const AttentionCache<S>& cache, const Mat<S>& wq,
                     const Mat<S>& wk, const Mat<S>& wv, const Mat<S>& wo, int heads, int kv_heads,
                     Mat<S>& dwq, Mat<S>& dwk, Mat<S>& dwv, Mat<S>& dwo, Mat<S>& dkv_in) {
  const int d = static_cast<int>(wq.cols());
  const int dh = d / heads;
  const int group = heads / kv_heads;
  const S scale = S(1) / std::sqrt(S(dh));

  dwo.noalias() += cache.concat.transpose() * dy;
  const Mat<S> dconcat = dy * wo.transpose();

  Mat<S> dq = Mat<S>::Zero(cache.q.rows(), cache.q.cols());
  Mat<S> dk = Mat<S>::Zero(cache.k.rows(), cache.k.cols());
  Mat<S> dv = Mat<S>::Zero(cache.v.rows(), cache.v.cols());

  for (int h = 0; h < heads; ++h) {
    const int g = h / group;
    const Mat<S>& p = cache.probs[static_cast<std::size_t>(h)];
    const auto qh = cache.q.middleCols(h * dh, dh);
    const auto kg = cache.k.middleCols(g * dh, dh);
    const auto vg = cache.v.middleCols(g * dh, dh);
    const auto doh = dconcat.middleCols(h * dh, dh);

    dv.middleCols(g * dh, dh).noalias() += p.transpose() * doh;
    Mat<S> dp = doh * vg.transpose();
    Mat<S> ds(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const S dot = (dp.row(i).array() * p.row(i).array()).sum();
      ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
    }
    ds *= scale;
    dq.middleCols(h * dh, dh).noalias() += ds * kg;
    dk.middleCols(g * dh, dh).noalias() += ds.transpose() * qh;
  }

  dwq.noalias() += cache.q_in.transpose() * dq;
  dwk.noalias() += cache.kv_in.transpose() * dk;
  dwv.noalias() += cache.kv_in.transpose() * dv;
  dkv_in.noalias() += dk * wk.transpose() + dv * wv.transpose();
  return dq * wq.transpose();
}

}  // namespace hivla::model
