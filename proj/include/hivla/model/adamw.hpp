#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "hivla/core/errors.hpp"
#include "hivla/model/params.hpp"

namespace hivla::model {

/// AdamW hyperparameters. Weight decay is decoupled (applied directly to the
/// parameter, not mixed into the moment estimates) and skipped for biases,
/// norm gains, and embedding tables.
struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  int warmup_steps = 100;  ///< linear learning-rate ramp, 0 disables
  double clip_norm = 1.0;  ///< global gradient-norm ceiling, 0 disables

  void validate() const {
    if (lr <= 0) throw ConfigError("adamw: lr must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ConfigError("adamw: betas must lie in [0, 1)");
    if (eps <= 0) throw ConfigError("adamw: eps must be positive");
    if (weight_decay < 0) throw ConfigError("adamw: weight_decay must be non-negative");
    if (warmup_steps < 0) throw ConfigError("adamw: warmup_steps must be non-negative");
    if (clip_norm < 0) throw ConfigError("adamw: clip_norm must be non-negative");
  }
};

/// Whether weight decay applies to the named tensor. Column vectors are
/// biases or norm gains; embedding tables are lookup rows; neither benefits
/// from shrinkage toward zero.
inline bool adamw_decays(const std::string& name, Eigen::Index cols) {
  if (cols == 1) return false;
  return name.find("emb") == std::string::npos;
}

/// AdamW with linear warmup and global gradient-norm clipping. Moment tensors
/// mirror the parameter layout so optimizer state can be checkpointed through
/// the same named-tensor walk as the weights.
template <typename S>
class AdamW {
 public:
  AdamW(const Params<S>& shape, const AdamWConfig& cfg)
      : cfg_(cfg), m_(Params<S>::zeros_like(shape)), v_(Params<S>::zeros_like(shape)) {
    cfg_.validate();
  }

  /// Applies one update in place. `grads` is modified when clipping engages.
  /// Returns the pre-clip global gradient norm.
  double step(Params<S>& params, Params<S>& grads) {
    double sq = 0.0;
    grads.for_each_tensor([&](const std::string&, Mat<S>& g) {
      sq += static_cast<double>(g.template cast<double>().squaredNorm());
    });
    const double norm = std::sqrt(sq);
    if (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) {
      const S scale = static_cast<S>(cfg_.clip_norm / norm);
      grads.for_each_tensor([&](const std::string&, Mat<S>& g) { g *= scale; });
    }

    ++t_;
    const double warm = cfg_.warmup_steps > 0
                            ? std::min(1.0, static_cast<double>(t_) / cfg_.warmup_steps)
                            : 1.0;
    const S lr = static_cast<S>(cfg_.lr * warm);
    const S b1 = static_cast<S>(cfg_.beta1);
    const S b2 = static_cast<S>(cfg_.beta2);
    const S eps = static_cast<S>(cfg_.eps);
    const S bc1 = S(1) - static_cast<S>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const S bc2 = S(1) - static_cast<S>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    const S wd = static_cast<S>(cfg_.weight_decay);

    auto pm = collect(params);
    auto gm = collect(grads);
    auto mm = collect(m_);
    auto vm = collect(v_);
    for (std::size_t i = 0; i < pm.size(); ++i) {
      Mat<S>& p = *pm[i].second;
      const Mat<S>& g = *gm[i].second;
      Mat<S>& m = *mm[i].second;
      Mat<S>& v = *vm[i].second;
      if (p.rows() != g.rows() || p.cols() != g.cols())
        throw ConfigError("adamw: gradient shape mismatch at " + pm[i].first);
      m = b1 * m + (S(1) - b1) * g;
      v = (b2 * v.array() + (S(1) - b2) * g.array().square()).matrix();
      const Mat<S> update =
          ((m.array() / bc1) / ((v.array() / bc2).sqrt() + eps)).matrix();
      if (wd > S(0) && adamw_decays(pm[i].first, p.cols())) p -= lr * wd * p;
      p -= lr * update;
    }
    return norm;
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  Params<S>& first_moment() { return m_; }
  Params<S>& second_moment() { return v_; }
  const Params<S>& first_moment() const { return m_; }
  const Params<S>& second_moment() const { return v_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  static std::vector<std::pair<std::string, Mat<S>*>> collect(Params<S>& p) {
    std::vector<std::pair<std::string, Mat<S>*>> out;
    p.for_each_tensor([&](const std::string& n, Mat<S>& t) { out.push_back({n, &t}); });
    return out;
  }

  AdamWConfig cfg_;
  Params<S> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace hivla::model
