#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "hivla/core/action_space.hpp"
#include "hivla/core/errors.hpp"
#include "hivla/core/rng.hpp"
#include "hivla/model/cfm.hpp"
#include "hivla/model/params.hpp"
#include "hivla/plan/crop.hpp"

using namespace hivla;
using namespace hivla::model;

namespace {

DiTConfig tiny_dit() {
  DiTConfig cfg;
  cfg.d_model = 32;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.kv_heads = 1;
  cfg.horizon = 4;
  cfg.d_a = 3;
  cfg.d_s = 3;
  cfg.ode_steps = 5;
  return cfg;
}

EncoderConfig tiny_enc() {
  EncoderConfig enc;
  enc.d_model = 32;
  enc.patch = 8;
  enc.crop_side = 32;
  enc.vocab = default_vocab();
  return enc;
}

Image noise_image(int w, int h, std::uint64_t seed) {
  Image img(w, h);
  Rng r(seed);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      img.r(i, j) = static_cast<float>(r.uniform());
      img.g(i, j) = static_cast<float>(r.uniform());
      img.b(i, j) = static_cast<float>(r.uniform());
    }
  return img;
}

ModelInputs sample_inputs(const EncoderConfig& enc, std::uint64_t seed) {
  ModelInputs in;
  in.global_image = noise_image(32, 16, seed);
  in.wrist_image = noise_image(16, 16, seed + 1);
  const Image hd = noise_image(64, 64, seed + 2);
  in.crop = plan::crop_image(hd, {200, 150, 800, 700}, enc.crop_side, enc.patch);
  in.token_ids = {1, 4, 2};
  in.state = Eigen::VectorXd::LinSpaced(3, 0.2, 0.8);
  return in;
}

template <class S>
Mat<S> random_chunk(int h, int w, Rng& rng, double scale = 1.0) {
  Mat<S> m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(scale * rng.normal());
  return m;
}

template <class S>
void jitter_params(Params<S>& p, std::uint64_t seed, double scale = 0.05) {
  Rng rng(seed);
  p.for_each_tensor([&](const std::string&, Mat<S>& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += static_cast<S>(scale * rng.normal());
  });
}

}  // namespace

TEST_CASE("interpolant hits both endpoints and stays affine") {
  Rng rng(1);
  const Mat<double> a = random_chunk<double>(4, 3, rng);
  const Mat<double> z = random_chunk<double>(4, 3, rng);
  CHECK(cfm_interpolate<double>(a, z, 0.0) == z);
  CHECK(cfm_interpolate<double>(a, z, 1.0) == a);
  const Mat<double> mid = cfm_interpolate<double>(a, z, 0.5);
  CHECK((mid - 0.5 * (a + z)).cwiseAbs().maxCoeff() < 1e-15);
  // Affine in tau: x(0.25) = 0.5*(x(0) + x(0.5)).
  const Mat<double> q = cfm_interpolate<double>(a, z, 0.25);
  CHECK((q - 0.5 * (z + mid)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS((void)cfm_interpolate<double>(a, z, 1.5), ConfigError);
  CHECK_THROWS_AS((void)cfm_interpolate<double>(a, z, -0.1), ConfigError);
  CHECK_THROWS_AS((void)cfm_interpolate<double>(a, random_chunk<double>(3, 3, rng), 0.5),
                  ConfigError);
}

TEST_CASE("regression target is the straight-path velocity") {
  Rng rng(2);
  const Mat<double> a = random_chunk<double>(4, 3, rng);
  const Mat<double> z = random_chunk<double>(4, 3, rng);
  CHECK(target_vector_field<double>(a, z) == Mat<double>(a - z));
  // Consistency: d/dtau of the interpolant equals the target field.
  const double h = 1e-7;
  const Mat<double> fd =
      (cfm_interpolate<double>(a, z, 0.5 + h) - cfm_interpolate<double>(a, z, 0.5 - h)) / (2 * h);
  CHECK((fd - (a - z)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("euler integration of the oracle field recovers the target exactly") {
  Rng rng(3);
  const Mat<double> target = random_chunk<double>(8, 3, rng);
  const Mat<double> noise = random_chunk<double>(8, 3, rng);
  const Mat<double> field = target_vector_field<double>(target, noise);
  for (int steps : {1, 2, 5, 10, 20, 100}) {
    CAPTURE(steps);
    const Mat<double> out =
        sample_actions<double>(noise, steps, [&](const Mat<double>&, double) { return field; });
    CHECK((out - target).cwiseAbs().maxCoeff() <= 1e-6);
  }
  CHECK_THROWS_AS((void)euler_integrate<double>(noise, 0, [&](const Mat<double>&, double) {
                    return field;
                  }),
                  ConfigError);
}

TEST_CASE("euler integration accumulates a tau-dependent field correctly") {
  // Non-constant field with a known integral: v(x, tau) = 2*tau * ones.
  // x(1) = x(0) + integral_0^1 2 tau dtau = x(0) + 1, but Euler with k steps
  // uses left endpoints: sum 2*(k/n)/n = (n-1)/n -> first-order error 1/n.
  const Mat<double> x0 = Mat<double>::Zero(2, 2);
  for (int steps : {1, 10, 100}) {
    const Mat<double> out = euler_integrate<double>(x0, steps, [](const Mat<double>& x, double tau) {
      return Mat<double>(Mat<double>::Constant(x.rows(), x.cols(), 2.0 * tau));
    });
    const double expected = static_cast<double>(steps - 1) / steps;
    CHECK(out(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("zero-initialized model has the analytic flow loss") {
  // The fresh model predicts zero velocity, so the loss must equal
  // mean((target - noise)^2) exactly.
  const DiTConfig cfg = tiny_dit();
  const EncoderConfig enc = tiny_enc();
  const Params<double> p = Params<double>::init(cfg, enc, 4);
  const ModelInputs in = sample_inputs(enc, 10);
  Rng rng(5);
  const Mat<double> target = random_chunk<double>(cfg.horizon, cfg.d_a, rng, 0.05);
  const Mat<double> noise = random_chunk<double>(cfg.horizon, cfg.d_a, rng);
  const double loss = flow_loss_sample<double>(in, target, 0.3, noise, p, cfg, enc, nullptr);
  const double expected = (target - noise).squaredNorm() / target.size();
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("training loss gradients match finite differences everywhere") {
  const DiTConfig cfg = tiny_dit();
  const EncoderConfig enc = tiny_enc();
  Params<double> p = Params<double>::init(cfg, enc, 6);
  jitter_params(p, 7);
  const ModelInputs in = sample_inputs(enc, 20);
  Rng rng(8);
  const Mat<double> target = random_chunk<double>(cfg.horizon, cfg.d_a, rng, 0.05);
  const Mat<double> noise = random_chunk<double>(cfg.horizon, cfg.d_a, rng);
  const double tau = 0.61;

  Params<double> grads = Params<double>::zeros_like(p);
  (void)flow_loss_sample(in, target, tau, noise, p, cfg, enc, &grads);

  // Probe random entries in every tensor against central differences.
  const double h = 5e-6;
  Rng pick(9);
  double worst = 0.0;
  std::vector<std::pair<std::string, Mat<double>*>> tensors, gtensors;
  p.for_each_tensor([&](const std::string& n, Mat<double>& t) { tensors.push_back({n, &t}); });
  grads.for_each_tensor([&](const std::string& n, Mat<double>& t) { gtensors.push_back({n, &t}); });
  REQUIRE(tensors.size() == gtensors.size());
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    Mat<double>& t = *tensors[ti].second;
    const Mat<double>& gt = *gtensors[ti].second;
    const int probes = t.size() > 4 ? 2 : 1;
    for (int k = 0; k < probes; ++k) {
      const Eigen::Index idx = pick.uniform_int(0, static_cast<int>(t.size()) - 1);
      const double save = t.data()[idx];
      t.data()[idx] = save + h;
      const double lp = flow_loss_sample<double>(in, target, tau, noise, p, cfg, enc, nullptr);
      t.data()[idx] = save - h;
      const double lm = flow_loss_sample<double>(in, target, tau, noise, p, cfg, enc, nullptr);
      t.data()[idx] = save;
      const double fd = (lp - lm) / (2 * h);
      const double an = gt.data()[idx];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      CAPTURE(tensors[ti].first);
      CHECK(rel < 1e-3);
      worst = std::max(worst, rel);
    }
  }
  MESSAGE("worst relative gradient error: ", worst);
}

TEST_CASE("batch loss equals the average of per-sample losses with shared draws") {
  const DiTConfig cfg = tiny_dit();
  const EncoderConfig enc = tiny_enc();
  Params<double> p = Params<double>::init(cfg, enc, 10);
  jitter_params(p, 11);
  const ModelInputs in0 = sample_inputs(enc, 30);
  const ModelInputs in1 = sample_inputs(enc, 40);
  Rng rng(12);
  std::vector<FlowSample<double>> batch(2);
  batch[0].inputs = &in0;
  batch[0].target = random_chunk<double>(cfg.horizon, cfg.d_a, rng, 0.05);
  batch[1].inputs = &in1;
  batch[1].target = random_chunk<double>(cfg.horizon, cfg.d_a, rng, 0.05);

  Rng batch_rng(77);
  Params<double> batch_grads = Params<double>::zeros_like(p);
  const double batch_loss = flow_loss_batch(batch, p, cfg, enc, batch_rng, &batch_grads);

  // Replay the identical draws manually.
  Rng replay(77);
  double total = 0.0;
  Params<double> manual_grads = Params<double>::zeros_like(p);
  for (const auto& s : batch) {
    const double tau = replay.uniform();
    const Mat<double> noise = draw_noise<double>(cfg.horizon, cfg.d_a, replay);
    total += flow_loss_sample(*s.inputs, s.target, tau, noise, p, cfg, enc, &manual_grads);
  }
  CHECK(batch_loss == doctest::Approx(total / 2).epsilon(1e-14));
  std::vector<const Mat<double>*> bg, mg;
  batch_grads.for_each_tensor([&](const std::string&, const Mat<double>& t) { bg.push_back(&t); });
  manual_grads.for_each_tensor([&](const std::string&, const Mat<double>& t) { mg.push_back(&t); });
  for (std::size_t i = 0; i < bg.size(); ++i) {
    CHECK((*bg[i] - 0.5 * *mg[i]).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("learned-field sampling is deterministic and uses cached K/V consistently") {
  const DiTConfig cfg = tiny_dit();
  const EncoderConfig enc = tiny_enc();
  Params<double> p = Params<double>::init(cfg, enc, 13);
  jitter_params(p, 14);
  const ModelInputs in = sample_inputs(enc, 50);
  ConditioningContext<double> ctx = encode_context<double>(in, p, enc, nullptr);
  Rng rng(15);
  const Mat<double> noise = random_chunk<double>(cfg.horizon, cfg.d_a, rng);

  const Mat<double> a = sample_actions(ctx, p, cfg, noise, 7);
  const Mat<double> b = sample_actions(ctx, p, cfg, noise, 7);
  CHECK(a == b);

  // The cached-KV fast path must agree with step-by-step direct evaluation.
  Mat<double> x = noise;
  for (int k = 0; k < 7; ++k) {
    const double tau = static_cast<double>(k) / 7;
    x += (1.0 / 7) * dit_forward<double>(x, tau, ctx, p, cfg, nullptr, nullptr);
  }
  CHECK((a - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("action chunk sampling clamps to the action space") {
  const DiTConfig cfg = tiny_dit();
  const EncoderConfig enc = tiny_enc();
  Params<float> p = Params<float>::init(cfg, enc, 16);
  // Exaggerate weights so raw outputs overflow the bounds.
  jitter_params(p, 17, 2.0);
  const ModelInputs in = sample_inputs(enc, 60);
  ActionSpace space;
  Rng rng(18);
  const Eigen::MatrixXd chunk = sample_action_chunk(in, p, cfg, enc, space, rng);
  REQUIRE(chunk.rows() == cfg.horizon);
  REQUIRE(chunk.cols() == cfg.d_a);
  for (Eigen::Index i = 0; i < chunk.rows(); ++i) {
    CHECK(std::abs(chunk(i, 0)) <= space.bound);
    CHECK(std::abs(chunk(i, 1)) <= space.bound);
    CHECK(chunk(i, 2) >= 0.0);
    CHECK(chunk(i, 2) <= 1.0);
  }
  // Same rng seed reproduces the same chunk.
  Rng rng2(18);
  const Eigen::MatrixXd chunk2 = sample_action_chunk(in, p, cfg, enc, space, rng2);
  CHECK(chunk == chunk2);
}

TEST_CASE("hold action keeps the gripper still at its current openness") {
  ActionSpace space;
  const Eigen::VectorXd hold = space.hold_action(0.42);
  REQUIRE(hold.size() == 3);
  CHECK(hold(0) == 0.0);
  CHECK(hold(1) == 0.0);
  CHECK(hold(2) == 0.42);
}
