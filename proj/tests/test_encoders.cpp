#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "hivla/core/errors.hpp"
#include "hivla/core/rng.hpp"
#include "hivla/model/cfm.hpp"
#include "hivla/model/encoders.hpp"
#include "hivla/model/pe.hpp"
#include "hivla/plan/crop.hpp"

using namespace hivla;
using namespace hivla::model;

namespace {

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

EncoderConfig small_enc() {
  EncoderConfig enc;
  enc.d_model = 32;
  enc.patch = 8;
  enc.crop_side = 32;
  enc.vocab = default_vocab();
  return enc;
}

DiTConfig small_dit() {
  DiTConfig cfg;
  cfg.d_model = 32;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.kv_heads = 1;
  cfg.horizon = 4;
  cfg.d_a = 3;
  cfg.d_s = 3;
  return cfg;
}

}  // namespace

TEST_CASE("tokenize: closed vocabulary with a reserved unknown id") {
  const std::vector<std::string> vocab = {"pick", "the", "red", "block"};
  const auto ids = tokenize("pick the shiny block", vocab);
  REQUIRE(ids.size() == 4);
  CHECK(ids[0] == 1);  // "pick" -> index 0 + 1
  CHECK(ids[1] == 2);
  CHECK(ids[2] == 0);  // unknown word
  CHECK(ids[3] == 4);
  CHECK_THROWS_AS((void)tokenize("", vocab), ConfigError);
  CHECK_THROWS_AS((void)tokenize("   \t  ", vocab), ConfigError);
}

TEST_CASE("default vocabulary covers every task instruction and oracle subtask") {
  const auto vocab = default_vocab();
  CHECK(vocab.size() >= 20);
  // Spot-check words every template needs.
  for (const char* w : {"pick", "place", "click", "the", "block", "left", "right"}) {
    CAPTURE(w);
    bool found = false;
    for (const auto& v : vocab) found = found || v == w;
    CHECK(found);
  }
}

TEST_CASE("patchify: exact grid when dimensions divide") {
  const Image img = noise_image(32, 16, 1);
  const PatchGrid<double> g = patchify<double>(img, 8);
  CHECK(g.grid_w == 4);
  CHECK(g.grid_h == 2);
  CHECK(g.padded_w == 32);
  CHECK(g.padded_h == 16);
  REQUIRE(g.feats.rows() == 8);
  REQUIRE(g.feats.cols() == 3 * 64);
  // Patch (0,0), feature k = y*8+x of the red plane.
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(g.feats(0, y * 8 + x) == doctest::Approx(img.r(y, x)));
      CHECK(g.feats(0, 64 + y * 8 + x) == doctest::Approx(img.g(y, x)));
      CHECK(g.feats(0, 128 + y * 8 + x) == doctest::Approx(img.b(y, x)));
    }
  // Patch (1,2): rows 8..15, cols 16..23.
  const int row = 1 * 4 + 2;
  CHECK(g.feats(row, 3 * 8 + 5) == doctest::Approx(img.r(8 + 3, 16 + 5)));
  // Centers at patch midpoints.
  CHECK(g.centers(0, 0) == doctest::Approx(4.0));
  CHECK(g.centers(0, 1) == doctest::Approx(4.0));
  CHECK(g.centers(row, 0) == doctest::Approx(2 * 8 + 4.0));
  CHECK(g.centers(row, 1) == doctest::Approx(1 * 8 + 4.0));
}

TEST_CASE("patchify: ragged edges are zero-padded") {
  const Image img = noise_image(20, 13, 2);  // 20 = 2*8+4, 13 = 8+5
  const PatchGrid<float> g = patchify<float>(img, 8);
  CHECK(g.grid_w == 3);
  CHECK(g.grid_h == 2);
  CHECK(g.padded_w == 24);
  CHECK(g.padded_h == 16);
  // Bottom-right patch covers rows 8..15 x cols 16..23; the image supplies
  // rows 8..12 x cols 16..19 and everything else must be zero.
  const int row = 1 * 3 + 2;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const int iy = 8 + y, ix = 16 + x;
      const float expected = (iy < 13 && ix < 20) ? img.r(iy, ix) : 0.0f;
      CHECK(g.feats(row, y * 8 + x) == expected);
    }
}

TEST_CASE("2d position encoding: unit-norm rows, distinguishes positions") {
  Eigen::MatrixXd pos(3, 2);
  pos << 10, 20, 10, 21, 90, 20;
  const Eigen::MatrixXd pe = sinusoidal_pe_2d(pos, 100, 100, 32);
  REQUIRE(pe.rows() == 3);
  REQUIRE(pe.cols() == 32);
  for (int i = 0; i < 3; ++i) CHECK(pe.row(i).squaredNorm() == doctest::Approx(16.0));
  CHECK((pe.row(0) - pe.row(1)).norm() > 1e-4);  // y differs
  CHECK((pe.row(0) - pe.row(2)).norm() > 1e-4);  // x differs
  // The first half encodes y only: rows 0 and 2 share y, so that half matches.
  CHECK((pe.row(0).head(16) - pe.row(2).head(16)).norm() == doctest::Approx(0.0));
  CHECK((pe.row(0).tail(16) - pe.row(1).tail(16)).norm() == doctest::Approx(0.0));
  CHECK_THROWS_AS((void)sinusoidal_pe_2d(pos, 100, 100, 30), ConfigError);  // 30 % 4 != 0
}

TEST_CASE("1d position encoding and timestep embedding sanity") {
  const Eigen::MatrixXd pe = sinusoidal_pe_1d(5, 16);
  REQUIRE(pe.rows() == 5);
  // Position 0: sin(0)=0, cos(0)=1 in every pair.
  for (int k = 0; k < 8; ++k) {
    CHECK(pe(0, 2 * k) == doctest::Approx(0.0));
    CHECK(pe(0, 2 * k + 1) == doctest::Approx(1.0));
  }
  CHECK((pe.row(1) - pe.row(2)).norm() > 1e-6);
  const Eigen::VectorXd t0 = timestep_embedding(0.0, 16);
  const Eigen::VectorXd t1 = timestep_embedding(1.0, 16);
  CHECK(t0(0) == doctest::Approx(0.0));
  CHECK(t0(1) == doctest::Approx(1.0));
  CHECK((t0 - t1).norm() > 1e-3);
}

TEST_CASE("view encoding is deterministic and view-tagged") {
  const EncoderConfig enc = small_enc();
  const DiTConfig cfg = small_dit();
  const Params<double> p = Params<double>::init(cfg, enc, 5);
  const Image img = noise_image(32, 32, 3);
  const Mat<double> a = encode_view<double>(img, ViewId::global, p, enc, nullptr);
  const Mat<double> b = encode_view<double>(img, ViewId::global, p, enc, nullptr);
  CHECK(a == b);
  // The same pixels through a different view embedding give different tokens.
  const Mat<double> c = encode_view<double>(img, ViewId::wrist, p, enc, nullptr);
  CHECK((a - c).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("global stream concatenates the two camera views in order") {
  const EncoderConfig enc = small_enc();
  const DiTConfig cfg = small_dit();
  const Params<double> p = Params<double>::init(cfg, enc, 7);
  const Image g = noise_image(32, 16, 4);  // 4x2 patches
  const Image w = noise_image(16, 16, 5);  // 2x2 patches
  const TokenSequence<double> seq = encode_global<double>(g, w, p, enc, nullptr);
  CHECK(seq.stream == Stream::global);
  REQUIRE(seq.tokens.rows() == 8 + 4);
  const Mat<double> gv = encode_view<double>(g, ViewId::global, p, enc, nullptr);
  const Mat<double> wv = encode_view<double>(w, ViewId::wrist, p, enc, nullptr);
  CHECK(seq.tokens.topRows(8) == gv);
  CHECK(seq.tokens.bottomRows(4) == wv);
}

TEST_CASE("absolute position encoding separates identical crops from different places") {
  const EncoderConfig enc = small_enc();
  const DiTConfig cfg = small_dit();
  const Params<double> p = Params<double>::init(cfg, enc, 9);

  // A flat image yields pixel-identical crops wherever the bbox sits.
  Image src(200, 200);
  src.fill(0.3f, 0.6f, 0.9f);
  const plan::CropResult left = plan::crop_image(src, {100, 100, 400, 400}, enc.crop_side, enc.patch);
  const plan::CropResult right = plan::crop_image(src, {600, 600, 900, 900}, enc.crop_side, enc.patch);
  REQUIRE(left.image.r == right.image.r);

  const Mat<double> with_pe_l = encode_local<double>(left, p, enc, nullptr).tokens;
  const Mat<double> with_pe_r = encode_local<double>(right, p, enc, nullptr).tokens;
  CHECK((with_pe_l - with_pe_r).cwiseAbs().maxCoeff() > 1e-8);

  EncoderConfig no_pe = enc;
  no_pe.use_abs_pe = false;
  const Mat<double> without_l = encode_local<double>(left, p, no_pe, nullptr).tokens;
  const Mat<double> without_r = encode_local<double>(right, p, no_pe, nullptr).tokens;
  CHECK(without_l == without_r);
}

TEST_CASE("language encoding embeds ids with position information") {
  const EncoderConfig enc = small_enc();
  const DiTConfig cfg = small_dit();
  const Params<double> p = Params<double>::init(cfg, enc, 11);
  const TokenSequence<double> a = encode_language<double>(std::vector<int>{1, 2, 3}, p, enc, nullptr);
  CHECK(a.stream == Stream::lang);
  REQUIRE(a.tokens.rows() == 3);
  REQUIRE(a.tokens.cols() == enc.d_model);
  // Same id at different positions encodes differently.
  const TokenSequence<double> b = encode_language<double>(std::vector<int>{2, 2}, p, enc, nullptr);
  CHECK((b.tokens.row(0) - b.tokens.row(1)).norm() > 1e-8);
  // Out-of-range ids are rejected.
  CHECK_THROWS_AS((void)encode_language<double>(std::vector<int>{-1}, p, enc, nullptr), ConfigError);
  CHECK_THROWS_AS(
      (void)encode_language<double>(std::vector<int>{static_cast<int>(p.lang_embed.rows())}, p,
                              enc, nullptr),
      ConfigError);
  CHECK_THROWS_AS((void)encode_language<double>(std::vector<int>{}, p, enc, nullptr), ConfigError);
  // The string overload routes through tokenize.
  const TokenSequence<double> c = encode_language<double>("pick the block", p, enc, nullptr);
  const auto ids = tokenize("pick the block", enc.vocab);
  const TokenSequence<double> d = encode_language<double>(ids, p, enc, nullptr);
  CHECK(c.tokens == d.tokens);
}

TEST_CASE("encoder gradients match finite differences") {
  // End-to-end FD check through encode -> flow loss exercises every encoder
  // backward path (patch projection, adapters, embeddings, view tags).
  const EncoderConfig enc = small_enc();
  DiTConfig cfg = small_dit();
  Params<double> p = Params<double>::init(cfg, enc, 13);
  // The fresh model outputs exactly zero (its gates are zero-initialized),
  // which would zero every encoder gradient; jitter all tensors so the check
  // exercises real signal paths.
  Rng jitter(17);
  p.for_each_tensor([&](const std::string&, Mat<double>& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += 0.05 * jitter.normal();
  });

  ModelInputs in;
  in.global_image = noise_image(32, 16, 20);
  in.wrist_image = noise_image(16, 16, 21);
  Image hd = noise_image(64, 64, 22);
  in.crop = plan::crop_image(hd, {100, 100, 700, 700}, enc.crop_side, enc.patch);
  in.token_ids = {1, 0, 3};
  in.state = Eigen::VectorXd::LinSpaced(3, 0.1, 0.9);

  Rng rng(23);
  Mat<double> target(cfg.horizon, cfg.d_a);
  for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = rng.normal() * 0.05;
  Mat<double> noise(cfg.horizon, cfg.d_a);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
  const double tau = 0.37;

  Params<double> grads = Params<double>::zeros_like(p);
  (void)flow_loss_sample(in, target, tau, noise, p, cfg, enc, &grads);

  // Probe a few entries of encoder-side tensors against central differences.
  const double h = 5e-6;
  Rng pick(29);
  for (const char* tname : {"patch_proj_w", "vis_w1", "txt_w2", "lang_embed", "view_emb"}) {
    CAPTURE(tname);
    Params<double> probe = p;
    Mat<double>* tensor = nullptr;
    Mat<double>* gt = nullptr;
    probe.for_each_tensor([&](const std::string& n, Mat<double>& t) {
      if (n == tname) tensor = &t;
    });
    grads.for_each_tensor([&](const std::string& n, Mat<double>& t) {
      if (n == tname) gt = &t;
    });
    REQUIRE(tensor != nullptr);
    REQUIRE(gt != nullptr);
    for (int probe_i = 0; probe_i < 3; ++probe_i) {
      const Eigen::Index idx = pick.uniform_int(0, static_cast<int>(tensor->size()) - 1);
      const double save = tensor->data()[idx];
      tensor->data()[idx] = save + h;
      const double lp = flow_loss_sample<double>(in, target, tau, noise, probe, cfg, enc, nullptr);
      tensor->data()[idx] = save - h;
      const double lm = flow_loss_sample<double>(in, target, tau, noise, probe, cfg, enc, nullptr);
      tensor->data()[idx] = save;
      const double fd = (lp - lm) / (2 * h);
      const double an = gt->data()[idx];
      CHECK(std::abs(fd - an) <= 1e-6 + 1e-4 * std::max(std::abs(fd), std::abs(an)));
    }
  }
}
