#pragma once

#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hivla/core/image.hpp"
#include "hivla/model/params.hpp"
#include "hivla/model/pe.hpp"
#include "hivla/plan/crop.hpp"

namespace hivla::model {

enum class ViewId { global = 0, wrist = 1, local = 2 };

template <class S>
struct TokenSequence {
  Mat<S> tokens;
  Stream stream = Stream::global;
};

// ---- patch extraction --------------------------------------------------------

template <class S>
struct PatchGrid {
  Mat<S> feats;  // N x (patch*patch*3), N = grid_h * grid_w
  int grid_w = 0, grid_h = 0;
  int padded_w = 0, padded_h = 0;
  Eigen::MatrixXd centers;  // N x 2, (x, y) pixel centers in the padded frame
};

/// Splits an image into non-overlapping patches, zero-padding the bottom and
/// right edges up to a patch multiple. Features per patch: the red plane
/// row-major, then green, then blue.
template <class S>
PatchGrid<S> patchify(const Image& img, int patch) {
  if (patch <= 0) throw ConfigError("patch side must be positive");
  if (img.width <= 0 || img.height <= 0) throw ConfigError("cannot patchify an empty image");

  PatchGrid<S> out;
  out.grid_w = (img.width + patch - 1) / patch;
  out.grid_h = (img.height + patch - 1) / patch;
  out.padded_w = out.grid_w * patch;
  out.padded_h = out.grid_h * patch;
  const int n = out.grid_w * out.grid_h;
  const int plane = patch * patch;
  out.feats.setZero(n, 3 * plane);
  out.centers.resize(n, 2);

  for (int pi = 0; pi < out.grid_h; ++pi) {
    for (int pj = 0; pj < out.grid_w; ++pj) {
      const int row = pi * out.grid_w + pj;
      out.centers(row, 0) = (pj + 0.5) * patch;
      out.centers(row, 1) = (pi + 0.5) * patch;
      for (int y = 0; y < patch; ++y) {
        const int iy = pi * patch + y;
        if (iy >= img.height) continue;
        for (int x = 0; x < patch; ++x) {
          const int ix = pj * patch + x;
          if (ix >= img.width) continue;
          const int k = y * patch + x;
          out.feats(row, k) = static_cast<S>(img.r(iy, ix));
          out.feats(row, plane + k) = static_cast<S>(img.g(iy, ix));
          out.feats(row, 2 * plane + k) = static_cast<S>(img.b(iy, ix));
        }
      }
    }
  }
  return out;
}

// ---- view encoder ------------------------------------------------------------

template <class S>
struct ViewEncodeCache {
  LinearCache<S> proj;
  Mlp2Cache<S> adapter;
  Eigen::Index rows = 0;
};

/// Patch projection + view embedding + within-frame position encoding, then
/// the shared two-layer vision adapter.
template <class S>
Mat<S> encode_view(const Image& img, ViewId view, const Params<S>& p, const EncoderConfig& cfg,
                   ViewEncodeCache<S>* cache) {
  const PatchGrid<S> grid = patchify<S>(img, cfg.patch);
  ViewEncodeCache<S> local;
  ViewEncodeCache<S>* c = cache != nullptr ? cache : &local;
  c->rows = grid.feats.rows();

  Mat<S> t = linear_fwd(grid.feats, p.patch_proj_w, p.patch_proj_b, &c->proj);
  t.rowwise() += p.view_emb.row(static_cast<int>(view));
  t += sinusoidal_pe_2d(grid.centers, grid.padded_w, grid.padded_h, cfg.d_model, cfg.pe_temperature)
           .template cast<S>();
  return mlp2_fwd(t, p.vis_w1, p.vis_b1, p.vis_w2, p.vis_b2, &c->adapter);
}

template <class S>
void encode_view_bwd(const Mat<S>& dt, const ViewEncodeCache<S>& cache, ViewId view,
                     const Params<S>& p, Params<S>& g) {
  const Mat<S> dpre = mlp2_bwd(dt, cache.adapter, p.vis_w1, p.vis_w2, g.vis_w1, g.vis_b1, g.vis_w2,
                               g.vis_b2);
  g.view_emb.row(static_cast<int>(view)) += dpre.colwise().sum();
  Mat<S> unused_dx =
      linear_bwd(dpre, cache.proj, p.patch_proj_w, g.patch_proj_w, g.patch_proj_b, true);
  (void)unused_dx;
}

// ---- global stream: concatenated camera views ---------------------------------

template <class S>
struct GlobalEncodeCache {
  ViewEncodeCache<S> global_view, wrist_view;
};

template <class S>
TokenSequence<S> encode_global(const Image& global_img, const Image& wrist_img, const Params<S>& p,
                               const EncoderConfig& cfg, GlobalEncodeCache<S>* cache) {
  GlobalEncodeCache<S> local;
  GlobalEncodeCache<S>* c = cache != nullptr ? cache : &local;
  const Mat<S> a = encode_view(global_img, ViewId::global, p, cfg, &c->global_view);
  const Mat<S> b = encode_view(wrist_img, ViewId::wrist, p, cfg, &c->wrist_view);
  TokenSequence<S> out;
  out.stream = Stream::global;
  out.tokens.resize(a.rows() + b.rows(), a.cols());
  out.tokens.topRows(a.rows()) = a;
  out.tokens.bottomRows(b.rows()) = b;
  return out;
}

template <class S>
void encode_global_bwd(const Mat<S>& dt, const GlobalEncodeCache<S>& cache, const Params<S>& p,
                       Params<S>& g) {
  encode_view_bwd(Mat<S>(dt.topRows(cache.global_view.rows)), cache.global_view, ViewId::global, p, g);
  encode_view_bwd(Mat<S>(dt.bottomRows(cache.wrist_view.rows)), cache.wrist_view, ViewId::wrist, p, g);
}

// ---- local stream: HD crop with absolute position ------------------------------

template <class S>
struct LocalEncodeCache {
  ViewEncodeCache<S> view;
};

/// Local tokens are the encoded crop plus (unless disabled) the fixed
/// absolute position encoding of each patch center in the source frame.
template <class S>
TokenSequence<S> encode_local(const plan::CropResult& crop, const Params<S>& p,
                              const EncoderConfig& cfg, LocalEncodeCache<S>* cache) {
  LocalEncodeCache<S> local;
  LocalEncodeCache<S>* c = cache != nullptr ? cache : &local;
  TokenSequence<S> out;
  out.stream = Stream::local;
  out.tokens = encode_view(crop.image, ViewId::local, p, cfg, &c->view);
  if (cfg.use_abs_pe) {
    out.tokens += sinusoidal_pe_2d(crop.centers, crop.src_width, crop.src_height, cfg.d_model,
                                   cfg.pe_temperature)
                      .template cast<S>();
  }
  return out;
}

template <class S>
void encode_local_bwd(const Mat<S>& dt, const LocalEncodeCache<S>& cache, const Params<S>& p,
                      Params<S>& g) {
  encode_view_bwd(dt, cache.view, ViewId::local, p, g);
}

// ---- language stream -----------------------------------------------------------

/// Whitespace tokenization against the closed vocabulary; unknown words map
/// to id 0. Throws ConfigError for empty or all-whitespace text.
inline std::vector<int> tokenize(const std::string& text, const std::vector<std::string>& vocab) {
  std::vector<int> ids;
  std::istringstream ss(text);
  for (std::string w; ss >> w;) {
    int id = 0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      if (vocab[i] == w) {
        id = static_cast<int>(i) + 1;
        break;
      }
    }
    ids.push_back(id);
  }
  if (ids.empty()) throw ConfigError("cannot encode empty text");
  return ids;
}

template <class S>
struct LangEncodeCache {
  std::vector<int> ids;
  Mlp2Cache<S> adapter;
};

template <class S>
TokenSequence<S> encode_language(const std::vector<int>& ids, const Params<S>& p,
                                 const EncoderConfig& cfg, LangEncodeCache<S>* cache) {
  if (ids.empty()) throw ConfigError("cannot encode an empty token list");
  LangEncodeCache<S> local;
  LangEncodeCache<S>* c = cache != nullptr ? cache : &local;
  c->ids = ids;

  Mat<S> t(static_cast<Eigen::Index>(ids.size()), cfg.d_model);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= p.lang_embed.rows()) throw ConfigError("token id out of range");
    t.row(static_cast<Eigen::Index>(i)) = p.lang_embed.row(ids[i]);
  }
  t += sinusoidal_pe_1d(static_cast<int>(ids.size()), cfg.d_model, cfg.pe_temperature)
           .template cast<S>();

  TokenSequence<S> out;
  out.stream = Stream::lang;
  out.tokens = mlp2_fwd(t, p.txt_w1, p.txt_b1, p.txt_w2, p.txt_b2, &c->adapter);
  return out;
}

template <class S>
TokenSequence<S> encode_language(const std::string& text, const Params<S>& p,
                                 const EncoderConfig& cfg, LangEncodeCache<S>* cache) {
  return encode_language(tokenize(text, cfg.vocab), p, cfg, cache);
}

template <class S>
void encode_language_bwd(const Mat<S>& dt, const LangEncodeCache<S>& cache, const Params<S>& p,
                         Params<S>& g) {
  const Mat<S> demb =
      mlp2_bwd(dt, cache.adapter, p.txt_w1, p.txt_w2, g.txt_w1, g.txt_b1, g.txt_w2, g.txt_b2);
  for (std::size_t i = 0; i < cache.ids.size(); ++i) {
    g.lang_embed.row(cache.ids[i]) += demb.row(static_cast<Eigen::Index>(i));
  }
}

}  // namespace hivla::model
