#include "hivla/harness/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

#include "json.hpp"

#include "hivla/core/errors.hpp"
#include "hivla/core/rng.hpp"
#include "hivla/harness/dataset.hpp"
#include "hivla/harness/stats.hpp"
#include "hivla/model/cfm.hpp"
#include "hivla/model/checkpoint.hpp"

namespace hivla::harness {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  dit.validate();
  opt.validate();
  if (steps < 1) throw ConfigError("train: steps must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
  if (out_dir.empty()) throw ConfigError("train: out_dir must be set");
}

std::string train_identity_json(const TrainConfig& cfg, const std::string& dataset_dir) {
  json id;
  id["dataset"] = dataset_dir;
  id["dit"] = json::parse(model::dit_config_to_json(cfg.dit));
  model::EncoderConfig enc = cfg.enc;
  if (enc.vocab.empty()) enc.vocab = model::default_vocab();
  id["enc"] = json::parse(model::encoder_config_to_json(enc));
  id["opt"] = json{{"lr", cfg.opt.lr},
                   {"beta1", cfg.opt.beta1},
                   {"beta2", cfg.opt.beta2},
                   {"eps", cfg.opt.eps},
                   {"weight_decay", cfg.opt.weight_decay},
                   {"warmup_steps", cfg.opt.warmup_steps},
                   {"clip_norm", cfg.opt.clip_norm}};
  id["steps"] = cfg.steps;
  id["batch_size"] = cfg.batch_size;
  id["seed"] = cfg.seed;
  id["crop_from_hd"] = cfg.crop_from_hd;
  return id.dump();
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
}

std::string step_checkpoint_name(int step) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "ckpt_step_%06d.hvck", step);
  return buf;
}

/// Newest periodic checkpoint at or below `limit`, if any.
std::optional<int> newest_periodic(const fs::path& dir, int limit) {
  std::optional<int> best;
  if (!fs::exists(dir)) return best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    int step = 0;
    if (std::sscanf(name.c_str(), "ckpt_step_%d.hvck", &step) == 1 && step <= limit) {
      if (!best || step > *best) best = step;
    }
  }
  return best;
}

/// Loss printed so a float round-trips exactly: resume must reproduce the
/// continued curve byte-for-byte at fixed precision.
std::string curve_line(int step, float loss, double grad_norm) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.17g\n", step, static_cast<double>(loss), grad_norm);
  return buf;
}

/// Rewrites the loss curve keeping only rows at or below `keep_upto`.
void truncate_curve(const fs::path& path, int keep_upto) {
  std::istringstream in(read_text(path));
  std::ostringstream out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      out << line << '\n';
      first = false;
      continue;
    }
    const int step = std::atoi(line.c_str());
    if (step <= keep_upto && !line.empty()) out << line << '\n';
  }
  if (first) out << "step,loss,grad_norm\n";
  write_text(path, out.str());
}

}  // namespace

TrainResult train(const std::string& dataset_dir, const TrainConfig& user_cfg,
                  const sim2d::SimConfig& sim) {
  TrainConfig cfg = user_cfg;
  if (cfg.enc.vocab.empty()) cfg.enc.vocab = model::default_vocab();
  cfg.validate();
  cfg.enc.validate();

  const std::string identity = train_identity_json(cfg, dataset_dir);
  const std::string hash = content_hash(identity);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);

  const fs::path config_path = out / "train_config.json";
  const fs::path final_path = out / "ckpt_final.hvck";
  const fs::path curve_path = out / "loss_curve.csv";
  const fs::path result_path = out / "train_result.json";

  const std::string existing = read_text(config_path);
  if (!existing.empty() && existing != identity) {
    throw ConfigError("train: " + cfg.out_dir + " holds a different run; refusing to mix");
  }

  if (cfg.reuse_cached && fs::exists(final_path) && fs::exists(result_path) &&
      existing == identity) {
    const json prior = json::parse(read_text(result_path));
    TrainResult cached;
    cached.checkpoint_path = final_path.string();
    cached.loss_curve_path = curve_path.string();
    cached.final_loss = prior.at("final_loss").get<double>();
    cached.steps_done = prior.at("steps").get<int>();
    cached.reused_cache = true;
    cached.config_hash = hash;
    return cached;
  }
  write_text(config_path, identity);

  const std::vector<LoadedSample> data =
      load_training_set(dataset_dir, cfg.enc, cfg.dit.d_s, cfg.crop_from_hd, sim);
  const int n = static_cast<int>(data.size());

  model::Params<float> params =
      model::Params<float>::init(cfg.dit, cfg.enc, derive_seed(cfg.seed, "train.init"));
  model::AdamW<float> adam(params, cfg.opt);
  model::Params<float> grads = model::Params<float>::zeros_like(params);

  int start_step = 0;
  std::optional<int> resumed = cfg.resume ? newest_periodic(out, cfg.steps) : std::nullopt;
  if (resumed) {
    const auto ck = model::load_checkpoint<float>((out / step_checkpoint_name(*resumed)).string());
    if (!ck.has_opt) throw ConfigError("train: periodic checkpoint lacks optimizer state");
    params = ck.params;
    adam.first_moment() = ck.opt_m;
    adam.second_moment() = ck.opt_v;
    adam.set_step_count(ck.step);
    start_step = static_cast<int>(ck.step);
    truncate_curve(curve_path, start_step);
  } else {
    write_text(curve_path, "step,loss,grad_norm\n");
  }

  std::ofstream curve(curve_path, std::ios::binary | std::ios::app);
  if (!curve) throw RuntimeError("cannot write " + curve_path.string());

  std::string last_good =
      resumed ? (out / step_checkpoint_name(*resumed)).string() : std::string();
  float loss = 0.0f;
  for (int t = start_step + 1; t <= cfg.steps; ++t) {
    // Every draw this step makes comes from a seed tied to (seed, t), so a
    // resumed run replays the identical sequence.
    Rng srng(derive_seed(cfg.seed, "train.step", static_cast<std::uint64_t>(t)));
    std::vector<model::FlowSample<float>> batch(static_cast<std::size_t>(cfg.batch_size));
    for (auto& s : batch) {
      const auto idx = static_cast<std::size_t>(srng.uniform_int(0, n - 1));
      s.inputs = &data[idx].inputs;
      s.target = data[idx].target.cast<float>();
    }
    grads.set_zero();
    loss = model::flow_loss_batch(batch, params, cfg.dit, cfg.enc, srng, &grads);
    if (!std::isfinite(loss)) {
      throw RuntimeError("train: non-finite loss at step " + std::to_string(t) +
                         (last_good.empty() ? "; no checkpoint was saved yet"
                                            : "; last good checkpoint: " + last_good));
    }
    const double gnorm = adam.step(params, grads);
    curve << curve_line(t, loss, gnorm);

    if (cfg.checkpoint_every > 0 && t % cfg.checkpoint_every == 0) {
      model::CheckpointData<float> ck;
      ck.dit = cfg.dit;
      ck.enc = cfg.enc;
      ck.step = t;
      ck.params = params;
      ck.has_opt = true;
      ck.opt_m = adam.first_moment();
      ck.opt_v = adam.second_moment();
      const std::string path = (out / step_checkpoint_name(t)).string();
      model::save_checkpoint(path, ck);
      last_good = path;
      curve.flush();
    }
  }
  curve.flush();

  model::CheckpointData<float> final_ck;
  final_ck.dit = cfg.dit;
  final_ck.enc = cfg.enc;
  final_ck.step = cfg.steps;
  final_ck.params = params;
  model::save_checkpoint(final_path.string(), final_ck);

  TrainResult result;
  result.checkpoint_path = final_path.string();
  result.loss_curve_path = curve_path.string();
  result.final_loss = static_cast<double>(loss);
  result.steps_done = cfg.steps;
  result.config_hash = hash;

  json summary;
  summary["config_hash"] = hash;
  summary["final_loss"] = result.final_loss;
  summary["steps"] = cfg.steps;
  summary["samples"] = n;
  summary["checkpoint"] = "ckpt_final.hvck";
  summary["loss_curve"] = "loss_curve.csv";
  write_text(result_path, summary.dump(2) + "\n");
  return result;
}

}  // namespace hivla::harness
