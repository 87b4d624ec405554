#include "hivla/harness/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hivla/core/errors.hpp"
#include "hivla/harness/dataset.hpp"
#include "hivla/harness/eval.hpp"
#include "hivla/harness/stats.hpp"
#include "hivla/harness/train.hpp"
#include "hivla/model/checkpoint.hpp"

namespace hivla::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

std::string output_root(const json& cfg) {
  if (cfg.contains("out_dir")) return cfg.at("out_dir").get<std::string>();
  if (const char* env = std::getenv("HIVLA_OUT"); env != nullptr && *env != '\0') return env;
  return "out";
}

/// Content address for a command's outputs: the config without its location
/// fields, canonically dumped.
std::string config_address(const json& cfg, const std::string& command) {
  json id = cfg;
  id.erase("out_dir");
  id["command"] = command;
  return content_hash(id.dump()).substr(0, 8);
}

std::string command_dir(const json& cfg, const std::string& command) {
  const fs::path dir = fs::path(output_root(cfg)) / (command + "-" + config_address(cfg, command));
  fs::create_directories(dir);
  return dir.string();
}

template <typename T>
T get_or(const json& cfg, const std::string& key, T fallback) {
  if (!cfg.contains(key)) return fallback;
  return cfg.at(key).get<T>();
}

model::DiTConfig parse_dit(const json& cfg) {
  if (!cfg.contains("model") || !cfg.at("model").contains("dit")) return model::DiTConfig{};
  return model::dit_config_from_json(cfg.at("model").at("dit").dump());
}

model::EncoderConfig parse_enc(const json& cfg) {
  model::EncoderConfig enc;
  if (cfg.contains("model") && cfg.at("model").contains("enc")) {
    enc = model::encoder_config_from_json(cfg.at("model").at("enc").dump());
  }
  if (enc.vocab.empty()) enc.vocab = model::default_vocab();
  return enc;
}

model::AdamWConfig parse_opt(const json& cfg) {
  model::AdamWConfig opt;
  if (!cfg.contains("opt")) return opt;
  const json& o = cfg.at("opt");
  opt.lr = get_or(o, "lr", opt.lr);
  opt.beta1 = get_or(o, "beta1", opt.beta1);
  opt.beta2 = get_or(o, "beta2", opt.beta2);
  opt.eps = get_or(o, "eps", opt.eps);
  opt.weight_decay = get_or(o, "weight_decay", opt.weight_decay);
  opt.warmup_steps = get_or(o, "warmup_steps", opt.warmup_steps);
  opt.clip_norm = get_or(o, "clip_norm", opt.clip_norm);
  return opt;
}

runtime::RuntimeConfig parse_runtime(const json& cfg) {
  runtime::RuntimeConfig rcfg;
  if (!cfg.contains("runtime")) return rcfg;
  const json& r = cfg.at("runtime");
  rcfg.replan_interval = get_or(r, "replan_interval", rcfg.replan_interval);
  rcfg.max_plans = get_or(r, "max_plans", rcfg.max_plans);
  rcfg.max_steps = get_or(r, "max_steps", rcfg.max_steps);
  rcfg.retry_cap = get_or(r, "retry_cap", rcfg.retry_cap);
  rcfg.bbox_rate = get_or(r, "bbox_rate", rcfg.bbox_rate);
  rcfg.lang_rate = get_or(r, "lang_rate", rcfg.lang_rate);
  return rcfg;
}

EvalProtocol parse_protocol(const json& cfg) {
  EvalProtocol proto;
  proto.rcfg = parse_runtime(cfg);
  proto.trials = get_or(cfg, "trials", proto.trials);
  proto.seed_base = get_or(cfg, "seed_base", proto.seed_base);
  proto.threads = get_or(cfg, "threads", proto.threads);
  if (cfg.contains("dataset")) {
    // Evaluating against a generated dataset pins the seeds that training
    // consumed; the protocol then refuses any overlap.
    const DatasetSummary idx = read_index(cfg.at("dataset").get<std::string>());
    proto.train_seed_base = idx.seed_base;
    proto.train_seed_count = idx.seeds_used;
  }
  return proto;
}

std::vector<std::string> parse_tasks(const json& cfg) {
  if (!cfg.contains("tasks")) throw ConfigError("config needs a 'tasks' array");
  return cfg.at("tasks").get<std::vector<std::string>>();
}

PolicyFactory parse_policy(const json& cfg, const sim2d::SimConfig& sim) {
  // Accept either a flat layout ({"policy": "dit", "checkpoint": ...}) or a
  // nested object ({"policy": {"policy": "dit", "checkpoint": ...}}).
  const json& p = cfg.contains("policy") && cfg.at("policy").is_object() ? cfg.at("policy") : cfg;
  const std::string kind = get_or<std::string>(p, "policy", "dit");
  const int horizon = get_or(p, "horizon", 16);
  if (kind == "scripted") return scripted_policy_factory(horizon, sim);
  if (kind == "random") return random_policy_factory(horizon, sim);
  if (kind != "dit") throw ConfigError("unknown policy kind '" + kind + "'");
  if (!p.contains("checkpoint")) throw ConfigError("config needs 'checkpoint' for the dit policy");
  return dit_policy_factory(p.at("checkpoint").get<std::string>(), get_or(p, "crop_from_hd", true),
                            sim);
}

/// Applies a `require` block of row gates. Returns false (exit 4) when any
/// named gate fails; unknown gate names are config errors.
bool check_requirements(const ResultTable& table, const json& cfg) {
  if (!cfg.contains("require")) return true;
  const json& req = cfg.at("require");
  bool ok = true;
  for (const auto& [name, value] : req.items()) {
    if (name == "min_rate") {
      const double min_rate = value.get<double>();
      for (const TableRow& row : table.rows) {
        if (row.rate < min_rate) {
          std::fprintf(stderr, "requirement failed: row '%s' rate %.4f < %.4f\n", row.key.c_str(),
                       row.rate, min_rate);
          ok = false;
        }
      }
    } else if (name == "max_p_vs_full") {
      const double alpha = value.at("alpha").get<double>();
      for (const std::string& label : value.at("rows").get<std::vector<std::string>>()) {
        bool found = false;
        for (const TableRow& row : table.rows) {
          if (row.key != label) continue;
          found = true;
          const double p = row.extra.value("p_vs_full", 1.0);
          if (!(p < alpha)) {
            std::fprintf(stderr, "requirement failed: row '%s' p_vs_full %.4g >= %.4g\n",
                         label.c_str(), p, alpha);
            ok = false;
          }
        }
        if (!found) {
          throw ConfigError("require.max_p_vs_full names an absent row '" + label + "'");
        }
      }
    } else if (name == "min_miou" || name == "min_exact_match") {
      const double floor_v = value.get<double>();
      const char* field = name == "min_miou" ? "miou" : "exact_match";
      for (const TableRow& row : table.rows) {
        const double v = row.extra.value(field, 1.0);
        if (v < floor_v) {
          std::fprintf(stderr, "requirement failed: row '%s' %s %.4f < %.4f\n", row.key.c_str(),
                       field, v, floor_v);
          ok = false;
        }
      }
    } else {
      throw ConfigError("unknown requirement '" + name + "'");
    }
  }
  return ok;
}

void announce_table(const ResultTable& table, const std::string& dir) {
  std::printf("%s\n", table_to_csv(table).c_str());
  std::printf("wrote %s/%s.{csv,json}\n", dir.c_str(), table.name.c_str());
}

// ---- subcommands ---------------------------------------------------------------

int cmd_gen_data(const std::string& config_path) {
  const json cfg = load_json_file(config_path);
  DatasetConfig dcfg;
  dcfg.tasks = parse_tasks(cfg);
  dcfg.episodes_per_task = get_or(cfg, "episodes_per_task", dcfg.episodes_per_task);
  dcfg.horizon = get_or(cfg, "horizon", dcfg.horizon);
  dcfg.max_steps = get_or(cfg, "max_steps", dcfg.max_steps);
  dcfg.seed = get_or(cfg, "seed", dcfg.seed);
  dcfg.max_failure_rate = get_or(cfg, "max_failure_rate", dcfg.max_failure_rate);
  dcfg.out_dir = command_dir(cfg, "dataset");

  const DatasetSummary summary = generate_dataset(dcfg);
  std::printf("dataset at %s: %zu episodes\n", summary.root.c_str(),
              summary.episode_dirs.size());
  for (const auto& [task, n] : summary.successes) {
    std::printf("  %-28s %4d kept, %d failures\n", task.c_str(), n, summary.failures.at(task));
  }
  return 0;
}

int cmd_train(const std::string& config_path) {
  const json cfg = load_json_file(config_path);
  if (!cfg.contains("dataset")) throw ConfigError("train config needs 'dataset'");
  const std::string dataset = cfg.at("dataset").get<std::string>();

  TrainConfig tcfg;
  tcfg.dit = parse_dit(cfg);
  tcfg.enc = parse_enc(cfg);
  tcfg.opt = parse_opt(cfg);
  tcfg.steps = get_or(cfg, "steps", tcfg.steps);
  tcfg.batch_size = get_or(cfg, "batch_size", tcfg.batch_size);
  tcfg.seed = get_or(cfg, "seed", tcfg.seed);
  tcfg.checkpoint_every = get_or(cfg, "checkpoint_every", tcfg.checkpoint_every);
  tcfg.crop_from_hd = get_or(cfg, "crop_from_hd", tcfg.crop_from_hd);
  tcfg.reuse_cached = get_or(cfg, "reuse_cached", tcfg.reuse_cached);
  tcfg.resume = get_or(cfg, "resume", tcfg.resume);
  if (cfg.contains("out_dir_exact")) {
    tcfg.out_dir = cfg.at("out_dir_exact").get<std::string>();
  } else {
    const std::string hash = content_hash(train_identity_json(tcfg, dataset)).substr(0, 8);
    tcfg.out_dir = (fs::path(output_root(cfg)) / ("train-" + hash)).string();
  }

  const TrainResult result = train(dataset, tcfg);
  std::printf("%s: %d steps, final loss %.6g\n",
              result.reused_cache ? "reused cached run" : "trained", result.steps_done,
              result.final_loss);
  std::printf("checkpoint: %s\nloss curve: %s\n", result.checkpoint_path.c_str(),
              result.loss_curve_path.c_str());
  return 0;
}

int cmd_eval_success(const std::string& config_path) {
  const json cfg = load_json_file(config_path);
  const sim2d::SimConfig sim;
  const EvalProtocol proto = parse_protocol(cfg);
  const std::vector<std::string> tasks = parse_tasks(cfg);

  // Optional averaging over the last k periodic checkpoints of a training
  // run; the default evaluates the single configured checkpoint.
  const int avg_last_k = get_or(cfg, "avg_last_k", 1);
  ResultTable table;
  if (avg_last_k > 1) {
    if (!cfg.contains("checkpoint")) throw ConfigError("avg_last_k needs 'checkpoint'");
    const fs::path train_dir = fs::path(cfg.at("checkpoint").get<std::string>()).parent_path();
    std::vector<fs::path> periodic;
    for (const auto& e : fs::directory_iterator(train_dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("ckpt_step_", 0) == 0 && name.find(".hvck") != std::string::npos) {
        periodic.push_back(e.path());
      }
    }
    std::sort(periodic.begin(), periodic.end());
    if (static_cast<int>(periodic.size()) < avg_last_k) {
      throw ConfigError("avg_last_k=" + std::to_string(avg_last_k) + " but only " +
                        std::to_string(periodic.size()) + " periodic checkpoints exist");
    }
    periodic.erase(periodic.begin(), periodic.end() - avg_last_k);

    std::vector<ResultTable> parts;
    for (const fs::path& p : periodic) {
      const PolicyFactory factory =
          dit_policy_factory(p.string(), get_or(cfg, "crop_from_hd", true), sim);
      parts.push_back(eval_success(tasks, factory, proto, sim));
    }
    table.name = "success";
    table.meta = parts.front().meta;
    table.meta["averaged_checkpoints"] = avg_last_k;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      int ok = 0, trials = 0;
      for (const ResultTable& part : parts) {
        ok += part.rows[ti].successes;
        trials += part.rows[ti].trials;
      }
      TableRow row;
      row.key = tasks[ti];
      row.successes = ok;
      row.trials = trials;
      row.rate = trials > 0 ? static_cast<double>(ok) / trials : 0.0;
      const Interval ci = wilson95(ok, trials);
      row.lo = ci.lo;
      row.hi = ci.hi;
      table.rows.push_back(std::move(row));
    }
  } else {
    table = eval_success(tasks, parse_policy(cfg, sim), proto, sim);
  }

  const std::string dir = command_dir(cfg, "eval-success");
  table.meta["config"] = cfg;
  write_table(table, dir);
  announce_table(table, dir);
  return check_requirements(table, cfg) ? 0 : 4;
}

int cmd_eval_robustness(const std::string& config_path, const std::string& rates_override) {
  json cfg = load_json_file(config_path);
  if (!rates_override.empty()) {
    json rates = json::array();
    std::istringstream ss(rates_override);
    for (std::string tok; std::getline(ss, tok, ',');) rates.push_back(std::stod(tok));
    cfg["rates"] = rates;
  }
  if (!cfg.contains("rates")) throw ConfigError("eval-robustness config needs 'rates'");

  const sim2d::SimConfig sim;
  const EvalProtocol proto = parse_protocol(cfg);
  ResultTable table = eval_robustness(parse_tasks(cfg), parse_policy(cfg, sim),
                                      cfg.at("rates").get<std::vector<double>>(), proto, sim);
  const std::string dir = command_dir(cfg, "eval-robustness");
  table.meta["config"] = cfg;
  write_table(table, dir);
  announce_table(table, dir);
  return check_requirements(table, cfg) ? 0 : 4;
}

int cmd_eval_ablation(const std::string& config_path, const std::string& variants_path) {
  json cfg = load_json_file(config_path);
  if (!variants_path.empty()) cfg["variants"] = load_json_file(variants_path);
  if (!cfg.contains("variants")) throw ConfigError("eval-ablation config needs 'variants'");

  std::vector<AblationVariant> variants;
  for (const json& v : cfg.at("variants")) {
    variants.push_back({v.at("label").get<std::string>(), v.at("checkpoint").get<std::string>(),
                        get_or(v, "crop_from_hd", true)});
  }

  const sim2d::SimConfig sim;
  ResultTable table = eval_ablation(parse_tasks(cfg), variants, parse_protocol(cfg), sim);
  const std::string dir = command_dir(cfg, "eval-ablation");
  table.meta["config"] = cfg;
  write_table(table, dir);
  announce_table(table, dir);
  return check_requirements(table, cfg) ? 0 : 4;
}

int cmd_eval_planner(const std::string& config_path) {
  const json cfg = load_json_file(config_path);
  ResultTable table = eval_planner(parse_tasks(cfg), parse_protocol(cfg));
  const std::string dir = command_dir(cfg, "eval-planner");
  table.meta["config"] = cfg;
  write_table(table, dir);
  announce_table(table, dir);
  return check_requirements(table, cfg) ? 0 : 4;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"hierarchical manipulation experiment harness"};
  app.require_subcommand(1);

  std::string config_path, rates_override, variants_path;

  CLI::App* gen = app.add_subcommand("gen-data", "roll out expert demonstrations to a dataset");
  gen->add_option("--config", config_path, "JSON config")->required();

  CLI::App* tr = app.add_subcommand("train", "train the action model on a dataset");
  tr->add_option("--config", config_path, "JSON config")->required();

  CLI::App* es = app.add_subcommand("eval-success", "success rates over fresh seeds");
  es->add_option("--config", config_path, "JSON config")->required();

  CLI::App* er = app.add_subcommand("eval-robustness", "success under plan corruption");
  er->add_option("--config", config_path, "JSON config")->required();
  er->add_option("--rates", rates_override, "comma-separated corruption rates");

  CLI::App* ea = app.add_subcommand("eval-ablation", "compare trained model variants");
  ea->add_option("--config", config_path, "JSON config")->required();
  ea->add_option("--variants", variants_path, "JSON file with [{label, checkpoint, ...}]");

  CLI::App* ep = app.add_subcommand("eval-planner", "plan fidelity metrics");
  ep->add_option("--config", config_path, "JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path);
    if (tr->parsed()) return cmd_train(config_path);
    if (es->parsed()) return cmd_eval_success(config_path);
    if (er->parsed()) return cmd_eval_robustness(config_path, rates_override);
    if (ea->parsed()) return cmd_eval_ablation(config_path, variants_path);
    if (ep->parsed()) return cmd_eval_planner(config_path);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}

}  // namespace hivla::harness
