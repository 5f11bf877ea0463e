// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpa/categorical_policy.hpp"
#include "dpa/checkpoint.hpp"
#include "dpa/env.hpp"
#include "dpa/error.hpp"
#include "dpa/eval.hpp"
#include "dpa/grpo.hpp"
#include "dpa/io.hpp"
#include "dpa/sft.hpp"
#include "dpa/token_policy.hpp"

namespace dpa {

// --- run configuration -------------------------------------------------------------

inline Json default_config_json() {
  return Json::parse(R"({
  "seed": 0,
  "policy": {"kind": "token", "max_len": 32},
  "env": {"defect_prob": 0.3, "block_size": 2, "noise": 0.1, "defect_offset": 1.0,
          "train_size": 500, "test_size": 200, "explore_size": 100},
  "sft": {"lr": 0.1, "batch_size": 10, "momentum": 0.0, "weak_accuracy": 0.38,
          "phases": [{"targets": "weak", "epochs": 80}, {"targets": "answer", "epochs": 10}]},
  "rl": {"group_size": 8, "eps_clip": 0.2, "beta": 0.04, "lr": 0.1, "mu": 1, "std_floor": 1e-6,
         "reward_mode": "dpa", "steps": 300, "batch_prompts": 16, "eval_every": 10,
         "eval_slice": 0},
  "eval": {"test_path": ""},
  "io": {"out_dir": "", "checkpoint_every": 0}
})");
}

struct SftPhase {
  TargetSource targets = TargetSource::AnswerDriven;
  int epochs = 0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  PolicyKind policy = PolicyKind::Token;
  std::size_t max_len = TokenPolicy::kDefaultMaxLen;
  GenConfig env;
  SplitSizes sizes;
  SftConfig sft;
  double weak_accuracy = 0.38;
  std::vector<SftPhase> phases;
  TrainConfig rl;
  std::string test_path;
  std::string out_dir;
  Json resolved;  // the merged tree, written next to every run's outputs
};

namespace detail {

inline void merge_config(Json& base, const Json& over, const std::string& prefix) {
  if (!over.is_object()) throw ConfigError("config section \"" + prefix + "\" must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key \"" + path + "\"");
    Json& slot = base[it.key()];
    if (slot.is_object())
      merge_config(slot, it.value(), path);
    else
      slot = it.value();
  }
}

template <class T>
T config_get(const Json& root, const std::string& dotted) {
  const Json* node = &root;
  std::string rest = dotted;
  while (true) {
    const auto dot = rest.find('.');
    const std::string key = rest.substr(0, dot);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("missing config key \"" + dotted + "\"");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    rest = rest.substr(dot + 1);
  }
  try {
    return node->get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("config key \"" + dotted + "\" has the wrong type");
  }
}

}  // namespace detail

/// `path=value` with a dotted path into the config tree; the value is read
/// as JSON when it parses, otherwise as a bare string.
inline void apply_override(Json& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("override \"" + std::string(assignment) + "\" must look like key.path=value");
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  Json* node = &cfg;
  std::string rest = path;
  while (true) {
    const auto dot = rest.find('.');
    const std::string key = rest.substr(0, dot);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown config key \"" + path + "\"");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    rest = rest.substr(dot + 1);
  }
  if (node->is_object()) throw ConfigError("cannot override whole section \"" + path + "\"");
  *node = value;
}

inline RunConfig resolve_config(Json tree) {
  using detail::config_get;
  RunConfig c;
  c.seed = config_get<std::uint64_t>(tree, "seed");
  c.policy = parse_policy_kind(config_get<std::string>(tree, "policy.kind"));
  c.max_len = config_get<std::size_t>(tree, "policy.max_len");

  c.env.defect_prob = config_get<double>(tree, "env.defect_prob");
  c.env.block_size = config_get<int>(tree, "env.block_size");
  c.env.noise = config_get<double>(tree, "env.noise");
  c.env.defect_offset = config_get<double>(tree, "env.defect_offset");
  c.env.validate();
  c.sizes.train = config_get<std::size_t>(tree, "env.train_size");
  c.sizes.test = config_get<std::size_t>(tree, "env.test_size");
  c.sizes.explore = config_get<std::size_t>(tree, "env.explore_size");

  c.sft.lr = config_get<double>(tree, "sft.lr");
  c.sft.batch_size = config_get<std::size_t>(tree, "sft.batch_size");
  c.sft.momentum = config_get<double>(tree, "sft.momentum");
  c.sft.seed = c.seed;
  c.weak_accuracy = config_get<double>(tree, "sft.weak_accuracy");
  if (!(c.sft.lr > 0.0)) throw ConfigError("sft.lr must be > 0");
  if (c.sft.batch_size == 0) throw ConfigError("sft.batch_size must be > 0");
  if (!(c.weak_accuracy >= 0.0 && c.weak_accuracy <= 1.0))
    throw ConfigError("sft.weak_accuracy must lie in [0, 1]");
  const Json& phases = tree["sft"]["phases"];
  if (!phases.is_array()) throw ConfigError("sft.phases must be an array");
  for (const auto& ph : phases) {
    if (!ph.is_object()) throw ConfigError("sft.phases entries must be objects");
    for (auto it = ph.begin(); it != ph.end(); ++it)
      if (it.key() != "targets" && it.key() != "epochs")
        throw ConfigError("unknown config key \"sft.phases[]." + it.key() + "\"");
    SftPhase p;
    p.targets = parse_target_source(detail::config_get<std::string>(ph, "targets"));
    p.epochs = detail::config_get<int>(ph, "epochs");
    if (p.epochs < 0) throw ConfigError("sft phase epochs must be >= 0");
    c.phases.push_back(p);
  }

  c.rl.group_size = config_get<int>(tree, "rl.group_size");
  c.rl.eps_clip = config_get<double>(tree, "rl.eps_clip");
  c.rl.beta = config_get<double>(tree, "rl.beta");
  c.rl.lr = config_get<double>(tree, "rl.lr");
  c.rl.mu = config_get<int>(tree, "rl.mu");
  c.rl.std_floor = config_get<double>(tree, "rl.std_floor");
  c.rl.reward_mode = parse_reward_mode(config_get<std::string>(tree, "rl.reward_mode"));
  c.rl.steps = config_get<int>(tree, "rl.steps");
  c.rl.batch_prompts = config_get<int>(tree, "rl.batch_prompts");
  c.rl.eval_every = config_get<int>(tree, "rl.eval_every");
  c.rl.eval_slice = config_get<std::size_t>(tree, "rl.eval_slice");
  c.rl.checkpoint_every = config_get<int>(tree, "io.checkpoint_every");
  c.rl.seed = c.seed;
  c.rl.sft_epochs = 0;
  for (const auto& p : c.phases) c.rl.sft_epochs += p.epochs;
  c.rl.validate();

  c.test_path = config_get<std::string>(tree, "eval.test_path");
  c.out_dir = config_get<std::string>(tree, "io.out_dir");
  c.resolved = std::move(tree);
  return c;
}

/// Defaults, then the optional config file, then `--set` overrides.
inline RunConfig load_run_config(const std::optional<fs::path>& file,
                                 const std::vector<std::string>& overrides = {}) {
  Json tree = default_config_json();
  if (file) {
    Json user;
    try {
      user = Json::parse(read_file(*file));
    } catch (const Json::parse_error& e) {
      throw ConfigError(file->string() + ": " + e.what());
    }
    detail::merge_config(tree, user, "");
  }
  for (const auto& o : overrides) apply_override(tree, o);
  return resolve_config(std::move(tree));
}

// --- run directories ------------------------------------------------------------------

/// Claims a fresh output directory for one command. Directories are
/// write-once: an existing non-empty directory is refused, and a `.lock`
/// file marks the directory while the command runs.
class RunDir {
 public:
  explicit RunDir(fs::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) throw ConfigError("no output directory given (use --out or io.out_dir)");
    std::error_code ec;
    if (fs::exists(dir_, ec) && !fs::is_empty(dir_, ec))
      throw IoError("refusing to write into existing run directory " + dir_.string());
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
    lock_ = dir_ / ".lock";
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (!f) throw IoError("run directory " + dir_.string() + " is locked by another command");
    std::fclose(f);
  }

  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;

  ~RunDir() {
    std::error_code ec;
    fs::remove(lock_, ec);
  }

  const fs::path& path() const { return dir_; }
  fs::path operator/(const std::string& name) const { return dir_ / name; }

 private:
  fs::path dir_;
  fs::path lock_;
};

inline void write_resolved_config(const RunDir& run, const RunConfig& cfg) {
  write_file(run / "config.resolved.json", cfg.resolved.dump(2) + "\n");
}

// --- policy dispatch -------------------------------------------------------------------

template <class F>
decltype(auto) with_policy(const PolicyLayout& layout, F&& fn) {
  if (layout.kind == PolicyKind::Categorical) return fn(CategoricalPolicy(layout.feature_dim));
  return fn(TokenPolicy(layout.feature_dim, layout.max_len));
}

inline PolicyLayout layout_for(const RunConfig& cfg, std::size_t feature_dim) {
  if (cfg.policy == PolicyKind::Categorical) return CategoricalPolicy(feature_dim).layout();
  return TokenPolicy(feature_dim, cfg.max_len).layout();
}

// --- commands ---------------------------------------------------------------------------

struct CommandOutput {
  std::string message;  // human-readable summary for stdout
  std::string warning;  // printed to stderr when non-empty
};

inline CommandOutput cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
  RunDir run(out);
  write_resolved_config(run, cfg);
  generate_dataset(cfg.env, cfg.sizes, cfg.seed, run.path());
  std::ostringstream msg;
  msg << "train: " << cfg.sizes.train << "\ntest: " << cfg.sizes.test
      << "\nexplore: " << cfg.sizes.explore << "\n";
  return {msg.str(), {}};
}

inline Dataset load_split(const fs::path& data_dir, Split split) {
  return load_dataset(split_path(data_dir, split));
}

/// Cold start. Phases run in order; metrics rows carry the phase id and
/// epochs continue from the init checkpoint when resuming.
inline CommandOutput cmd_sft(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out,
                             const std::optional<fs::path>& init = std::nullopt) {
  const Dataset train = load_split(data_dir, Split::Train);
  PolicyParams params;
  CheckpointMeta meta;
  if (init) {
    auto ck = load_checkpoint(*init);
    params = std::move(ck.params);
    meta = ck.meta;
    if (params.layout.feature_dim != train.header.feature_dim)
      throw DimensionMismatch("init checkpoint expects F = " + std::to_string(params.layout.feature_dim) +
                              ", data has F = " + std::to_string(train.header.feature_dim));
  } else {
    params.layout = layout_for(cfg, train.header.feature_dim);
  }

  RunDir run(out);
  write_resolved_config(run, cfg);
  JsonlWriter metrics(run / "metrics.jsonl");
  int epoch = meta.epoch;
  double last_loss = 0.0;
  with_policy(params.layout, [&](const auto& policy) {
    if (!init) params = policy.init_params(cfg.seed);
    for (std::size_t i = 0; i < cfg.phases.size(); ++i) {
      const auto& phase = cfg.phases[i];
      auto examples = build_sft_examples(policy, train.samples, phase.targets, cfg.weak_accuracy,
                                         cfg.seed + i);
      write_sft_dataset(run / ("sft_phase" + std::to_string(i + 1) + ".jsonl"), examples);
      SftConfig sc = cfg.sft;
      sc.epochs = phase.epochs;
      params = sft_train(policy, std::move(params), std::span<const SftExample>(examples), sc,
                         [&](const SftEpochRecord& r) {
                           metrics.write_line(to_json_line(r));
                           last_loss = r.loss;
                         },
                         epoch, static_cast<int>(i + 1));
      epoch += phase.epochs;
    }
  });
  meta.stage = "sft";
  meta.epoch = epoch;
  save_checkpoint(run / "checkpoint.txt", params, meta);
  return {"sft epochs: " + std::to_string(epoch) + "\nfinal loss: " + format_real(last_loss) + "\n", {}};
}

/// RL stage. Requires a post-SFT checkpoint unless `allow_raw` is set, in
/// which case training starts from freshly initialized parameters.
inline CommandOutput cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out,
                               const std::optional<fs::path>& init, bool allow_raw) {
  const Dataset train_set = load_split(data_dir, Split::Train);
  const Dataset test = load_split(data_dir, Split::Test);
  PolicyParams params;
  std::string warning;
  if (init) {
    auto ck = load_checkpoint(*init);
    if (ck.meta.stage != "sft" && !allow_raw)
      throw ConfigError("checkpoint " + init->string() + " is not a post-SFT checkpoint (stage \"" +
                        ck.meta.stage + "\"); pass --allow-raw-init to override");
    params = std::move(ck.params);
    if (ck.meta.stage != "sft") warning = "warning: RL from a non-SFT checkpoint";
  } else if (allow_raw) {
    params.layout = layout_for(cfg, train_set.header.feature_dim);
    with_policy(params.layout, [&](const auto& policy) { params = policy.init_params(cfg.seed); });
    warning = "warning: RL from raw parameters; direct RL without a cold start is expected to fail";
  } else {
    throw ConfigError("train needs a post-SFT checkpoint (--init); pass --allow-raw-init to override");
  }
  if (params.layout.feature_dim != train_set.header.feature_dim)
    throw DimensionMismatch("checkpoint expects F = " + std::to_string(params.layout.feature_dim) +
                            ", data has F = " + std::to_string(train_set.header.feature_dim));

  RunDir run(out);
  write_resolved_config(run, cfg);
  JsonlWriter metrics(run / "metrics.jsonl");
  CheckpointMeta meta;
  meta.stage = "rl";
  meta.reward_mode = to_string(cfg.rl.reward_mode);
  meta.epoch = cfg.rl.sft_epochs;
  Diagnostics diag;
  with_policy(params.layout, [&](const auto& policy) {
    TrainHooks hooks;
    hooks.metrics = [&](const RlStepRecord& r) { metrics.write_line(to_json_line(r)); };
    hooks.checkpoint = [&](int step, const PolicyParams& p) {
      CheckpointMeta m = meta;
      m.step = step;
      save_checkpoint(run / ("checkpoint_step" + std::to_string(step) + ".txt"), p, m);
    };
    hooks.eval_set = &test.samples;
    hooks.diagnostics = &diag;
    params = dpa::train(policy, std::move(params), train_set.samples, cfg.rl, hooks);
  });
  meta.step = cfg.rl.steps;
  save_checkpoint(run / "checkpoint.txt", params, meta);
  Json tag = {{"reward_mode", meta.reward_mode}, {"steps", cfg.rl.steps},
              {"ratio_clamps", diag.ratio_clamps}, {"kl_clamps", diag.kl_clamps}};
  write_file(run / "run.json", tag.dump(2) + "\n");
  return {"reward_mode: " + meta.reward_mode + "\nsteps: " + std::to_string(cfg.rl.steps) + "\n", warning};
}

/// Greedy decoding of every test sample; writes judgments and reports.
inline CommandOutput cmd_eval(const RunConfig& cfg, const fs::path& checkpoint,
                              const fs::path& test_path, const fs::path& out) {
  (void)cfg;
  const auto ck = load_checkpoint(checkpoint);
  const Dataset test = load_dataset(test_path);
  for (const auto& s : test.samples)
    if (!s.label) throw SchemaError(test_path.string() + ": sample " + s.id +
                                    " has no labels (explore split cannot be evaluated)");
  if (ck.params.layout.feature_dim != test.header.feature_dim)
    throw DimensionMismatch("checkpoint expects F = " + std::to_string(ck.params.layout.feature_dim) +
                            ", test file has F = " + std::to_string(test.header.feature_dim));
  const auto judgments = with_policy(ck.params.layout, [&](const auto& policy) {
    return evaluate(policy, ck.params, test.samples);
  });

  RunDir run(out);
  write_resolved_config(run, cfg);
  std::string dump;
  for (const auto& j : judgments) dump += judgment_line(j) + '\n';
  write_file(run / "judgments.jsonl", dump);
  std::string name = ck.meta.stage;
  if (!ck.meta.reward_mode.empty()) name += ":" + ck.meta.reward_mode;
  const auto summary = summarize(name, file_checksum(test_path), judgments);
  const auto table = summary_table(summary);
  write_file(run / "report.txt", table);
  write_file(run / "report.json", summary_json(summary).dump(2) + "\n");
  return {table, {}};
}

inline EvalSummary load_eval_summary(const fs::path& eval_dir) {
  const fs::path p = eval_dir / "report.json";
  try {
    return summary_from_json(Json::parse(read_file(p)));
  } catch (const Json::parse_error& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

/// Compares two eval runs; the run label is the eval directory name.
inline CommandOutput cmd_report(const fs::path& run_a, const fs::path& run_b,
                                const std::optional<fs::path>& out = std::nullopt) {
  auto a = load_eval_summary(run_a);
  auto b = load_eval_summary(run_b);
  a.run = run_a.filename().string();
  b.run = run_b.filename().string();
  const auto report = compare_report(a, b);
  if (out) {
    RunDir run(*out);
    write_file(run / "compare.txt", report.text);
    write_file(run / "compare.json", report.json.dump(2) + "\n");
  }
  return {report.text, {}};
}

}  // namespace dpa
