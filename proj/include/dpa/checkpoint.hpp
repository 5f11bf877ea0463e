// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "dpa/error.hpp"
#include "dpa/io.hpp"
#include "dpa/policy.hpp"

namespace dpa {

inline constexpr int kCheckpointVersion = 1;

/// Provenance stored alongside the parameters.
struct CheckpointMeta {
  std::string stage = "init";  // init | sft | rl
  int epoch = 0;               // SFT epochs completed
  int step = 0;                // RL steps completed
  std::string reward_mode;     // set for rl checkpoints

  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  PolicyParams params;
  CheckpointMeta meta;
};

/// Text encoding: one header record, then one parameter per line with 17
/// significant digits.
inline std::string encode_checkpoint(const PolicyParams& params, const CheckpointMeta& meta) {
  Json h;
  h["format"] = "dpa-checkpoint";
  h["version"] = kCheckpointVersion;
  h["policy"] = to_string(params.layout.kind);
  h["F"] = params.layout.feature_dim;
  h["max_len"] = params.layout.max_len;
  h["vocab"] = params.layout.vocab;
  h["count"] = params.values.size();
  h["stage"] = meta.stage;
  h["epoch"] = meta.epoch;
  h["step"] = meta.step;
  h["reward_mode"] = meta.reward_mode;
  std::string out = h.dump() + '\n';
  for (double v : params.values) out += format_real(v) + '\n';
  return out;
}

inline void save_checkpoint(const fs::path& path, const PolicyParams& params,
                            const CheckpointMeta& meta = {}) {
  for (double v : params.values)
    if (!std::isfinite(v)) throw TrainingError("refusing to save non-finite parameters to " + path.string());
  write_file(path, encode_checkpoint(params, meta));
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw SchemaError(path.string() + ":1: empty checkpoint");
  const Json h = parse_json_line(lines[0], path, 1);
  const detail::LineContext ctx{path, 1};
  if (detail::require<std::string>(h, "format", ctx) != "dpa-checkpoint")
    ctx.fail("not a checkpoint file");
  if (detail::require<int>(h, "version", ctx) != kCheckpointVersion)
    ctx.fail("unsupported checkpoint version");
  Checkpoint c;
  try {
    c.params.layout.kind = parse_policy_kind(detail::require<std::string>(h, "policy", ctx));
  } catch (const ConfigError& e) {
    ctx.fail(e.what());
  }
  c.params.layout.feature_dim = detail::require<std::size_t>(h, "F", ctx);
  c.params.layout.max_len = detail::require<std::size_t>(h, "max_len", ctx);
  c.params.layout.vocab = detail::require<std::vector<std::string>>(h, "vocab", ctx);
  const auto count = detail::require<std::size_t>(h, "count", ctx);
  c.meta.stage = detail::require<std::string>(h, "stage", ctx);
  c.meta.epoch = detail::require<int>(h, "epoch", ctx);
  c.meta.step = detail::require<int>(h, "step", ctx);
  c.meta.reward_mode = detail::require<std::string>(h, "reward_mode", ctx);

  std::size_t n = lines.size() - 1;
  while (n > 0 && lines[n].empty()) --n;  // trailing blank lines
  if (n != count)
    ctx.fail("header declares " + std::to_string(count) + " values, file holds " + std::to_string(n));
  c.params.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string& s = lines[i + 1];
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
      detail::LineContext{path, i + 2}.fail("invalid parameter value \"" + s + "\"");
    c.params.values[i] = v;
  }
  return c;
}

}  // namespace dpa
