// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpa/answers.hpp"
#include "dpa/env.hpp"
#include "dpa/error.hpp"
#include "dpa/eval.hpp"
#include "dpa/io.hpp"
#include "dpa/policy.hpp"
#include "dpa/random.hpp"
#include "dpa/rewards.hpp"

namespace dpa {

struct TrainConfig {
  int group_size = 8;
  double eps_clip = 0.2;
  double beta = 0.04;
  double lr = 0.05;
  int mu = 1;
  double std_floor = 1e-6;
  RewardMode reward_mode = RewardMode::Dpa;
  int steps = 300;
  int batch_prompts = 16;
  std::uint64_t seed = 0;
  int sft_epochs = 20;
  int eval_every = 10;
  std::size_t eval_slice = 0;  // 0: the whole held-out set
  int checkpoint_every = 0;    // 0: no intermediate checkpoints

  void validate() const {
    if (group_size < 2) throw ConfigError("rl.group_size must be >= 2 (std of one sample is undefined)");
    if (!(eps_clip > 0.0 && eps_clip < 1.0)) throw ConfigError("rl.eps_clip must lie in (0, 1)");
    if (!(beta >= 0.0)) throw ConfigError("rl.beta must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("rl.lr must be > 0");
    if (mu < 1) throw ConfigError("rl.mu must be >= 1");
    if (!(std_floor > 0.0)) throw ConfigError("rl.std_floor must be > 0");
    if (steps < 1) throw ConfigError("rl.steps must be >= 1");
    if (batch_prompts < 1) throw ConfigError("rl.batch_prompts must be >= 1");
    if (sft_epochs < 0) throw ConfigError("rl.sft_epochs must be >= 0");
    if (eval_every < 1) throw ConfigError("rl.eval_every must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("rl.checkpoint_every must be >= 0");
  }
};

/// Counts of exponents that hit the +-30 clamp.
struct Diagnostics {
  std::size_t ratio_clamps = 0;
  std::size_t kl_clamps = 0;
};

inline constexpr double kExponentClamp = 30.0;

// --- group statistics ----------------------------------------------------------

/// (r_i - mean) / max(popstd, std_floor); exactly zero for constant groups.
inline std::vector<double> compute_advantages(std::span<const double> rewards, double std_floor) {
  const std::size_t g = rewards.size();
  std::vector<double> adv(g, 0.0);
  if (g == 0) return adv;
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; }))
    return adv;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  const double denom = std::max(std::sqrt(var), std_floor);
  for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

inline double clamp_exponent(double x, std::size_t* counter) {
  if (x > kExponentClamp || x < -kExponentClamp) {
    if (counter) ++*counter;
    return std::clamp(x, -kExponentClamp, kExponentClamp);
  }
  return x;
}

/// w = pi_theta / pi_old from log-probabilities.
inline double importance_ratio(double cur_log_prob, double old_log_prob,
                               Diagnostics* diag = nullptr) {
  return std::exp(clamp_exponent(cur_log_prob - old_log_prob, diag ? &diag->ratio_clamps : nullptr));
}

struct KlTerm {
  double value = 0.0;
  double dcur = 0.0;  // d value / d cur_log_prob = 1 - rho
};

/// rho - log(rho) - 1 with rho = pi_ref / pi_theta.
inline KlTerm kl_penalty(double cur_log_prob, double ref_log_prob, Diagnostics* diag = nullptr) {
  const double raw = ref_log_prob - cur_log_prob;
  const double log_rho = clamp_exponent(raw, diag ? &diag->kl_clamps : nullptr);
  const double rho = std::exp(log_rho);
  KlTerm k;
  k.value = std::expm1(log_rho) - log_rho;
  k.dcur = log_rho == raw ? 1.0 - rho : 0.0;
  return k;
}

// --- rollouts -------------------------------------------------------------------

struct GroupRollout {
  Observation obs;
  AnswerSet label;
  std::vector<ResponseSample> responses;
  std::vector<double> old_log_probs;
  std::vector<double> ref_log_probs;
  std::vector<double> cur_log_probs;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;

  std::size_t size() const { return responses.size(); }
};

/// Samples G responses from the current policy. Member i draws from
/// substream (group_seed, i), so the group does not depend on evaluation
/// order.
template <Policy P>
GroupRollout sample_group(const P& policy, const PolicyParams& params,
                          const PolicyParams& ref_params, const Observation& obs, AnswerSet label,
                          const TrainConfig& cfg, std::uint64_t group_seed) {
  if (cfg.group_size < 2) throw ConfigError("rl.group_size must be >= 2 (std of one sample is undefined)");
  const auto g = static_cast<std::size_t>(cfg.group_size);
  GroupRollout out;
  out.obs = obs;
  out.label = label;
  out.responses.reserve(g);
  std::vector<double> totals(g);
  for (std::size_t i = 0; i < g; ++i) {
    Rng rng = substream(group_seed, {i});
    out.responses.push_back(policy.sample(params, obs, rng));
    const auto& resp = out.responses.back();
    out.old_log_probs.push_back(resp.log_prob);
    out.ref_log_probs.push_back(policy.log_prob(ref_params, obs, resp.trace));
    out.rewards.push_back(total_reward(resp.text, label, cfg.reward_mode));
    totals[i] = out.rewards.back().total;
  }
  out.cur_log_probs = out.old_log_probs;
  out.advantages = compute_advantages(totals, cfg.std_floor);
  return out;
}

// --- objective ------------------------------------------------------------------

struct ObjectiveResult {
  double objective = 0.0;
  double surrogate = 0.0;  // mean clipped surrogate
  double kl = 0.0;         // mean KL estimate
  std::size_t clipped = 0; // responses whose clipped branch was active
  std::vector<double> grad;
};

/// The group objective
///
///   (1/G) sum_i [ min(w_i A_i, clip(w_i, 1-eps, 1+eps) A_i) - beta * D_i ]
///
/// and its gradient, with A_i treated as constants. A response on the
/// clipped branch contributes no surrogate gradient. `grad` is accumulated
/// into `out.grad` scaled by `weight`; log-probs under `params` are written
/// back into `group.cur_log_probs`.
template <Policy P>
void accumulate_objective(const P& policy, const PolicyParams& params, GroupRollout& group,
                          const TrainConfig& cfg, double weight, ObjectiveResult& out,
                          Diagnostics* diag = nullptr) {
  const std::size_t g = group.size();
  if (g == 0 || group.old_log_probs.size() != g || group.ref_log_probs.size() != g ||
      group.advantages.size() != g)
    throw ConfigError("group rollout is not fully populated");
  if (out.grad.empty()) out.grad.assign(policy.param_count(), 0.0);
  group.cur_log_probs.resize(g);
  const double inv_g = 1.0 / static_cast<double>(g);
  for (std::size_t i = 0; i < g; ++i) {
    const auto& trace = group.responses[i].trace;
    const double cur = policy.log_prob(params, group.obs, trace);
    group.cur_log_probs[i] = cur;
    const double a = group.advantages[i];
    Diagnostics local;
    Diagnostics* d = diag ? diag : &local;
    const std::size_t clamps_before = d->ratio_clamps;
    const double w = importance_ratio(cur, group.old_log_probs[i], d);
    const bool ratio_clamped = d->ratio_clamps != clamps_before;
    const double clipped_w = std::clamp(w, 1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip);
    const bool clip_active = (a > 0.0 && w > 1.0 + cfg.eps_clip) || (a < 0.0 && w < 1.0 - cfg.eps_clip);
    const double surrogate = std::min(w * a, clipped_w * a);
    const KlTerm kl = kl_penalty(cur, group.ref_log_probs[i], d);

    out.surrogate += weight * inv_g * surrogate;
    out.kl += weight * inv_g * kl.value;
    out.objective += weight * inv_g * (surrogate - cfg.beta * kl.value);
    if (clip_active) ++out.clipped;

    const double dsurr = (clip_active || ratio_clamped) ? 0.0 : w * a;
    const double coef = weight * inv_g * (dsurr - cfg.beta * kl.dcur);
    if (coef != 0.0) policy.accumulate_grad(params, group.obs, trace, coef, out.grad);
  }
}

template <Policy P>
ObjectiveResult grpo_objective(const P& policy, const PolicyParams& params, GroupRollout& group,
                               const TrainConfig& cfg, Diagnostics* diag = nullptr) {
  ObjectiveResult out;
  accumulate_objective(policy, params, group, cfg, 1.0, out, diag);
  return out;
}

// --- training loop ----------------------------------------------------------------

struct RlStepRecord {
  int step = 0;
  double mean_total_reward = 0.0;
  double mean_r_fmt = 0.0;
  double mean_r_acc = 0.0;
  double mean_kl = 0.0;
  double objective = 0.0;
  std::optional<double> eval_score;
  std::string error;  // set on the diagnostic record emitted before aborting
};

inline std::string to_json_line(const RlStepRecord& r) {
  std::string out = "{\"step\":" + std::to_string(r.step);
  if (!r.error.empty()) return out + ",\"error\":" + json_string(r.error) + "}";
  out += ",\"mean_total_reward\":" + format_real(r.mean_total_reward);
  out += ",\"mean_r_fmt\":" + format_real(r.mean_r_fmt);
  out += ",\"mean_r_acc\":" + format_real(r.mean_r_acc);
  out += ",\"mean_KL\":" + format_real(r.mean_kl);
  out += ",\"objective\":" + format_real(r.objective);
  if (r.eval_score) out += ",\"eval_score\":" + format_real(*r.eval_score);
  return out + "}";
}

struct TrainHooks {
  std::function<void(const RlStepRecord&)> metrics;
  std::function<void(int step, const PolicyParams&)> checkpoint;
  const std::vector<SyntheticSample>* eval_set = nullptr;
  Diagnostics* diagnostics = nullptr;
};

template <Policy P>
double held_out_score(const P& policy, const PolicyParams& params,
                      const std::vector<SyntheticSample>& eval_set, std::size_t slice) {
  if (slice == 0 || slice >= eval_set.size()) return overall_score(evaluate(policy, params, eval_set));
  std::vector<SyntheticSample> head(eval_set.begin(),
                                    eval_set.begin() + static_cast<std::ptrdiff_t>(slice));
  return overall_score(evaluate(policy, params, head));
}

/// Outer loop: each step draws `batch_prompts` training samples (with
/// replacement) from substream (seed, step), rolls out one group per prompt,
/// then takes `mu` gradient-ascent steps on the batch-mean objective with the
/// rollout's old log-probs held fixed. The reference policy is the params
/// passed in, frozen for the whole run.
template <Policy P>
PolicyParams train(const P& policy, PolicyParams params, const std::vector<SyntheticSample>& data,
                   const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (data.empty()) throw ConfigError("RL training set is empty");
  for (const auto& s : data)
    if (!s.label) throw SchemaError("sample " + s.id + " has no label; RL needs labelled prompts");

  const PolicyParams ref = params;
  Diagnostics local_diag;
  Diagnostics* diag = hooks.diagnostics ? hooks.diagnostics : &local_diag;
  const auto batch = static_cast<std::size_t>(cfg.batch_prompts);
  std::vector<GroupRollout> groups(batch);

  for (int step = 1; step <= cfg.steps; ++step) {
    Rng pick = substream(cfg.seed, {stream::kRlBatch, static_cast<std::uint64_t>(step)});
    RlStepRecord rec;
    rec.step = step;
    for (std::size_t p = 0; p < batch; ++p) {
      const auto idx = static_cast<std::size_t>(uniform01(pick) * static_cast<double>(data.size()));
      const auto& s = data[std::min(idx, data.size() - 1)];
      const auto seed = substream_seed(cfg.seed, {stream::kRlRollout, static_cast<std::uint64_t>(step), p});
      groups[p] = sample_group(policy, params, ref, s.obs, *s.label, cfg, seed);
      for (std::size_t i = 0; i < groups[p].size(); ++i) {
        rec.mean_total_reward += groups[p].rewards[i].total;
        rec.mean_r_fmt += groups[p].rewards[i].fmt;
        rec.mean_r_acc += groups[p].rewards[i].acc;
        rec.mean_kl += kl_penalty(groups[p].old_log_probs[i], groups[p].ref_log_probs[i]).value;
      }
    }
    const double n = static_cast<double>(batch * static_cast<std::size_t>(cfg.group_size));
    rec.mean_total_reward /= n;
    rec.mean_r_fmt /= n;
    rec.mean_r_acc /= n;
    rec.mean_kl /= n;

    for (int inner = 0; inner < cfg.mu; ++inner) {
      ObjectiveResult obj;
      obj.grad.assign(policy.param_count(), 0.0);
      const double weight = 1.0 / static_cast<double>(batch);
      for (auto& grp : groups) accumulate_objective(policy, params, grp, cfg, weight, obj, diag);
      bool finite = std::isfinite(obj.objective);
      for (double v : obj.grad) finite = finite && std::isfinite(v);
      if (!finite) {
        RlStepRecord bad;
        bad.step = step;
        bad.error = "non-finite objective at inner update " + std::to_string(inner + 1);
        if (hooks.metrics) hooks.metrics(bad);
        throw TrainingError(bad.error + " (step " + std::to_string(step) + ")");
      }
      if (inner == 0) rec.objective = obj.objective;
      for (std::size_t k = 0; k < params.values.size(); ++k) params.values[k] += cfg.lr * obj.grad[k];
    }

    if (hooks.eval_set && step % cfg.eval_every == 0)
      rec.eval_score = held_out_score(policy, params, *hooks.eval_set, cfg.eval_slice);
    if (hooks.metrics) hooks.metrics(rec);
    if (hooks.checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
      hooks.checkpoint(step, params);
  }
  return params;
}

}  // namespace dpa
