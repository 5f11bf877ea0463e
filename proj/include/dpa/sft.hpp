// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpa/answers.hpp"
#include "dpa/env.hpp"
#include "dpa/error.hpp"
#include "dpa/io.hpp"
#include "dpa/policy.hpp"
#include "dpa/random.hpp"
#include "dpa/token_policy.hpp"

namespace dpa {

struct SftExample {
  std::string id;
  Observation obs;
  std::string target_text;
  ActionTrace target;
};

// --- target construction -----------------------------------------------------

enum class TargetSource { AnswerDriven, WeakOracle };

inline const char* to_string(TargetSource s) {
  return s == TargetSource::AnswerDriven ? "answer" : "weak";
}

inline TargetSource parse_target_source(std::string_view s) {
  if (s == "answer") return TargetSource::AnswerDriven;
  if (s == "weak") return TargetSource::WeakOracle;
  throw ConfigError("unknown SFT target source \"" + std::string(s) + "\" (expected answer|weak)");
}

inline const std::string& verdict_token(DefectDimension d) {
  return token_vocab()[token::kFillerShape + static_cast<int>(d)];
}

/// Templated reasoning: one verdict per option (" ok", or the name of its
/// first defect dimension), then the answer.
inline std::string cot_target_text(const DefectMatrix& defects, AnswerSet answer) {
  std::string out(kThinkOpen);
  for (int j = 0; j < kNumOptions; ++j) {
    int first = -1;
    for (int d = 0; d < kNumDimensions && first < 0; ++d)
      if (defects[j][d]) first = d;
    out += first < 0 ? token_vocab()[token::kFillerOk]
                     : verdict_token(static_cast<DefectDimension>(first));
  }
  out.append(kThinkClose).append(kAnswerOpen).append(format_answer_set(answer)).append(kAnswerClose);
  return out;
}

/// Noisy teacher: keeps the true annotation with probability `accuracy`,
/// otherwise emits a uniformly chosen wrong label with a reasoning block made
/// consistent with it.
inline std::string weak_oracle_text(const DefectMatrix& truth, AnswerSet label, double accuracy,
                                    Rng& rng) {
  if (uniform01(rng) < accuracy) return cot_target_text(truth, label);
  int pick = static_cast<int>(uniform01(rng) * (kNumAnswerSets - 1));
  if (pick >= label.index()) ++pick;
  const AnswerSet fake = AnswerSet::from_index(pick);
  DefectMatrix invented{};
  for (int j = 0; j < kNumOptions; ++j) {
    const bool clean = !fake.is_none() && fake.contains(j);
    if (!clean) invented[j][static_cast<int>(uniform01(rng) * kNumDimensions)] = true;
  }
  return cot_target_text(invented, fake);
}

template <Policy P>
std::vector<SftExample> build_sft_examples(const P& policy,
                                           const std::vector<SyntheticSample>& samples,
                                           TargetSource source, double weak_accuracy,
                                           std::uint64_t seed) {
  std::vector<SftExample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!s.defects || !s.label)
      throw SchemaError("sample " + s.id + " has no annotations; cannot build SFT targets");
    SftExample ex;
    ex.id = s.id;
    ex.obs = s.obs;
    if (source == TargetSource::AnswerDriven) {
      ex.target_text = cot_target_text(*s.defects, *s.label);
    } else {
      Rng rng = substream(seed, {stream::kWeakOracle, i});
      ex.target_text = weak_oracle_text(*s.defects, *s.label, weak_accuracy, rng);
    }
    ex.target = policy.encode(ex.target_text);
    out.push_back(std::move(ex));
  }
  return out;
}

// --- loss ------------------------------------------------------------------

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean negative log-likelihood of the target traces and its gradient.
template <Policy P>
LossAndGrad nll_loss(const P& policy, const PolicyParams& params,
                     std::span<const SftExample> batch) {
  if (batch.empty()) throw ConfigError("nll_loss needs a non-empty batch");
  LossAndGrad out;
  out.grad.assign(policy.param_count(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch)
    out.loss -= policy.accumulate_grad(params, ex.obs, ex.target, -scale, out.grad);
  out.loss *= scale;
  return out;
}

template <Policy P>
double dataset_nll(const P& policy, const PolicyParams& params, std::span<const SftExample> data) {
  double total = 0.0;
  for (const auto& ex : data) total -= policy.log_prob(params, ex.obs, ex.target);
  return total / static_cast<double>(data.size());
}

// --- training loop -----------------------------------------------------------

struct SftConfig {
  int epochs = 20;
  double lr = 0.1;
  std::size_t batch_size = 10;
  double momentum = 0.0;
  std::uint64_t seed = 0;
};

struct SftEpochRecord {
  int phase = 1;
  int epoch = 0;
  double loss = 0.0;
};

using SftSink = std::function<void(const SftEpochRecord&)>;

inline std::string to_json_line(const SftEpochRecord& r) {
  return "{\"phase\":" + std::to_string(r.phase) + ",\"epoch\":" + std::to_string(r.epoch) +
         ",\"loss\":" + format_real(r.loss) + "}";
}

/// Mini-batch gradient descent on the mean NLL. Each epoch visits the data
/// in a permutation drawn from (seed, epoch); the reported loss is the
/// full-dataset NLL after the epoch. Epoch numbers continue from
/// `epoch_offset` so that resumed runs keep a single numbering.
template <Policy P>
PolicyParams sft_train(const P& policy, PolicyParams params, std::span<const SftExample> data,
                       const SftConfig& cfg, const SftSink& sink = {}, int epoch_offset = 0,
                       int phase = 1) {
  if (data.empty()) throw ConfigError("SFT dataset is empty");
  if (cfg.epochs < 0) throw ConfigError("sft epochs must be >= 0");
  if (!(cfg.lr > 0.0)) throw ConfigError("sft lr must be > 0");
  if (cfg.batch_size == 0) throw ConfigError("sft batch_size must be > 0");
  if (cfg.epochs == 0) return params;

  std::vector<double> velocity(params.values.size(), 0.0);
  std::vector<std::size_t> order(data.size());
  std::vector<double> grad(params.values.size(), 0.0);
  for (int e = 0; e < cfg.epochs; ++e) {
    const int epoch = epoch_offset + e + 1;
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = substream(cfg.seed, {stream::kSftShuffle, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = data[order[i]];
        policy.accumulate_grad(params, ex.obs, ex.target, -scale, grad);
      }
      for (std::size_t k = 0; k < params.values.size(); ++k) {
        velocity[k] = cfg.momentum * velocity[k] + grad[k];
        params.values[k] -= cfg.lr * velocity[k];
      }
    }
    if (sink) sink({phase, epoch, dataset_nll(policy, params, data)});
  }
  return params;
}

// --- SFT dataset files -------------------------------------------------------

inline void write_sft_dataset(const fs::path& path, std::span<const SftExample> data) {
  std::string content;
  for (const auto& ex : data) {
    content += "{\"id\":" + json_string(ex.id) + ",\"features\":" + json_real_array(ex.obs.features) +
               ",\"target_text\":" + json_string(ex.target_text) + "}\n";
  }
  write_file(path, content);
}

template <Policy P>
std::vector<SftExample> load_sft_dataset(const fs::path& path, const P& policy) {
  const auto lines = read_lines(path);
  std::vector<SftExample> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const detail::LineContext ctx{path, i + 1};
    const Json j = parse_json_line(lines[i], path, i + 1);
    SftExample ex;
    ex.id = detail::require<std::string>(j, "id", ctx);
    ex.obs.features = detail::require<std::vector<double>>(j, "features", ctx);
    ex.target_text = detail::require<std::string>(j, "target_text", ctx);
    try {
      ex.target = policy.encode(ex.target_text);
    } catch (const InvalidTrace& e) {
      ctx.fail(e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace dpa
