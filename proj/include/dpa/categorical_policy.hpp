// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>

#include "dpa/answers.hpp"
#include "dpa/policy.hpp"
#include "dpa/rewards.hpp"

namespace dpa {

/// Softmax over the 16 answer sets with logits linear in the features.
/// Action k is AnswerSet::from_index(k); the emitted text always has the
/// fixed think/answer structure, so format reward is constant for this policy.
///
/// Parameter layout: row k holds F weights followed by one bias.
class CategoricalPolicy {
 public:
  static constexpr int kNumActions = kNumAnswerSets;
  static constexpr std::string_view kThinkText = "inspected all options";

  explicit CategoricalPolicy(std::size_t feature_dim) : feature_dim_(feature_dim) {}

  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t param_count() const { return kNumActions * (feature_dim_ + 1); }

  PolicyLayout layout() const {
    PolicyLayout l;
    l.kind = PolicyKind::Categorical;
    l.feature_dim = feature_dim_;
    return l;
  }

  /// Zero parameters: an exactly uniform policy. The seed is unused.
  PolicyParams init_params(std::uint64_t /*seed*/) const {
    return PolicyParams{layout(), std::vector<double>(param_count(), 0.0)};
  }

  std::array<double, kNumActions> log_probs(const PolicyParams& params,
                                            const Observation& obs) const {
    validate(params, obs);
    std::array<double, kNumActions> z{};
    const std::size_t stride = feature_dim_ + 1;
    for (int k = 0; k < kNumActions; ++k) {
      const double* w = params.values.data() + k * stride;
      double acc = w[feature_dim_];
      for (std::size_t f = 0; f < feature_dim_; ++f) acc += w[f] * obs.features[f];
      z[k] = acc;
    }
    detail::log_softmax(z);
    return z;
  }

  ResponseSample sample(const PolicyParams& params, const Observation& obs, Rng& rng) const {
    const auto lp = log_probs(params, obs);
    return make_sample(detail::sample_index(lp, rng), lp);
  }

  ResponseSample greedy(const PolicyParams& params, const Observation& obs) const {
    const auto lp = log_probs(params, obs);
    return make_sample(detail::argmax_index(lp), lp);
  }

  double log_prob(const PolicyParams& params, const Observation& obs,
                  const ActionTrace& trace) const {
    const int a = action_of(trace);
    return log_probs(params, obs)[a];
  }

  double accumulate_grad(const PolicyParams& params, const Observation& obs,
                         const ActionTrace& trace, double scale,
                         std::span<double> grad) const {
    detail::check_grad(param_count(), grad);
    const int a = action_of(trace);
    const auto lp = log_probs(params, obs);
    const std::size_t stride = feature_dim_ + 1;
    for (int k = 0; k < kNumActions; ++k) {
      const double c = scale * ((k == a ? 1.0 : 0.0) - std::exp(lp[k]));
      if (c == 0.0) continue;
      double* g = grad.data() + k * stride;
      for (std::size_t f = 0; f < feature_dim_; ++f) g[f] += c * obs.features[f];
      g[feature_dim_] += c;
    }
    return lp[a];
  }

  /// Maps a structured response onto its action; the think text is ignored.
  ActionTrace encode(std::string_view text) const {
    auto answer = try_extract_answer_span(text);
    if (!answer) throw InvalidTrace("categorical target is not a well-formed response");
    return {answer->index()};
  }

  std::string render(const ActionTrace& trace) const {
    const int a = action_of(trace);
    std::string out;
    out.append(kThinkOpen).append(kThinkText).append(kThinkClose);
    out.append(kAnswerOpen).append(format_answer_set(AnswerSet::from_index(a)))
        .append(kAnswerClose);
    return out;
  }

 private:
  void validate(const PolicyParams& params, const Observation& obs) const {
    detail::check_params(layout(), param_count(), params);
    detail::check_obs(feature_dim_, obs);
  }

  static int action_of(const ActionTrace& trace) {
    if (trace.size() != 1 || trace[0] < 0 || trace[0] >= kNumActions)
      throw InvalidTrace("categorical trace must hold exactly one action in [0, 16)");
    return trace[0];
  }

  ResponseSample make_sample(int a, const std::array<double, kNumActions>& lp) const {
    ResponseSample s;
    s.trace = {a};
    s.text = render(s.trace);
    s.log_prob = lp[a];
    return s;
  }

  std::size_t feature_dim_;
};

}  // namespace dpa
