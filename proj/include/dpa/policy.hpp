// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpa/error.hpp"
#include "dpa/random.hpp"

namespace dpa {

struct Observation {
  std::vector<double> features;

  std::size_t size() const { return features.size(); }
};

enum class PolicyKind { Categorical, Token };

inline const char* to_string(PolicyKind kind) {
  return kind == PolicyKind::Categorical ? "categorical" : "token";
}

inline PolicyKind parse_policy_kind(std::string_view s) {
  if (s == "categorical") return PolicyKind::Categorical;
  if (s == "token") return PolicyKind::Token;
  throw ConfigError("unknown policy kind \"" + std::string(s) + "\" (expected categorical|token)");
}

/// Identifies a policy architecture; together with the kind-specific shape
/// fields it fixes the parameter count exactly.
struct PolicyLayout {
  PolicyKind kind = PolicyKind::Categorical;
  std::size_t feature_dim = 0;
  std::size_t max_len = 0;          // token policy only
  std::vector<std::string> vocab;   // token policy only

  bool operator==(const PolicyLayout&) const = default;
};

struct PolicyParams {
  PolicyLayout layout;
  std::vector<double> values;
};

using ActionTrace = std::vector<int>;

struct ResponseSample {
  std::string text;
  ActionTrace trace;
  double log_prob = 0.0;
};

/// Interface shared by the categorical and token policies. Gradients are
/// accumulated: `accumulate_grad` adds `scale * d log pi / d theta` into
/// `grad` and returns log pi, so trainers can sum over many traces without
/// temporaries.
template <class P>
concept Policy = requires(const P& p, const PolicyParams& params, const Observation& obs,
                          const ActionTrace& trace, Rng& rng, std::span<double> grad,
                          std::string_view text) {
  { p.layout() } -> std::same_as<PolicyLayout>;
  { p.param_count() } -> std::same_as<std::size_t>;
  { p.init_params(std::uint64_t{}) } -> std::same_as<PolicyParams>;
  { p.sample(params, obs, rng) } -> std::same_as<ResponseSample>;
  { p.greedy(params, obs) } -> std::same_as<ResponseSample>;
  { p.log_prob(params, obs, trace) } -> std::same_as<double>;
  { p.accumulate_grad(params, obs, trace, 1.0, grad) } -> std::same_as<double>;
  { p.encode(text) } -> std::same_as<ActionTrace>;
  { p.render(trace) } -> std::same_as<std::string>;
};

template <Policy P>
ResponseSample sample_response(const P& policy, const PolicyParams& params,
                               const Observation& obs, Rng& rng) {
  return policy.sample(params, obs, rng);
}

template <Policy P>
double log_prob(const P& policy, const PolicyParams& params, const Observation& obs,
                const ResponseSample& resp) {
  return policy.log_prob(params, obs, resp.trace);
}

template <Policy P>
std::vector<double> grad_log_prob(const P& policy, const PolicyParams& params,
                                  const Observation& obs, const ResponseSample& resp) {
  std::vector<double> grad(policy.param_count(), 0.0);
  policy.accumulate_grad(params, obs, resp.trace, 1.0, grad);
  return grad;
}

namespace detail {

// In-place log-softmax; returns log-sum-exp of the input.
inline double log_softmax(std::span<double> z) {
  const double hi = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - hi);
  const double lse = hi + std::log(sum);
  for (double& v : z) v -= lse;
  return lse;
}

// Inverse-CDF draw from log-probabilities.
inline int sample_index(std::span<const double> logp, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < logp.size(); ++k) {
    acc += std::exp(logp[k]);
    if (u < acc) return static_cast<int>(k);
  }
  // Rounding left u above the accumulated mass; take the last non-zero entry.
  for (std::size_t k = logp.size(); k-- > 0;)
    if (std::exp(logp[k]) > 0.0) return static_cast<int>(k);
  return static_cast<int>(logp.size() - 1);
}

inline int argmax_index(std::span<const double> z) {
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

inline void check_params(const PolicyLayout& expected, std::size_t count,
                         const PolicyParams& params) {
  if (params.layout != expected)
    throw DimensionMismatch(std::string("parameter layout does not match ") +
                            to_string(expected.kind) + " policy");
  if (params.values.size() != count)
    throw DimensionMismatch("expected " + std::to_string(count) + " parameters, got " +
                            std::to_string(params.values.size()));
}

inline void check_obs(std::size_t feature_dim, const Observation& obs) {
  if (obs.size() != feature_dim)
    throw DimensionMismatch("expected " + std::to_string(feature_dim) + " features, got " +
                            std::to_string(obs.size()));
}

inline void check_grad(std::size_t count, std::span<double> grad) {
  if (grad.size() != count)
    throw DimensionMismatch("gradient buffer has " + std::to_string(grad.size()) +
                            " entries, expected " + std::to_string(count));
}

}  // namespace detail

}  // namespace dpa
