// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "dpa/answers.hpp"
#include "dpa/policy.hpp"
#include "dpa/random.hpp"

namespace dpa {

namespace token {
enum : int {
  kThinkOpen = 0,
  kThinkClose,
  kAnswerOpen,
  kAnswerClose,
  kA,
  kB,
  kC,
  kD,
  kN,
  kEos,
  kFillerOk,
  kFillerShape,
  kFillerShadow,
  kFillerLayout,
  kFillerExtent,
  kFillerMaybe,
  kVocabSize
};

inline constexpr int letter(int option) { return kA + option; }
}  // namespace token

inline const std::vector<std::string>& token_vocab() {
  static const std::vector<std::string> vocab = {
      "<think>", "</think>", "<answer>", "</answer>", "A",       "B",
      "C",       "D",        "N",        "<eos>",     " ok",     " shape",
      " shadow", " layout",  " extent",  " maybe"};
  return vocab;
}

/// Autoregressive policy over a 16-token vocabulary. The next-token logits
/// are a linear map of the context vector
///
///   [ x | onehot(position) | bag(previous tokens) | 1 ]
///
/// where the bag holds per-token counts of everything emitted so far.
/// Generation stops at <eos> or after max_len tokens. Parameters are a
/// row-major V x D matrix.
class TokenPolicy {
 public:
  static constexpr int kVocab = token::kVocabSize;
  static constexpr std::size_t kDefaultMaxLen = 32;

  explicit TokenPolicy(std::size_t feature_dim, std::size_t max_len = kDefaultMaxLen)
      : feature_dim_(feature_dim), max_len_(max_len) {}

  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t max_len() const { return max_len_; }
  std::size_t context_dim() const { return feature_dim_ + max_len_ + kVocab + 1; }
  std::size_t param_count() const { return kVocab * context_dim(); }

  PolicyLayout layout() const {
    PolicyLayout l;
    l.kind = PolicyKind::Token;
    l.feature_dim = feature_dim_;
    l.max_len = max_len_;
    l.vocab = token_vocab();
    return l;
  }

  /// Uniform in [-0.01, 0.01].
  PolicyParams init_params(std::uint64_t seed) const {
    PolicyParams p{layout(), std::vector<double>(param_count())};
    Rng rng = substream(seed, {stream::kInit});
    for (double& v : p.values) v = -0.01 + 0.02 * uniform01(rng);
    return p;
  }

  ResponseSample sample(const PolicyParams& params, const Observation& obs, Rng& rng) const {
    return generate(params, obs, &rng);
  }

  ResponseSample greedy(const PolicyParams& params, const Observation& obs) const {
    return generate(params, obs, nullptr);
  }

  double log_prob(const PolicyParams& params, const Observation& obs,
                  const ActionTrace& trace) const {
    validate(params, obs);
    check_trace(trace);
    Decoder dec(*this, params, obs);
    double total = 0.0;
    for (int tok : trace) {
      dec.next_log_probs();
      total += dec.logp[tok];
      dec.push(tok);
    }
    return total;
  }

  double accumulate_grad(const PolicyParams& params, const Observation& obs,
                         const ActionTrace& trace, double scale,
                         std::span<double> grad) const {
    validate(params, obs);
    check_trace(trace);
    detail::check_grad(param_count(), grad);
    const std::size_t dim = context_dim();
    const std::size_t f = feature_dim_;
    // The observation block is shared by every step, so its coefficients are
    // summed over the trace and applied once at the end.
    std::array<double, kVocab> coef_x{};
    Decoder dec(*this, params, obs);
    double total = 0.0;
    for (std::size_t t = 0; t < trace.size(); ++t) {
      const int tok = trace[t];
      dec.next_log_probs();
      total += dec.logp[tok];
      for (int k = 0; k < kVocab; ++k) {
        const double c = scale * ((k == tok ? 1.0 : 0.0) - std::exp(dec.logp[k]));
        double* row = grad.data() + k * dim;
        coef_x[k] += c;
        row[pos_offset() + t] += c;
        for (int v = 0; v < kVocab; ++v)
          if (dec.bag[v] != 0) row[bag_offset() + v] += c * dec.bag[v];
        row[dim - 1] += c;
      }
      dec.push(tok);
    }
    for (int k = 0; k < kVocab; ++k) {
      double* row = grad.data() + k * dim;
      for (std::size_t i = 0; i < f; ++i) row[i] += coef_x[k] * obs.features[i];
    }
    return total;
  }

  /// Greedy longest-match tokenization of a response; appends <eos> when
  /// the text is shorter than max_len tokens.
  ActionTrace encode(std::string_view text) const {
    const auto& vocab = token_vocab();
    ActionTrace out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      int best = -1;
      std::size_t best_len = 0;
      for (int k = 0; k < kVocab; ++k) {
        if (k == token::kEos) continue;
        const auto& s = vocab[k];
        if (s.size() > best_len && text.substr(pos, s.size()) == s) {
          best = k;
          best_len = s.size();
        }
      }
      if (best < 0)
        throw InvalidTrace("untokenizable text at offset " + std::to_string(pos));
      out.push_back(best);
      pos += best_len;
    }
    if (out.size() > max_len_)
      throw InvalidTrace("target has " + std::to_string(out.size()) + " tokens, cap is " +
                         std::to_string(max_len_));
    if (out.size() < max_len_) out.push_back(token::kEos);
    return out;
  }

  std::string render(const ActionTrace& trace) const {
    check_trace(trace);
    const auto& vocab = token_vocab();
    std::string out;
    for (int tok : trace)
      if (tok != token::kEos) out += vocab[tok];
    return out;
  }

 private:
  std::size_t pos_offset() const { return feature_dim_; }
  std::size_t bag_offset() const { return pos_offset() + max_len_; }

  // Incremental decoding state for one sequence.
  struct Decoder {
    Decoder(const TokenPolicy& pol, const PolicyParams& params, const Observation& obs)
        : policy(pol), w(params.values.data()) {
      const std::size_t dim = pol.context_dim();
      const std::size_t f = pol.feature_dim_;
      for (int k = 0; k < kVocab; ++k) {
        const double* row = w + k * dim;
        double a = 0.0;
        for (std::size_t i = 0; i < f; ++i) a += row[i] * obs.features[i];
        x_term[k] = a;
      }
    }

    void next_log_probs() {
      const std::size_t dim = policy.context_dim();
      for (int k = 0; k < kVocab; ++k) {
        const double* row = w + k * dim;
        double z = x_term[k] + row[policy.pos_offset() + position] + row[dim - 1];
        for (int v = 0; v < kVocab; ++v)
          if (bag[v] != 0) z += row[policy.bag_offset() + v] * bag[v];
        logp[k] = z;
      }
      detail::log_softmax(logp);
    }

    void push(int tok) {
      bag[tok] += 1;
      ++position;
    }

    const TokenPolicy& policy;
    const double* w;
    std::array<double, kVocab> x_term{};
    std::array<double, kVocab> logp{};
    std::array<int, kVocab> bag{};
    std::size_t position = 0;
  };

  ResponseSample generate(const PolicyParams& params, const Observation& obs, Rng* rng) const {
    validate(params, obs);
    Decoder dec(*this, params, obs);
    ResponseSample s;
    for (std::size_t t = 0; t < max_len_; ++t) {
      dec.next_log_probs();
      const int tok = rng ? detail::sample_index(dec.logp, *rng) : detail::argmax_index(dec.logp);
      s.log_prob += dec.logp[tok];
      s.trace.push_back(tok);
      if (tok == token::kEos) break;
      dec.push(tok);
    }
    s.text = render(s.trace);
    return s;
  }

  void validate(const PolicyParams& params, const Observation& obs) const {
    detail::check_params(layout(), param_count(), params);
    detail::check_obs(feature_dim_, obs);
  }

  void check_trace(const ActionTrace& trace) const {
    if (trace.size() > max_len_)
      throw InvalidTrace("trace longer than max_len " + std::to_string(max_len_));
    for (std::size_t t = 0; t < trace.size(); ++t) {
      if (trace[t] < 0 || trace[t] >= kVocab)
        throw InvalidTrace("token id " + std::to_string(trace[t]) + " out of range");
      if (trace[t] == token::kEos && t + 1 != trace.size())
        throw InvalidTrace("<eos> before the end of the trace");
    }
  }

  std::size_t feature_dim_;
  std::size_t max_len_;
};

}  // namespace dpa
