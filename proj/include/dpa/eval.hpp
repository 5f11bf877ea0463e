// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpa/answers.hpp"
#include "dpa/env.hpp"
#include "dpa/error.hpp"
#include "dpa/io.hpp"
#include "dpa/policy.hpp"
#include "dpa/rewards.hpp"

namespace dpa {

struct Judgment {
  std::string sample_id;
  std::optional<AnswerSet> predicted;  // nullopt: the response failed to parse
  AnswerSet label;
  bool correct = false;
  std::uint8_t dimensions = 0;  // bit d: some option of the sample has defect d

  bool has_dimension(DefectDimension d) const { return (dimensions >> static_cast<int>(d)) & 1U; }
};

/// A prediction is correct when it is well-formed and every chosen option is
/// correct; "N" matches only "N".
inline bool judge_response(const std::optional<AnswerSet>& pred, AnswerSet label) {
  return pred.has_value() && is_subset_of(*pred, label);
}

inline Judgment judge_sample(const SyntheticSample& s, std::string_view response_text) {
  if (!s.label || !s.defects)
    throw SchemaError("sample " + s.id + " has no labels (explore split cannot be evaluated)");
  Judgment j;
  j.sample_id = s.id;
  j.predicted = try_extract_answer_span(response_text);
  j.label = *s.label;
  j.correct = judge_response(j.predicted, j.label);
  j.dimensions = dimensions_present(*s.defects);
  return j;
}

/// Greedy decoding over every sample.
template <Policy P>
std::vector<Judgment> evaluate(const P& policy, const PolicyParams& params,
                               const std::vector<SyntheticSample>& samples) {
  std::vector<Judgment> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label) throw SchemaError("sample " + s.id + " has no labels (explore split cannot be evaluated)");
    out.push_back(judge_sample(s, policy.greedy(params, s.obs).text));
  }
  return out;
}

struct ScoreCount {
  std::size_t total = 0;
  std::size_t correct = 0;

  double percent() const {
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  }
  bool operator==(const ScoreCount&) const = default;
};

inline ScoreCount overall_count(const std::vector<Judgment>& judgments) {
  ScoreCount c;
  for (const auto& j : judgments) {
    ++c.total;
    if (j.correct) ++c.correct;
  }
  return c;
}

inline double overall_score(const std::vector<Judgment>& judgments) {
  if (judgments.empty()) throw ConfigError("overall_score of an empty judgment list");
  return overall_count(judgments).percent();
}

inline std::array<ScoreCount, kNumDimensions> dimension_counts(const std::vector<Judgment>& judgments) {
  std::array<ScoreCount, kNumDimensions> out{};
  for (const auto& j : judgments)
    for (int d = 0; d < kNumDimensions; ++d)
      if ((j.dimensions >> d) & 1U) {
        ++out[d].total;
        if (j.correct) ++out[d].correct;
      }
  return out;
}

/// Dimensions with no qualifying sample are absent from the map.
inline std::map<DefectDimension, double> dimension_scores(const std::vector<Judgment>& judgments) {
  std::map<DefectDimension, double> out;
  const auto counts = dimension_counts(judgments);
  for (int d = 0; d < kNumDimensions; ++d)
    if (counts[d].total > 0) out[static_cast<DefectDimension>(d)] = counts[d].percent();
  return out;
}

inline std::string judgment_line(const Judgment& j) {
  std::string dims = "[";
  bool first = true;
  for (auto d : kAllDimensions)
    if (j.has_dimension(d)) {
      if (!first) dims += ',';
      dims += json_string(to_string(d));
      first = false;
    }
  dims += ']';
  return "{\"sample_id\":" + json_string(j.sample_id) + ",\"predicted\":" +
         (j.predicted ? json_string(format_answer_set(*j.predicted)) : std::string("null")) +
         ",\"label\":" + json_string(format_answer_set(j.label)) +
         ",\"correct\":" + (j.correct ? "true" : "false") + ",\"dimensions\":" + dims + "}";
}

// --- reports -------------------------------------------------------------------

/// Counts behind one evaluated run, plus the checksum of the test file they
/// were computed on.
struct EvalSummary {
  std::string run;
  std::string test_checksum;
  ScoreCount overall;
  std::array<ScoreCount, kNumDimensions> dims{};

  bool operator==(const EvalSummary&) const = default;
};

inline EvalSummary summarize(std::string run, std::string checksum,
                             const std::vector<Judgment>& judgments) {
  return EvalSummary{std::move(run), std::move(checksum), overall_count(judgments),
                     dimension_counts(judgments)};
}

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string signed2(double v) {
  char buf[32];
  // Avoid printing "-0.00" for deltas that round to zero.
  if (v > -0.005 && v < 0.005) v = 0.0;
  std::snprintf(buf, sizeof buf, "%+.2f", v);
  return buf;
}

inline const char* kAttributionNote =
    "dimension attribution: a sample counts toward dimension d iff any option carries defect d; "
    "correctness is the subset rule";

inline std::string summary_table(const EvalSummary& s) {
  std::string out = "# " + std::string(kAttributionNote) + "\n";
  out += "run: " + s.run + "\ntest: " + s.test_checksum + "\n";
  out += "overall: " + fixed2(s.overall.percent()) + " (" + std::to_string(s.overall.correct) + "/" +
         std::to_string(s.overall.total) + ")\n";
  for (int d = 0; d < kNumDimensions; ++d) {
    out += std::string(to_string(static_cast<DefectDimension>(d))) + ": ";
    out += s.dims[d].total ? fixed2(s.dims[d].percent()) + " (" + std::to_string(s.dims[d].correct) +
                                 "/" + std::to_string(s.dims[d].total) + ")"
                           : std::string("absent");
    out += "\n";
  }
  return out;
}

inline Json summary_json(const EvalSummary& s) {
  Json j;
  j["run"] = s.run;
  j["test_checksum"] = s.test_checksum;
  j["overall"] = {{"correct", s.overall.correct}, {"total", s.overall.total},
                  {"score", s.overall.total ? s.overall.percent() : 0.0}};
  Json dims = Json::object();
  for (int d = 0; d < kNumDimensions; ++d) {
    Json e = {{"correct", s.dims[d].correct}, {"total", s.dims[d].total}};
    if (s.dims[d].total) e["score"] = s.dims[d].percent();
    dims[to_string(static_cast<DefectDimension>(d))] = e;
  }
  j["dimensions"] = dims;
  return j;
}

inline EvalSummary summary_from_json(const Json& j) {
  try {
    EvalSummary s;
    s.run = j.at("run").get<std::string>();
    s.test_checksum = j.at("test_checksum").get<std::string>();
    s.overall.correct = j.at("overall").at("correct").get<std::size_t>();
    s.overall.total = j.at("overall").at("total").get<std::size_t>();
    for (int d = 0; d < kNumDimensions; ++d) {
      const auto& e = j.at("dimensions").at(to_string(static_cast<DefectDimension>(d)));
      s.dims[d].correct = e.at("correct").get<std::size_t>();
      s.dims[d].total = e.at("total").get<std::size_t>();
    }
    return s;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed evaluation summary: ") + e.what());
  }
}

struct ComparisonReport {
  std::string text;
  Json json;
};

/// Side-by-side scores of two runs on the same test file, with b - a deltas.
inline ComparisonReport compare_report(const EvalSummary& a, const EvalSummary& b) {
  if (a.test_checksum != b.test_checksum)
    throw ChecksumError("runs were evaluated on different test files (" + a.test_checksum +
                        " vs " + b.test_checksum + ")");
  if (a.overall.total == 0 || b.overall.total == 0)
    throw SchemaError("cannot compare runs with no judged samples");

  ComparisonReport r;
  char line[256];
  r.text = "# " + std::string(kAttributionNote) + "\n";
  r.text += "test: " + a.test_checksum + "\n";
  std::snprintf(line, sizeof line, "%-24s %12s %12s %9s\n", "metric", a.run.c_str(), b.run.c_str(),
                "delta");
  r.text += line;
  auto row = [&](const char* name, const ScoreCount& x, const ScoreCount& y) {
    Json e;
    if (x.total == 0 && y.total == 0) {
      std::snprintf(line, sizeof line, "%-24s %12s %12s %9s\n", name, "absent", "absent", "-");
      e = {{"a", nullptr}, {"b", nullptr}, {"delta", nullptr}};
    } else {
      const double sa = x.total ? x.percent() : 0.0;
      const double sb = y.total ? y.percent() : 0.0;
      std::snprintf(line, sizeof line, "%-24s %12s %12s %9s\n", name, fixed2(sa).c_str(),
                    fixed2(sb).c_str(), signed2(sb - sa).c_str());
      e = {{"a", sa}, {"b", sb}, {"delta", sb - sa}};
    }
    r.text += line;
    return e;
  };
  r.json["test_checksum"] = a.test_checksum;
  r.json["run_a"] = a.run;
  r.json["run_b"] = b.run;
  r.json["overall"] = row("overall", a.overall, b.overall);
  Json dims = Json::object();
  for (int d = 0; d < kNumDimensions; ++d) {
    const char* name = to_string(static_cast<DefectDimension>(d));
    dims[name] = row(name, a.dims[d], b.dims[d]);
  }
  r.json["dimensions"] = dims;
  return r;
}

}  // namespace dpa
