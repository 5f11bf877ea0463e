// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dpa/answers.hpp"
#include "dpa/error.hpp"
#include "dpa/io.hpp"
#include "dpa/policy.hpp"
#include "dpa/random.hpp"

namespace dpa {

inline constexpr int kNumDimensions = 4;

enum class DefectDimension : int {
  AppearanceDeformation = 0,
  PhysicalShadow = 1,
  PlacementLayout = 2,
  ExtensionRationality = 3,
};

inline constexpr std::array<DefectDimension, kNumDimensions> kAllDimensions = {
    DefectDimension::AppearanceDeformation, DefectDimension::PhysicalShadow,
    DefectDimension::PlacementLayout, DefectDimension::ExtensionRationality};

inline const char* to_string(DefectDimension d) {
  switch (d) {
    case DefectDimension::AppearanceDeformation: return "appearance_deformation";
    case DefectDimension::PhysicalShadow: return "physical_shadow";
    case DefectDimension::PlacementLayout: return "placement_layout";
    case DefectDimension::ExtensionRationality: return "extension_rationality";
  }
  return "unknown";
}

enum class Split { Train, Test, Explore };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Explore: return "explore";
  }
  return "unknown";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "explore") return Split::Explore;
  throw SchemaError("unknown split \"" + std::string(s) + "\"");
}

/// Generator settings. Observation layout: a reference block of `block_size`
/// values, then for each option A..D one sub-block per dimension. A defect
/// shifts its sub-block by `defect_offset` with a fixed per-dimension sign
/// (+, -, +, -) before Gaussian noise of scale `noise` is added.
struct GenConfig {
  double defect_prob = 0.3;
  int block_size = 2;
  double noise = 0.1;
  double defect_offset = 1.0;

  std::size_t feature_dim() const {
    return static_cast<std::size_t>(block_size) * (1 + kNumOptions * kNumDimensions);
  }

  void validate() const {
    if (!(defect_prob >= 0.0 && defect_prob <= 1.0))
      throw ConfigError("env.defect_prob must lie in [0, 1]");
    if (block_size < 2) throw ConfigError("env.block_size must be >= 2");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("env.noise must be >= 0");
    if (!std::isfinite(defect_offset)) throw ConfigError("env.defect_offset must be finite");
  }

  bool operator==(const GenConfig&) const = default;
};

inline constexpr std::array<double, kNumDimensions> kDefectSigns = {1.0, -1.0, 1.0, -1.0};

/// defects[option][dimension]
using DefectMatrix = std::array<std::array<bool, kNumDimensions>, kNumOptions>;

inline AnswerSet label_from_defects(const DefectMatrix& defects) {
  std::uint8_t mask = 0;
  for (int j = 0; j < kNumOptions; ++j) {
    bool clean = true;
    for (int d = 0; d < kNumDimensions; ++d) clean = clean && !defects[j][d];
    if (clean) mask = static_cast<std::uint8_t>(mask | (1U << j));
  }
  return AnswerSet::from_mask(mask);
}

/// Bit d set when any option carries a defect of dimension d.
inline std::uint8_t dimensions_present(const DefectMatrix& defects) {
  std::uint8_t bits = 0;
  for (int j = 0; j < kNumOptions; ++j)
    for (int d = 0; d < kNumDimensions; ++d)
      if (defects[j][d]) bits = static_cast<std::uint8_t>(bits | (1U << d));
  return bits;
}

struct SyntheticSample {
  std::string id;
  Split split = Split::Train;
  Observation obs;
  std::optional<DefectMatrix> defects;  // withheld for the explore split
  std::optional<AnswerSet> label;

  bool operator==(const SyntheticSample& o) const {
    return id == o.id && split == o.split && obs.features == o.obs.features &&
           defects == o.defects && label == o.label;
  }
};

inline SyntheticSample generate_sample(const GenConfig& cfg, Rng& rng, std::string id = {},
                                       Split split = Split::Train) {
  cfg.validate();
  SyntheticSample s;
  s.id = std::move(id);
  s.split = split;

  DefectMatrix defects{};
  for (int j = 0; j < kNumOptions; ++j)
    for (int d = 0; d < kNumDimensions; ++d) defects[j][d] = uniform01(rng) < cfg.defect_prob;

  const auto b = static_cast<std::size_t>(cfg.block_size);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto& x = s.obs.features;
  x.resize(cfg.feature_dim());
  for (std::size_t i = 0; i < b; ++i) x[i] = gauss(rng);
  for (int j = 0; j < kNumOptions; ++j) {
    for (int d = 0; d < kNumDimensions; ++d) {
      const std::size_t base = b * (1 + static_cast<std::size_t>(j * kNumDimensions + d));
      const double shift = defects[j][d] ? kDefectSigns[d] * cfg.defect_offset : 0.0;
      for (std::size_t i = 0; i < b; ++i) x[base + i] = x[i] + shift + cfg.noise * gauss(rng);
    }
  }

  if (split != Split::Explore) {
    s.defects = defects;
    s.label = label_from_defects(defects);
  }
  return s;
}

struct SplitSizes {
  std::size_t train = 500;
  std::size_t test = 200;
  std::size_t explore = 100;

  std::size_t of(Split s) const {
    return s == Split::Train ? train : s == Split::Test ? test : explore;
  }
};

inline std::string sample_id(Split split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06zu", to_string(split), index);
  return buf;
}

/// Each sample draws from its own (seed, split, index) substream.
inline std::vector<SyntheticSample> generate_split(const GenConfig& cfg, Split split,
                                                   std::size_t count, std::uint64_t seed) {
  std::vector<SyntheticSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = substream(seed, {stream::kEnv, static_cast<std::uint64_t>(split), i});
    out.push_back(generate_sample(cfg, rng, sample_id(split, i), split));
  }
  return out;
}

// --- dataset files ---------------------------------------------------------

inline constexpr int kDatasetVersion = 1;

struct DatasetHeader {
  int version = kDatasetVersion;
  std::size_t feature_dim = 0;
  int block_size = 0;
  GenConfig gen;
  std::uint64_t seed = 0;

  bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<SyntheticSample> samples;
};

inline std::string dataset_header_line(const GenConfig& cfg, std::uint64_t seed) {
  std::string out = "{\"version\":" + std::to_string(kDatasetVersion);
  out += ",\"F\":" + std::to_string(cfg.feature_dim());
  out += ",\"b\":" + std::to_string(cfg.block_size);
  out += ",\"gen_cfg\":{\"defect_prob\":" + format_real(cfg.defect_prob);
  out += ",\"block_size\":" + std::to_string(cfg.block_size);
  out += ",\"noise\":" + format_real(cfg.noise);
  out += ",\"defect_offset\":" + format_real(cfg.defect_offset) + "}";
  out += ",\"seed\":" + std::to_string(seed) + "}";
  return out;
}

inline std::string defect_row_string(const std::array<bool, kNumDimensions>& row) {
  std::string s;
  for (bool v : row) s.push_back(v ? '1' : '0');
  return s;
}

inline std::string sample_record_line(const SyntheticSample& s) {
  std::string out = "{\"id\":" + json_string(s.id);
  out += ",\"split\":" + json_string(to_string(s.split));
  out += ",\"features\":" + json_real_array(s.obs.features);
  out += ",\"defects\":";
  if (s.defects) {
    out += '[';
    for (int j = 0; j < kNumOptions; ++j) {
      if (j) out += ',';
      out += '"' + defect_row_string((*s.defects)[j]) + '"';
    }
    out += ']';
  } else {
    out += "null";
  }
  out += ",\"label\":";
  out += s.label ? json_string(format_answer_set(*s.label)) : "null";
  out += '}';
  return out;
}

inline void write_dataset_file(const fs::path& path, const GenConfig& cfg, std::uint64_t seed,
                               const std::vector<SyntheticSample>& samples) {
  std::string content = dataset_header_line(cfg, seed) + '\n';
  for (const auto& s : samples) content += sample_record_line(s) + '\n';
  write_file(path, content);
}

inline fs::path split_path(const fs::path& dir, Split split) {
  return dir / (std::string(to_string(split)) + ".jsonl");
}

/// Writes train/test/explore files under `dir`; returns their paths.
inline std::array<fs::path, 3> generate_dataset(const GenConfig& cfg, const SplitSizes& sizes,
                                                std::uint64_t seed, const fs::path& dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::array<fs::path, 3> paths;
  int i = 0;
  for (Split split : {Split::Train, Split::Test, Split::Explore}) {
    paths[i] = split_path(dir, split);
    write_dataset_file(paths[i], cfg, seed, generate_split(cfg, split, sizes.of(split), seed));
    ++i;
  }
  return paths;
}

namespace detail {

inline DatasetHeader parse_header(const Json& j, const LineContext& ctx) {
  if (!j.is_object() || !j.contains("version") || j.contains("id"))
    ctx.fail("missing dataset header record");
  DatasetHeader h;
  h.version = require<int>(j, "version", ctx);
  if (h.version != kDatasetVersion) ctx.fail("unsupported dataset version " + std::to_string(h.version));
  h.feature_dim = require<std::size_t>(j, "F", ctx);
  h.block_size = require<int>(j, "b", ctx);
  h.seed = require<std::uint64_t>(j, "seed", ctx);
  if (!j.contains("gen_cfg") || !j["gen_cfg"].is_object()) ctx.fail("missing field \"gen_cfg\"");
  const Json& g = j["gen_cfg"];
  h.gen.defect_prob = require<double>(g, "defect_prob", ctx);
  h.gen.block_size = require<int>(g, "block_size", ctx);
  h.gen.noise = require<double>(g, "noise", ctx);
  h.gen.defect_offset = require<double>(g, "defect_offset", ctx);
  if (h.gen.block_size != h.block_size) ctx.fail("b disagrees with gen_cfg.block_size");
  try {
    h.gen.validate();
  } catch (const ConfigError& e) {
    ctx.fail(e.what());
  }
  if (h.feature_dim != h.gen.feature_dim())
    ctx.fail("F = " + std::to_string(h.feature_dim) + " does not match block size");
  return h;
}

inline SyntheticSample parse_record(const Json& j, const DatasetHeader& h, const LineContext& ctx) {
  SyntheticSample s;
  s.id = require<std::string>(j, "id", ctx);
  const auto split = require<std::string>(j, "split", ctx);
  if (split != "train" && split != "test" && split != "explore")
    ctx.fail("unknown split \"" + split + "\"");
  s.split = parse_split(split);
  s.obs.features = require<std::vector<double>>(j, "features", ctx);
  if (s.obs.size() != h.feature_dim)
    ctx.fail("expected " + std::to_string(h.feature_dim) + " features, got " +
             std::to_string(s.obs.size()));
  for (double v : s.obs.features)
    if (!std::isfinite(v)) ctx.fail("non-finite feature");

  if (!j.contains("defects") || !j.contains("label")) ctx.fail("missing defects/label fields");
  const Json& jd = j["defects"];
  const Json& jl = j["label"];
  if (s.split == Split::Explore) {
    if (!jd.is_null() || !jl.is_null()) ctx.fail("explore records must not carry annotations");
    return s;
  }
  if (!jd.is_array() || jd.size() != kNumOptions) ctx.fail("defects must hold 4 option rows");
  DefectMatrix defects{};
  for (int jj = 0; jj < kNumOptions; ++jj) {
    if (!jd[jj].is_string()) ctx.fail("defect row must be a string");
    const auto row = jd[jj].get<std::string>();
    if (row.size() != kNumDimensions) ctx.fail("defect row \"" + row + "\" must have 4 digits");
    for (int d = 0; d < kNumDimensions; ++d) {
      if (row[d] != '0' && row[d] != '1') ctx.fail("defect row \"" + row + "\" must be binary");
      defects[jj][d] = row[d] == '1';
    }
  }
  if (!jl.is_string()) ctx.fail("label must be a string");
  const auto label = try_parse_answer_set(jl.get<std::string>());
  if (!label) ctx.fail("unparseable label \"" + jl.get<std::string>() + "\"");
  const AnswerSet expected = label_from_defects(defects);
  if (*label != expected)
    ctx.fail("label \"" + format_answer_set(*label) + "\" inconsistent with defects (expected \"" +
             format_answer_set(expected) + "\")");
  s.defects = defects;
  s.label = label;
  return s;
}

}  // namespace detail

inline Dataset load_dataset(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw SchemaError(path.string() + ":1: missing dataset header record");
  Dataset ds;
  ds.header = detail::parse_header(parse_json_line(lines[0], path, 1),
                                   detail::LineContext{path, 1});
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const detail::LineContext ctx{path, i + 1};
    ds.samples.push_back(detail::parse_record(parse_json_line(lines[i], path, i + 1), ds.header, ctx));
  }
  return ds;
}

inline std::vector<Observation> observations(const std::vector<SyntheticSample>& samples) {
  std::vector<Observation> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.obs);
  return out;
}

}  // namespace dpa
