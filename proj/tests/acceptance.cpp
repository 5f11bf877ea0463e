// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate. One line per criterion; the exit status is non-zero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dpa/dpa.hpp"
#include "dpa/pipeline.hpp"

using namespace dpa;

namespace {

// --- pinned tolerances and budgets -------------------------------------------------------

constexpr double kRewardTol = 1e-12;
constexpr double kOracleBudgetSec = 1.0;

constexpr int kGradInstances = 20;
constexpr double kFdStep = 1e-5;
constexpr double kFdFloor = 1e-5;  // denominator floor of the relative error
constexpr double kFdMaxRelErr = 1e-4;
constexpr double kGradBudgetSec = 30.0;

constexpr int kAdvGroups = 1000;
constexpr double kAdvMeanTol = 1e-9;
constexpr double kAdvStdTol = 1e-6;
constexpr double kShiftTol = 1e-12;

constexpr int kKlDraws = 10000;
constexpr double kKlTol = 1e-12;

constexpr double kClipSensitivity = 1e-8;

constexpr int kAblationSeeds = 5;
constexpr double kDpaMargin = 3.0;
constexpr double kAblationBudgetSec = 600.0;

constexpr int kComplianceDraws = 1000;
constexpr double kComplianceBefore = 0.50;
constexpr double kComplianceAfter = 0.95;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_root(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dpa_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double max_fd_error(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                    const std::vector<double>& analytic) {
  double worst = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    x[k] = x0 + kFdStep;
    const double up = f(x);
    x[k] = x0 - kFdStep;
    const double dn = f(x);
    x[k] = x0;
    const double num = (up - dn) / (2.0 * kFdStep);
    const double den = std::max({std::abs(analytic[k]), std::abs(num), kFdFloor});
    worst = std::max(worst, std::abs(analytic[k] - num) / den);
  }
  return worst;
}

void randomize(PolicyParams& p, Rng& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  for (double& v : p.values) v = g(rng);
}

// --- 1 -------------------------------------------------------------------------------------

// Membership enumeration over labelled option sets, N being its own member.
double membership_oracle(AnswerSet r, AnswerSet a) {
  std::vector<std::string> rm, am;
  auto members = [](AnswerSet s, std::vector<std::string>& out) {
    const std::string text = format_answer_set(s);
    for (char c : text) out.emplace_back(1, c);
  };
  members(r, rm);
  members(a, am);
  std::size_t inside = 0;
  for (const auto& x : rm)
    for (const auto& y : am) inside += x == y;
  return inside == rm.size() ? double(rm.size()) / double(am.size()) : 0.0;
}

Outcome criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  int agree = 0;
  double worst = 0.0;
  for (auto r : all_answer_sets())
    for (auto a : all_answer_sets()) {
      const double d = std::abs(dpa_accuracy_reward(r, a) - membership_oracle(r, a));
      worst = std::max(worst, d);
      agree += d <= kRewardTol;
    }
  const double secs = seconds_since(t0);
  return {agree == 256 && secs < kOracleBudgetSec,
          fmt("%d/256 pairs agree, max |diff| %.3g, %.4f s", agree, worst, secs)};
}

// --- 2 -------------------------------------------------------------------------------------

Outcome criterion_2() {
  const auto pred = parse_answer_set("A");
  const auto label = parse_answer_set("AC");
  const bool judged = judge_response(pred, label);
  const double dpa = dpa_accuracy_reward(pred, label);
  const double bin = binary_accuracy_reward(pred, label);
  return {judged && dpa == 0.5 && bin == 0.0,
          fmt("pred A vs label AC: judged %s, dpa %.17g, binary %.17g", judged ? "correct" : "incorrect", dpa,
              bin)};
}

// --- 3 -------------------------------------------------------------------------------------

template <class P>
double nll_instance(const P& pol, const std::vector<SftExample>& ex, Rng& rng, int t) {
  auto p = pol.init_params(static_cast<std::uint64_t>(t));
  randomize(p, rng, 0.2);
  std::span<const SftExample> batch(ex.data() + 3 * t, 3);
  const auto lg = nll_loss(pol, p, batch);
  return max_fd_error([&](const std::vector<double>& v) { return nll_loss(pol, PolicyParams{p.layout, v}, batch).loss; },
                      p.values, lg.grad);
}

template <class P>
bool near_clip_boundary(const P& pol, const PolicyParams& cur, const GroupRollout& g, double eps) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double w = std::exp(pol.log_prob(cur, g.obs, g.responses[i].trace) - g.old_log_probs[i]);
    if (std::abs(w - (1.0 + eps)) < 1e-3 || std::abs(w - (1.0 - eps)) < 1e-3) return true;
  }
  return false;
}

// Objective at perturbed parameters with old/ref log-probs and advantages
// fixed; rewards are replaced by a spread so that advantages are non-zero.
template <class P>
std::optional<double> objective_instance(const P& pol, const std::vector<SyntheticSample>& data, Rng& rng,
                                         int t) {
  TrainConfig cfg;
  cfg.beta = 0.1;
  std::normal_distribution<double> g(0.0, 1.0);
  auto ref = pol.init_params(static_cast<std::uint64_t>(t));
  randomize(ref, rng, 0.3);
  auto old_p = ref;
  for (double& v : old_p.values) v += 0.05 * g(rng);
  auto cur = old_p;
  for (double& v : cur.values) v += 0.02 * g(rng);
  const auto& s = data[static_cast<std::size_t>(t) % data.size()];
  auto group = sample_group(pol, old_p, ref, s.obs, *s.label, cfg, static_cast<std::uint64_t>(t));
  std::vector<double> r(group.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<double>((i * 7 + static_cast<std::size_t>(t)) % 4);
  group.advantages = compute_advantages(r, cfg.std_floor);
  if (near_clip_boundary(pol, cur, group, cfg.eps_clip)) return std::nullopt;
  GroupRollout work = group;
  const auto res = grpo_objective(pol, cur, work, cfg);
  return max_fd_error(
      [&](const std::vector<double>& v) {
        GroupRollout h = group;
        return grpo_objective(pol, PolicyParams{cur.layout, v}, h, cfg).objective;
      },
      cur.values, res.grad);
}

template <class P>
std::pair<double, int> grad_suite(const P& pol, const std::vector<SyntheticSample>& data, std::uint64_t seed) {
  Rng rng = substream(seed, {});
  const auto ex = build_sft_examples(pol, data, TargetSource::WeakOracle, 0.38, seed);
  double worst = 0.0;
  int count = 0;
  for (int t = 0; t < kGradInstances; ++t) {
    worst = std::max(worst, nll_instance(pol, ex, rng, t));
    ++count;
  }
  int done = 0;
  for (int t = 0; done < kGradInstances && t < 10 * kGradInstances; ++t) {
    if (auto e = objective_instance(pol, data, rng, t)) {
      worst = std::max(worst, *e);
      ++done;
    }
  }
  return {worst, std::min(count, done)};
}

Outcome criterion_3() {
  const auto t0 = std::chrono::steady_clock::now();
  const GenConfig gen;
  const auto data = generate_split(gen, Split::Train, 3 * kGradInstances, 31);
  const auto [cat_err, cat_n] = grad_suite(CategoricalPolicy(gen.feature_dim()), data, 1);
  const auto [tok_err, tok_n] = grad_suite(TokenPolicy(gen.feature_dim(), 16), data, 2);
  const double secs = seconds_since(t0);
  const bool pass = cat_err < kFdMaxRelErr && tok_err < kFdMaxRelErr && cat_n >= kGradInstances &&
                    tok_n >= kGradInstances && secs < kGradBudgetSec;
  return {pass, fmt("categorical max rel err %.3g, token max rel err %.3g over %d loss + %d objective "
                    "instances each, %.1f s",
                    cat_err, tok_err, kGradInstances, std::min(cat_n, tok_n), secs)};
}

// --- 4 -------------------------------------------------------------------------------------

Outcome criterion_4() {
  Rng rng = substream(4, {});
  std::uniform_int_distribution<int> pick(0, 3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  const int sizes[] = {2, 4, 8, 16};
  double worst_mean = 0.0, worst_std = 0.0, worst_shift = 0.0;
  int groups = 0;
  while (groups < kAdvGroups) {
    const int g = sizes[pick(rng)];
    std::vector<double> r(g);
    for (double& x : r) x = u(rng);
    double m = 0.0;
    for (double x : r) m += x;
    m /= g;
    double v = 0.0;
    for (double x : r) v += (x - m) * (x - m);
    if (std::sqrt(v / g) <= 1e-6) continue;
    const auto a = compute_advantages(r, 1e-6);
    double am = 0.0;
    for (double x : a) am += x;
    am /= g;
    double av = 0.0;
    for (double x : a) av += (x - am) * (x - am);
    worst_mean = std::max(worst_mean, std::abs(am));
    worst_std = std::max(worst_std, std::abs(std::sqrt(av / g) - 1.0));
    const double c = 10.0 * u(rng) - 10.0;
    std::vector<double> shifted = r;
    for (double& x : shifted) x += c;
    const auto b = compute_advantages(shifted, 1e-6);
    for (int i = 0; i < g; ++i) worst_shift = std::max(worst_shift, std::abs(a[i] - b[i]));
    ++groups;
  }
  bool constant_zero = true;
  for (int g : sizes)
    for (double level : {0.0, 1.0, 1.5, 2.0}) {
      const std::vector<double> r(g, level);
      for (double x : compute_advantages(r, 1e-6)) constant_zero = constant_zero && x == 0.0;
    }
  const bool pass = worst_mean < kAdvMeanTol && worst_std < kAdvStdTol && worst_shift <= kShiftTol && constant_zero;
  return {pass, fmt("%d groups: max |mean| %.3g, max |std-1| %.3g, max shift diff %.3g, constant groups %s",
                    groups, worst_mean, worst_std, worst_shift, constant_zero ? "zero" : "NON-ZERO")};
}

// --- 5 -------------------------------------------------------------------------------------

Outcome criterion_5() {
  Rng rng = substream(5, {});
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  double lowest = 0.0;
  for (int i = 0; i < kKlDraws; ++i) {
    const double cur = u(rng);
    const double log_ratio = u(rng);
    lowest = std::min(lowest, kl_penalty(cur, cur + log_ratio).value);
  }
  const double at_one = kl_penalty(-1.7, -1.7).value;
  const double at_two = kl_penalty(-3.0, -3.0 + std::log(2.0)).value;
  const double want = 2.0 - std::log(2.0) - 1.0;
  const bool pass = lowest >= -kKlTol && at_one == 0.0 && std::abs(at_two - want) <= kKlTol;
  return {pass, fmt("min over %d draws %.3g, value at rho=1 %.3g, |value at rho=2 - (1 - ln 2)| %.3g", kKlDraws,
                    lowest, at_one, std::abs(at_two - want))};
}

// --- 6 -------------------------------------------------------------------------------------

Outcome criterion_6() {
  const GenConfig gen;
  const auto data = generate_split(gen, Split::Train, 64, 6);
  CategoricalPolicy pol(gen.feature_dim());
  TrainConfig cfg;
  cfg.mu = 3;
  cfg.lr = 1.0;
  cfg.beta = 0.04;
  auto params = pol.init_params(0);
  Rng prng = substream(6, {1});
  randomize(params, prng, 0.1);
  const auto ref = params;

  std::vector<GroupRollout> groups;
  for (std::size_t p = 0; p < 16; ++p) {
    const auto& s = data[p];
    groups.push_back(sample_group(pol, params, ref, s.obs, *s.label, cfg, substream_seed(6, {p})));
  }
  int probed = 0;
  double worst = 0.0;
  bool analytic_zero = true;
  for (int inner = 0; inner < cfg.mu; ++inner) {
    ObjectiveResult obj;
    obj.grad.assign(pol.param_count(), 0.0);
    for (auto& g : groups) accumulate_objective(pol, params, g, cfg, 1.0 / groups.size(), obj);
    // Probe responses on the clipped positive branch.
    for (const auto& g : groups)
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double w = std::exp(g.cur_log_probs[i] - g.old_log_probs[i]);
        if (!(g.advantages[i] > 0.0 && w > 1.0 + cfg.eps_clip + 1e-3)) continue;
        GroupRollout one;
        one.obs = g.obs;
        one.label = g.label;
        one.responses = {g.responses[i]};
        one.old_log_probs = {g.old_log_probs[i]};
        one.ref_log_probs = {g.ref_log_probs[i]};
        one.advantages = {g.advantages[i]};
        TrainConfig surrogate_only = cfg;
        surrogate_only.beta = 0.0;
        GroupRollout work = one;
        const auto res = grpo_objective(pol, params, work, surrogate_only);
        for (double v : res.grad) analytic_zero = analytic_zero && v == 0.0;
        std::vector<double> x = params.values;
        for (std::size_t k = 0; k < x.size(); ++k) {
          const double x0 = x[k];
          auto f = [&](double v) {
            x[k] = v;
            GroupRollout h = one;
            const double o = grpo_objective(pol, PolicyParams{params.layout, x}, h, surrogate_only).objective;
            x[k] = x0;
            return o;
          };
          worst = std::max(worst, std::abs(f(x0 + kFdStep) - f(x0 - kFdStep)) / (2.0 * kFdStep));
        }
        ++probed;
      }
    for (std::size_t k = 0; k < params.values.size(); ++k) params.values[k] += cfg.lr * obj.grad[k];
  }
  const bool pass = probed > 0 && analytic_zero && worst < kClipSensitivity;
  return {pass, fmt("%d clipped responses (A>0, w>1+eps) over mu=3 updates; analytic grad %s, max FD "
                    "sensitivity %.3g",
                    probed, analytic_zero ? "zero" : "NON-ZERO", worst)};
}

// --- 7 -------------------------------------------------------------------------------------

struct ArmScores {
  double base = 0, sft = 0, binary = 0, dpa = 0, raw = 0;
};

double eval_score(const RunConfig& cfg, const fs::path& ckpt, const fs::path& test, const fs::path& out) {
  cmd_eval(cfg, ckpt, test, out);
  return load_eval_summary(out).overall.percent();
}

ArmScores run_arms(std::uint64_t seed, const fs::path& root) {
  const auto cfg = load_run_config(std::nullopt, {"seed=" + std::to_string(seed)});
  const auto bin = load_run_config(std::nullopt, {"seed=" + std::to_string(seed), "rl.reward_mode=binary"});
  const auto data = root / "data";
  const auto test = data / "test.jsonl";
  cmd_gen_data(cfg, data);
  const auto init = root / "init.txt";
  {
    const auto header = load_dataset(test).header;
    save_checkpoint(init, with_policy(layout_for(cfg, header.feature_dim),
                                      [&](const auto& pol) { return pol.init_params(cfg.seed); }));
  }
  cmd_sft(cfg, data, root / "sft");
  const auto sft_ckpt = root / "sft" / "checkpoint.txt";
  cmd_train(cfg, data, root / "rl_dpa", sft_ckpt, false);
  cmd_train(bin, data, root / "rl_binary", sft_ckpt, false);
  cmd_train(cfg, data, root / "rl_raw", std::nullopt, true);
  ArmScores s;
  s.base = eval_score(cfg, init, test, root / "ev_base");
  s.sft = eval_score(cfg, sft_ckpt, test, root / "ev_sft");
  s.binary = eval_score(cfg, root / "rl_binary" / "checkpoint.txt", test, root / "ev_binary");
  s.dpa = eval_score(cfg, root / "rl_dpa" / "checkpoint.txt", test, root / "ev_dpa");
  s.raw = eval_score(cfg, root / "rl_raw" / "checkpoint.txt", test, root / "ev_raw");
  return s;
}

Outcome criterion_7() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto root = scratch_root("ablation");
  ArmScores mean;
  std::string per_seed;
  for (int seed = 0; seed < kAblationSeeds; ++seed) {
    const auto s = run_arms(static_cast<std::uint64_t>(seed), root / ("seed" + std::to_string(seed)));
    mean.base += s.base / kAblationSeeds;
    mean.sft += s.sft / kAblationSeeds;
    mean.binary += s.binary / kAblationSeeds;
    mean.dpa += s.dpa / kAblationSeeds;
    mean.raw += s.raw / kAblationSeeds;
    per_seed += fmt("\n      seed %d: base %.1f sft %.1f binary %.1f dpa %.1f raw %.1f", seed, s.base, s.sft,
                    s.binary, s.dpa, s.raw);
  }
  fs::remove_all(root);
  const double secs = seconds_since(t0);
  const bool ordered = mean.base < mean.sft && mean.sft < mean.binary && mean.binary < mean.dpa;
  const bool margin = mean.dpa - mean.binary >= kDpaMargin;
  const bool raw_fails = mean.raw <= mean.sft;
  return {ordered && margin && raw_fails && secs < kAblationBudgetSec,
          fmt("mean over %d seeds: base %.2f < sft %.2f < binary %.2f < dpa %.2f (dpa-binary %+.2f, need "
              ">= %.1f); raw %.2f vs sft %.2f; %.0f s",
              kAblationSeeds, mean.base, mean.sft, mean.binary, mean.dpa, mean.dpa - mean.binary, kDpaMargin,
              mean.raw, mean.sft, secs) +
              per_seed};
}

// --- 8 -------------------------------------------------------------------------------------

double compliance(const TokenPolicy& pol, const PolicyParams& p, const std::vector<SyntheticSample>& prompts,
                  std::uint64_t seed) {
  Rng rng = substream(seed, {});
  int ok = 0;
  for (int i = 0; i < kComplianceDraws; ++i)
    ok += format_reward(pol.sample(p, prompts[static_cast<std::size_t>(i) % prompts.size()].obs, rng).text) == 1.0;
  return ok / double(kComplianceDraws);
}

Outcome criterion_8() {
  const auto cfg = load_run_config(std::nullopt);
  if (cfg.phases.size() != 2 || cfg.phases[0].targets != TargetSource::WeakOracle ||
      cfg.phases[1].targets != TargetSource::AnswerDriven)
    return {false, "default schedule is not weak-oracle then answer-driven"};
  const int e1 = cfg.phases[0].epochs, e2 = cfg.phases[1].epochs;
  double before_worst = 0.0, after_worst = 1.0, two_phase = 0.0, weak_only = 0.0;
  std::string per_seed;
  for (int seed = 0; seed < kAblationSeeds; ++seed) {
    const auto useed = static_cast<std::uint64_t>(seed);
    const auto train = generate_split(cfg.env, Split::Train, cfg.sizes.train, useed);
    const auto test = generate_split(cfg.env, Split::Test, cfg.sizes.test, useed);
    TokenPolicy pol(cfg.env.feature_dim(), cfg.max_len);
    const auto p0 = pol.init_params(useed);
    const auto weak = build_sft_examples(pol, train, TargetSource::WeakOracle, cfg.weak_accuracy, useed);
    const auto answer = build_sft_examples(pol, train, TargetSource::AnswerDriven, cfg.weak_accuracy, useed + 1);
    SftConfig sc = cfg.sft;
    sc.seed = useed;
    sc.epochs = e1;
    const auto p1 = sft_train(pol, p0, std::span<const SftExample>(weak), sc);
    SftConfig sc2 = sc;
    sc2.epochs = e2;
    const auto p2 = sft_train(pol, p1, std::span<const SftExample>(answer), sc2, {}, e1, 2);
    SftConfig sw = sc;
    sw.epochs = e2;
    const auto pw = sft_train(pol, p1, std::span<const SftExample>(weak), sw, {}, e1, 2);
    const double c0 = compliance(pol, p0, train, 1000 + useed);
    const double c1 = compliance(pol, p1, train, 2000 + useed);
    const double s2 = overall_score(evaluate(pol, p2, test));
    const double sw_score = overall_score(evaluate(pol, pw, test));
    before_worst = std::max(before_worst, c0);
    after_worst = std::min(after_worst, c1);
    two_phase += s2 / kAblationSeeds;
    weak_only += sw_score / kAblationSeeds;
    per_seed += fmt("\n      seed %d: compliance %.3f -> %.3f, eval weak-only %.1f vs weak+answer %.1f", seed, c0,
                    c1, sw_score, s2);
  }
  const bool pass = before_worst < kComplianceBefore && after_worst >= kComplianceAfter && two_phase > weak_only;
  return {pass, fmt("compliance before SFT max %.3f (< %.2f), after phase 1 min %.3f (>= %.2f); mean eval "
                    "weak-only %.2f vs weak+answer %.2f",
                    before_worst, kComplianceBefore, after_worst, kComplianceAfter, weak_only, two_phase) +
                    per_seed};
}

// --- 9 -------------------------------------------------------------------------------------

void full_pipeline(const fs::path& root) {
  const auto cfg = load_run_config(std::nullopt, {"seed=17", "io.checkpoint_every=100"});
  cmd_gen_data(cfg, root / "data");
  cmd_sft(cfg, root / "data", root / "sft");
  cmd_train(cfg, root / "data", root / "rl", root / "sft" / "checkpoint.txt", false);
  cmd_eval(cfg, root / "rl" / "checkpoint.txt", root / "data" / "test.jsonl", root / "eval");
}

Outcome criterion_9() {
  const auto a = scratch_root("determinism_a");
  const auto b = scratch_root("determinism_b");
  full_pipeline(a);
  full_pipeline(b);
  int files = 0, identical = 0;
  std::string differing;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    ++files;
    const auto other = b / rel;
    if (fs::exists(other) && read_file(entry.path()) == read_file(other))
      ++identical;
    else
      differing += " " + rel.string();
  }
  bool covered = true;
  for (const char* f : {"data/train.jsonl", "data/test.jsonl", "data/explore.jsonl", "sft/checkpoint.txt",
                        "sft/metrics.jsonl", "rl/checkpoint.txt", "rl/checkpoint_step100.txt", "rl/metrics.jsonl",
                        "eval/judgments.jsonl"})
    covered = covered && fs::exists(a / f);
  fs::remove_all(a);
  fs::remove_all(b);
  return {covered && files > 0 && identical == files,
          fmt("%d/%d artifacts byte-identical across two runs (datasets, checkpoints, metrics, reports)%s",
              identical, files, differing.empty() ? "" : (";" + differing).c_str())};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "DPA reward oracle", criterion_1},
      {2, "reward/metric divergence", criterion_2},
      {3, "gradient fidelity", criterion_3},
      {4, "advantage statistics", criterion_4},
      {5, "KL estimator", criterion_5},
      {6, "clip semantics", criterion_6},
      {7, "ablation ordering", criterion_7},
      {8, "cold-start effect", criterion_8},
      {9, "determinism", criterion_9},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d [%s] %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
