// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dmq/calibration.hpp"
#include "dmq/checkpoint.hpp"
#include "dmq/error.hpp"
#include "dmq/experiments.hpp"
#include "dmq/hash.hpp"
#include "dmq/http_generator.hpp"
#include "dmq/profiler.hpp"
#include "dmq/prompts.hpp"
#include "dmq/quantizer.hpp"
#include "dmq/version.hpp"

namespace dmq {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// Evaluation captions are the same for every run and seed.
constexpr std::uint64_t kEvalPromptSeed = 0x65766c70726d70;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

class Session {
 public:
  Session(const ExperimentConfig& cfg, std::ostream& out, std::string command)
      : cfg_(cfg), out_(out), command_(std::move(command)), hash_(config_hash(cfg)),
        start_(std::chrono::steady_clock::now()) {
    for (const std::string* p : {&cfg.model_path, &cfg.aspects_path, &cfg.prompts_path,
                                 &cfg.final_prompts_path, &cfg.profile_path, &cfg.calibset_path})
      if (!p->empty() && !fs::exists(*p) && !(p == &cfg.model_path && command_ == "train"))
        throw ConfigError("path does not exist: " + *p);
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  std::ostream& out() { return out_; }

  std::string path(const std::string& name) const { return (fs::path(cfg_.out_dir) / name).string(); }

  std::string model_path() const {
    return cfg_.model_path.empty() ? path("model.json") : cfg_.model_path;
  }

  void write_artifact(const std::string& file, const std::string& contents) {
    write_file(file, contents);
    // Paths under out_dir are printed relative to it.
    const fs::path rel = fs::path(file).lexically_relative(cfg_.out_dir);
    const bool inside = !rel.empty() && *rel.begin() != "..";
    out_ << "artifact " << (inside ? rel.generic_string() : file) << " "
         << hex64(fnv1a64(contents)) << "\n";
  }

  const AspectSet& aspects() {
    if (!aspects_) aspects_ = cfg_.aspects_path.empty() ? AspectSet::defaults()
                                                        : AspectSet::load(cfg_.aspects_path);
    return *aspects_;
  }

  PromptSet seed_prompts() {
    return cfg_.prompts_path.empty() ? default_seed_prompts(aspects())
                                     : load_prompt_set(cfg_.prompts_path, aspects());
  }

  std::unique_ptr<CaptionGenerator> generator(std::uint64_t seed) {
    std::string desc;
    auto g = make_caption_generator(cfg_.generator, seed, &desc);
    if (!announced_generator_) out_ << "generator: " << desc << "\n";
    announced_generator_ = true;
    return g;
  }

  AugmentOptions augment_options() const {
    AugmentOptions o;
    o.max_iterations = cfg_.I_max;
    o.tau_redundancy = cfg_.tau_redundancy;
    o.context_size = cfg_.generator.context_size;
    return o;
  }

  AugmentResult augment_seed_set() {
    auto gen = generator(cfg_.seed);
    RngStream rng(cfg_.seed, streams::kAugment);
    return augment(seed_prompts(), aspects(), *gen, augment_options(), rng);
  }

  const PromptSet& final_prompts() {
    if (!final_) {
      final_ = cfg_.final_prompts_path.empty()
                   ? augment_seed_set().final_set
                   : load_prompt_set(cfg_.final_prompts_path, aspects());
      if (final_->empty()) throw DataError("the final prompt set is empty");
    }
    return *final_;
  }

  const Checkpoint& checkpoint() {
    if (!ckpt_) {
      const std::string p = model_path();
      if (!fs::exists(p))
        throw ConfigError("model checkpoint not found: " + p + " (run the train command first)");
      ckpt_ = load_checkpoint(p);
    }
    return *ckpt_;
  }

  std::vector<ConditionedPrompt> conditioned(const PromptSet& set) {
    return condition_prompts(set, aspects(), checkpoint().model.cond_embed_dim());
  }

  const LayerVarianceProfile& profile() {
    if (!profile_) {
      if (!cfg_.profile_path.empty()) {
        profile_ = LayerVarianceProfile::parse_tsv(read_file(cfg_.profile_path));
      } else {
        const Checkpoint& ck = checkpoint();
        profile_ = profile_model(ck.model, ck.schedule, conditioned(final_prompts()),
                                 cfg_.profile_chains, cfg_.reservoir_size, cfg_.tau_fraction,
                                 cfg_.seed);
      }
    }
    return *profile_;
  }

  std::vector<ConditionedPrompt> eval_prompts() {
    return make_eval_prompts(aspects(), cfg_.eval_prompts, checkpoint().model.cond_embed_dim(),
                             kEvalPromptSeed);
  }

  ExperimentInputs experiment_inputs() {
    const Checkpoint& ck = checkpoint();
    return {&ck.model, &ck.schedule, &aspects(), eval_prompts(), cfg_.eval_samples, cfg_.jobs};
  }

  StrategyOptions strategy_options() const {
    StrategyOptions o;
    o.policy = cfg_.policy;
    o.preserve_sensitive = cfg_.preserve_sensitive;
    o.act_range = RangeMethod::parse(cfg_.act_range);
    o.K = cfg_.K;
    o.tau_fraction = cfg_.tau_fraction;
    o.mu_frac = cfg_.mu_frac;
    o.sigma_frac = cfg_.sigma_frac;
    o.profile_chains = cfg_.profile_chains;
    o.reservoir_size = cfg_.reservoir_size;
    return o;
  }

  PrecisionPolicy policy() {
    const DenoiserModel& m = checkpoint().model;
    return cfg_.preserve_sensitive ? PrecisionPolicy::sensitive_preserved(m, cfg_.policy)
                                   : PrecisionPolicy::uniform(m, cfg_.policy);
  }

  json record(const std::string& row_key) const {
    json r;
    r["run_id"] = hex64(fnv1a64(command_ + "|" + hash_ + "|" + row_key));
    r["command"] = command_;
    r["toolkit_version"] = kVersion;
    r["config_hash"] = hash_;
    return r;
  }

  void append_records(std::vector<json> records) {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const std::string file = path(kResultsFile);
    fs::create_directories(cfg_.out_dir);
    std::ofstream f(file, std::ios::app | std::ios::binary);
    if (!f) throw DataError("cannot append to " + file);
    for (json& r : records) {
      r["wall_time_s"] = wall;
      f << r.dump() << "\n";
    }
    if (!f) throw DataError("write failed: " + file);
    out_ << "appended " << records.size() << " record(s) to " << file << "\n";
  }

 private:
  const ExperimentConfig& cfg_;
  std::ostream& out_;
  std::string command_;
  std::string hash_;
  std::chrono::steady_clock::time_point start_;
  std::optional<AspectSet> aspects_;
  std::optional<PromptSet> final_;
  std::optional<Checkpoint> ckpt_;
  std::optional<LayerVarianceProfile> profile_;
  bool announced_generator_ = false;
};

json metrics_json(const EvalMetrics& m) {
  return {{"fd", m.fd}, {"fad", nullptr}, {"kl", m.kl}, {"mse", m.mse}};
}

json size_json(const SizeReport& s) {
  return {{"full_bytes", s.full_bytes},
          {"quantized_bytes", s.quantized_bytes},
          {"reduction_pct", s.reduction_pct}};
}

// ---------------------------------------------------------------------------

void cmd_train(Session& s) {
  const ExperimentConfig& c = s.cfg();
  ToyModelSpec spec;
  spec.shape = {2, c.time_embed_dim, c.cond_embed_dim, c.hidden};
  spec.schedule = c.schedule;
  spec.T = c.T;
  spec.train = {c.learning_rate, c.epochs, c.batch_size};
  spec.captions = c.train_captions;
  spec.points_per_caption = c.train_points_per_caption;
  std::vector<std::string> extra;
  for (const Prompt& p : s.seed_prompts().prompts) extra.push_back(p.text);

  const TrainedToyModel tm = train_toy_model(spec, s.aspects(), extra, c.seed);
  s.write_artifact(s.model_path(), checkpoint_to_json(tm.model, tm.schedule).dump(1) + "\n");
  std::string trace = "epoch\tloss\n";
  for (std::size_t e = 0; e < tm.loss_trace.size(); ++e)
    trace += std::to_string(e + 1) + "\t" + fmt(tm.loss_trace[e]) + "\n";
  s.write_artifact(s.path("loss_trace.tsv"), trace);
  s.out() << "trained " << tm.model.num_layers() << " layers, " << tm.model.param_count()
          << " parameters, " << c.epochs << " epochs";
  if (!tm.loss_trace.empty())
    s.out() << ", loss " << fmt(tm.loss_trace.front()) << " -> " << fmt(tm.loss_trace.back());
  s.out() << "\n";
}

void cmd_profile(Session& s) {
  const LayerVarianceProfile& prof = s.profile();
  s.write_artifact(s.path("profile.tsv"), prof.to_tsv());

  // Contrast the first two seed prompts cell by cell.
  const PromptSet seeds = s.seed_prompts();
  if (seeds.size() >= 2) {
    const Checkpoint& ck = s.checkpoint();
    std::vector<LayerVarianceProfile> pair;
    for (std::size_t i = 0; i < 2; ++i) {
      PromptSet one;
      one.prompts.push_back(seeds.prompts[i]);
      pair.push_back(profile_model(ck.model, ck.schedule, s.conditioned(one),
                                   s.cfg().profile_chains, s.cfg().reservoir_size,
                                   s.cfg().tau_fraction, s.cfg().seed));
    }
    const auto div = activation_divergence(pair[0], pair[1]);
    std::string tsv = "# " + seeds.prompts[0].id + " vs " + seeds.prompts[1].id +
                      "\nlayer\ttimestep\tvariance_a\tvariance_b\tabs_gap\trel_gap\tsymmetric_kl\n";
    std::map<std::string, double> worst;
    for (const CellDivergence& d : div) {
      tsv += d.layer + "\t" + std::to_string(d.t) + "\t" + fmt(d.variance_a) + "\t" +
             fmt(d.variance_b) + "\t" + fmt(d.abs_gap) + "\t" + fmt(d.rel_gap) + "\t" +
             fmt(d.symmetric_kl) + "\n";
      worst[d.layer] = std::max(worst[d.layer], d.rel_gap);
    }
    s.write_artifact(s.path("divergence.tsv"), tsv);
    for (const auto& [layer, gap] : worst)
      s.out() << "  " << layer << " max relative variance gap " << fmt(gap) << "\n";
  }
  s.out() << "profile: " << prof.size() << " cells, max variance " << fmt(prof.max_variance())
          << ", tau_var " << fmt(prof.tau_var()) << "\n";
}

void cmd_prompts(Session& s) {
  const AugmentResult r = s.augment_seed_set();
  s.write_artifact(s.path("prompts.tsv"), serialize_prompt_set(r.final_set));
  s.write_artifact(s.path("augment_report.txt"), r.report.to_text());
  s.out() << r.report.to_text();
}

CalibrationSet calibration_for(Session& s) {
  const ExperimentConfig& c = s.cfg();
  if (!c.calibset_path.empty()) return load_calibration_set(c.calibset_path);
  const Checkpoint& ck = s.checkpoint();
  const SamplingStrategy strategy = parse_sampling_strategy(c.strategy);
  const LayerVarianceProfile* prof =
      strategy == SamplingStrategy::kVarianceAware ? &s.profile() : nullptr;
  CalibrationSet set =
      build_calibration_set(ck.model, ck.schedule, prof, s.conditioned(s.final_prompts()),
                            {strategy, c.K, c.mu_frac, c.sigma_frac}, c.seed);
  set.model_hash = hex64(model_hash(ck.model, ck.schedule));
  return set;
}

void cmd_calibset(Session& s) {
  const CalibrationSet set = calibration_for(s);
  s.write_artifact(s.path("calibset.json"), calibration_set_to_json(set).dump() + "\n");
  std::map<std::string, std::size_t> per_layer;
  for (const CalibrationSample& x : set.samples) ++per_layer[x.layer];
  s.out() << "calibration set: " << set.samples.size() << " samples ("
          << to_string(set.strategy) << ")";
  for (const auto& [layer, n] : per_layer) s.out() << " " << layer << "=" << n;
  s.out() << "\n";
}

void cmd_quantize(Session& s) {
  const ExperimentConfig& c = s.cfg();
  const Checkpoint& ck = s.checkpoint();
  const PrecisionPolicy policy = s.policy();
  const CalibrationSet calib =
      policy.any_activation_quantized() ? calibration_for(s) : CalibrationSet{};
  const QuantizedModel q = quantize_model(ck.model, policy, calib, RangeMethod::parse(c.act_range));
  s.write_artifact(s.path("quantized.json"), quantized_to_json(q, ck.schedule).dump(1) + "\n");

  const Evaluator eval(ck.model, ck.schedule, s.eval_prompts(), c.eval_samples, c.seed);
  const EvalMetrics m = eval.evaluate(q);
  const SizeReport size = model_size_bytes(ck.model, policy);
  std::string tsv =
      "policy\tstrategy\tK\tfd\tkl\tmse\tfull_bytes\tquantized_bytes\treduction_pct\n";
  tsv += policy.notation() + "\t" + c.strategy + "\t" + std::to_string(calib.samples.size()) +
         "\t" + fmt(m.fd) + "\t" + fmt(m.kl) + "\t" + fmt(m.mse) + "\t" +
         std::to_string(size.full_bytes) + "\t" + std::to_string(size.quantized_bytes) + "\t" +
         fmt(size.reduction_pct) + "\n";
  s.write_artifact(s.path("quantize.tsv"), tsv);
  s.out() << tsv;

  json r = s.record("quantize");
  r["seed"] = c.seed;
  r["policy"] = policy.notation();
  r["strategy"] = c.strategy;
  r["K"] = calib.samples.size();
  r["metrics"] = metrics_json(m);
  r["size"] = size_json(size);
  s.append_records({r});
}

void cmd_sweep(Session& s) {
  const ExperimentConfig& c = s.cfg();
  const auto rows = sweep_bitwidth(s.experiment_inputs(), c.sweep_bits, seed_list(c.seed, c.seeds));
  std::string tsv = "seed\tpolicy\tweight_bits\tfd\tkl\tmse\treduction_pct\n";
  std::vector<json> records;
  for (const SweepRow& row : rows) {
    tsv += std::to_string(row.seed) + "\t" + row.policy + "\t" + std::to_string(row.weight_bits) +
           "\t" + fmt(row.metrics.fd) + "\t" + fmt(row.metrics.kl) + "\t" + fmt(row.metrics.mse) +
           "\t" + fmt(row.size.reduction_pct) + "\n";
    json r = s.record(std::to_string(row.seed) + "|" + row.policy);
    r["seed"] = row.seed;
    r["policy"] = row.policy;
    r["weight_bits"] = row.weight_bits;
    r["metrics"] = metrics_json(row.metrics);
    r["size"] = size_json(row.size);
    records.push_back(std::move(r));
  }
  s.write_artifact(s.path("sweep.tsv"), tsv);
  s.out() << tsv;
  s.append_records(std::move(records));
}

void cmd_compare(Session& s) {
  const ExperimentConfig& c = s.cfg();
  const auto rows = compare_strategies(s.experiment_inputs(), s.conditioned(s.final_prompts()),
                                       s.strategy_options(), seed_list(c.seed, c.compare_seeds));
  std::string tsv = "seed\tstrategy\tpolicy\tK\tsamples\tfd\tkl\tmse\n";
  std::vector<json> records;
  std::map<std::string, double> mean_fd;
  for (const CompareRow& row : rows) {
    const std::string strategy(to_string(row.strategy));
    tsv += std::to_string(row.seed) + "\t" + strategy + "\t" + row.policy + "\t" +
           std::to_string(row.K) + "\t" + std::to_string(row.samples) + "\t" + fmt(row.metrics.fd) +
           "\t" + fmt(row.metrics.kl) + "\t" + fmt(row.metrics.mse) + "\n";
    mean_fd[strategy] += row.metrics.fd / static_cast<double>(c.compare_seeds);
    json r = s.record(std::to_string(row.seed) + "|" + strategy);
    r["seed"] = row.seed;
    r["policy"] = row.policy;
    r["strategy"] = strategy;
    r["K"] = row.samples;
    r["metrics"] = metrics_json(row.metrics);
    r["size"] = size_json(row.size);
    records.push_back(std::move(r));
  }
  s.write_artifact(s.path("compare.tsv"), tsv);
  for (const auto& [strategy, fd] : mean_fd)
    s.out() << "mean FD " << strategy << " " << fmt(fd) << "\n";
  s.append_records(std::move(records));
}

void cmd_scale(Session& s) {
  const ExperimentConfig& c = s.cfg();
  const PromptSet seeds = s.seed_prompts();
  (void)s.generator(c.seed);  // announce the backend once
  const GeneratorConfig gcfg = c.generator;
  const auto rows = prompt_scaling(
      s.experiment_inputs(), seeds, c.prompt_counts, s.augment_options(),
      [gcfg](std::uint64_t seed) { return make_caption_generator(gcfg, seed); },
      s.strategy_options(), seed_list(c.seed, c.seeds));
  std::string tsv = "seed\tprompt_count\tprompts\tcovered\tuncovered\tfd\tkl\tmse\n";
  std::vector<json> records;
  for (const ScaleRow& row : rows) {
    tsv += std::to_string(row.seed) + "\t" + std::to_string(row.requested) + "\t" +
           std::to_string(row.prompts) + "\t" + std::to_string(row.covered) + "\t" +
           (row.uncovered.empty() ? "-" : join(row.uncovered, ",")) + "\t" + fmt(row.metrics.fd) +
           "\t" + fmt(row.metrics.kl) + "\t" + fmt(row.metrics.mse) + "\n";
    json r = s.record(std::to_string(row.seed) + "|" + std::to_string(row.requested));
    r["seed"] = row.seed;
    r["policy"] = s.policy().notation();
    r["strategy"] = "variance_aware";
    r["prompt_count"] = row.requested;
    r["prompts"] = row.prompts;
    r["uncovered"] = row.uncovered;
    r["metrics"] = metrics_json(row.metrics);
    records.push_back(std::move(r));
  }
  s.write_artifact(s.path("scale.tsv"), tsv);
  s.out() << tsv;
  s.append_records(std::move(records));
}

void cmd_report(Session& s) {
  const ReportFiles files = build_report(read_results(s.cfg().out_dir));
  s.write_artifact(s.path("report/table.tsv"), files.table);
  s.write_artifact(s.path("report/summary.txt"), files.summary);
  s.write_artifact(s.path("report/fig_bitwidth.tsv"), files.bitwidth);
  s.write_artifact(s.path("report/fig_strategies.tsv"), files.strategies);
  s.write_artifact(s.path("report/fig_scaling.tsv"), files.scaling);
  s.out() << files.summary;
}

// ---------------------------------------------------------------------------
// Report

struct Stats {
  std::vector<double> xs;
  void add(double x) { xs.push_back(x); }
  double mean() const {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
  }
  double stddev() const {
    if (xs.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
  }
};

struct Group {
  Stats fd, kl, mse, reduction;
};

double metric(const json& r, const char* key) {
  const json& m = r.at("metrics").at(key);
  return m.is_number() ? m.get<double>() : 0.0;
}

void add_metrics(Group& g, const json& r) {
  g.fd.add(metric(r, "fd"));
  g.kl.add(metric(r, "kl"));
  g.mse.add(metric(r, "mse"));
  if (r.contains("size")) g.reduction.add(r.at("size").at("reduction_pct").get<double>());
}

// Sort key putting higher precision first: "32W32A" < "16W16A" < "8W8A".
std::pair<int, int> policy_rank(const std::string& notation) {
  try {
    const LayerPrecision p = parse_precision_notation(notation);
    return {-(p.weight_bits.value_or(32)), -(p.act_bits.value_or(32))};
  } catch (const Error&) {
    return {0, 0};
  }
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"train",    "profile",  "prompts",
                                                 "calibset", "quantize", "sweep",
                                                 "compare",  "scale",    "report"};
  return names;
}

void run_command(std::string_view name, const ExperimentConfig& cfg, std::ostream& out) {
  validate_config(cfg);
  Session s(cfg, out, std::string(name));
  if (name == "train") return cmd_train(s);
  if (name == "profile") return cmd_profile(s);
  if (name == "prompts") return cmd_prompts(s);
  if (name == "calibset") return cmd_calibset(s);
  if (name == "quantize") return cmd_quantize(s);
  if (name == "sweep") return cmd_sweep(s);
  if (name == "compare") return cmd_compare(s);
  if (name == "scale") return cmd_scale(s);
  if (name == "report") return cmd_report(s);
  throw ArgumentError("unknown command '" + std::string(name) + "'");
}

std::vector<json> read_results(const std::string& dir) {
  const std::string file = (fs::path(dir) / kResultsFile).string();
  if (!fs::exists(file)) throw DataError("no results file in " + dir);
  std::ifstream in(file, std::ios::binary);
  std::vector<json> records;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    json r = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (r.is_discarded() || !r.is_object() || !r.contains("run_id") || !r.contains("command"))
      throw DataError(file + ":" + std::to_string(n) + ": malformed results record");
    records.push_back(std::move(r));
  }
  if (records.empty()) throw DataError("results file " + file + " holds no records");
  return records;
}

ReportFiles build_report(const std::vector<json>& records) {
  if (records.empty()) throw DataError("no results records to report");
  // Latest record per run_id, in first-seen order.
  std::vector<std::string> order;
  std::map<std::string, json> latest;
  for (const json& r : records) {
    const std::string id = r.at("run_id").get<std::string>();
    if (!latest.contains(id)) order.push_back(id);
    latest[id] = r;
  }

  std::map<std::string, Group> by_policy;
  std::map<int, Group> by_bits;
  std::map<std::string, Group> by_strategy;
  std::map<std::size_t, Group> by_count;
  std::map<std::size_t, Stats> covered_by_count;
  try {
    for (const std::string& id : order) {
      const json& r = latest.at(id);
      if (!r.contains("metrics")) continue;
      const std::string cmd = r.at("command").get<std::string>();
      if (r.contains("policy") && r.contains("size"))
        add_metrics(by_policy[r.at("policy").get<std::string>()], r);
      if (cmd == "sweep") add_metrics(by_bits[r.at("weight_bits").get<int>()], r);
      if (cmd == "compare") add_metrics(by_strategy[r.at("strategy").get<std::string>()], r);
      if (cmd == "scale") {
        const auto n = r.at("prompt_count").get<std::size_t>();
        add_metrics(by_count[n], r);
        covered_by_count[n].add(static_cast<double>(r.at("uncovered").size()));
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed results record: ") + e.what());
  }

  ReportFiles f;
  std::vector<std::string> policies;
  for (const auto& [p, g] : by_policy) policies.push_back(p);
  std::stable_sort(policies.begin(), policies.end(), [](const auto& a, const auto& b) {
    return policy_rank(a) < policy_rank(b);
  });
  f.table = "policy\tsize_reduction_pct\tfd\tfad\tkl\tmse\trecords\n";
  f.summary = "dmq report (" + std::to_string(latest.size()) + " records)\n\n";
  f.summary += "policy    size red.%    FD          FAD    KL          records\n";
  for (const std::string& p : policies) {
    const Group& g = by_policy.at(p);
    f.table += p + "\t" + fmt(g.reduction.mean()) + "\t" + fmt(g.fd.mean()) + "\tn/a\t" +
               fmt(g.kl.mean()) + "\t" + fmt(g.mse.mean()) + "\t" +
               std::to_string(g.fd.xs.size()) + "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-9s %-13s %-11s %-6s %-11s %zu\n", p.c_str(),
                  fmt(g.reduction.mean()).c_str(), fmt(g.fd.mean()).c_str(), "n/a",
                  fmt(g.kl.mean()).c_str(), g.fd.xs.size());
    f.summary += line;
  }

  f.bitwidth = "weight_bits\tfd_mean\tfd_std\tkl_mean\tmse_mean\tseeds\n";
  for (auto it = by_bits.rbegin(); it != by_bits.rend(); ++it)
    f.bitwidth += std::to_string(it->first) + "\t" + fmt(it->second.fd.mean()) + "\t" +
                  fmt(it->second.fd.stddev()) + "\t" + fmt(it->second.kl.mean()) + "\t" +
                  fmt(it->second.mse.mean()) + "\t" + std::to_string(it->second.fd.xs.size()) + "\n";

  f.strategies = "strategy\tfd_mean\tfd_std\tkl_mean\tmse_mean\tseeds\n";
  for (const auto& [name, g] : by_strategy)
    f.strategies += name + "\t" + fmt(g.fd.mean()) + "\t" + fmt(g.fd.stddev()) + "\t" +
                    fmt(g.kl.mean()) + "\t" + fmt(g.mse.mean()) + "\t" +
                    std::to_string(g.fd.xs.size()) + "\n";

  f.scaling = "prompt_count\tfd_mean\tfd_std\tkl_mean\tmse_mean\tuncovered_mean\tseeds\n";
  for (const auto& [n, g] : by_count)
    f.scaling += std::to_string(n) + "\t" + fmt(g.fd.mean()) + "\t" + fmt(g.fd.stddev()) + "\t" +
                 fmt(g.kl.mean()) + "\t" + fmt(g.mse.mean()) + "\t" +
                 fmt(covered_by_count.at(n).mean()) + "\t" + std::to_string(g.fd.xs.size()) + "\n";

  if (!by_strategy.empty()) {
    f.summary += "\nstrategy comparison (mean FD)\n";
    for (const auto& [name, g] : by_strategy)
      f.summary += "  " + name + " " + fmt(g.fd.mean()) + "\n";
  }
  if (!by_bits.empty()) {
    f.summary += "\nweight-only bitwidth sweep (mean FD)\n";
    for (auto it = by_bits.rbegin(); it != by_bits.rend(); ++it)
      f.summary += "  " + std::to_string(it->first) + " bits " + fmt(it->second.fd.mean()) + "\n";
  }
  if (!by_count.empty()) {
    f.summary += "\nprompt-count scaling (mean FD)\n";
    for (const auto& [n, g] : by_count)
      f.summary += "  " + std::to_string(n) + " prompts " + fmt(g.fd.mean()) + "\n";
  }
  return f;
}

}  // namespace dmq
