// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails. Criteria 6, 7 and 9 drive the dmq binary end to end with
// the default configuration.

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dmq/calibration.hpp"
#include "dmq/diffusion.hpp"
#include "dmq/error.hpp"
#include "dmq/metrics.hpp"
#include "dmq/prompts.hpp"
#include "dmq/quantizer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace dmq;

namespace {

// Runtime limits in seconds.
constexpr double kLimitRoundTrip = 10;
constexpr double kLimitSampler = 30;
constexpr double kLimitAugment = 5;
constexpr double kLimitMetrics = 10;
constexpr double kLimitNumerics = 60;
constexpr double kLimitSweep = 5 * 60;
constexpr double kLimitCompare = 10 * 60;
constexpr double kLimitSize = 1;

// Tolerances.
constexpr double kSamplerTv = 0.01;
constexpr double kFdSelf = 1e-9;
constexpr double kClosedForm = 1e-9;
constexpr double kKlFloor = -1e-10;
constexpr double kFdOracle = 1e-6;
constexpr double kGradRel = 1e-4;
constexpr double kDiffuseRel = 0.02;

struct Outcome {
  bool pass = true;
  std::string detail;
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome round_trip() {
  Outcome o;
  RngStream rng(1001, 0);
  std::size_t violations = 0, mismatches = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int bits = std::array<int, 3>{4, 8, 16}[trial % 3];
    Tensor2D w(4, 4);
    const double spread = 0.001 + 10 * rng.uniform();
    for (double& v : w.values()) v = spread * rng.normal();
    const QuantMode mode = trial % 2 ? QuantMode::kSymmetric : QuantMode::kAsymmetric;
    const QuantParams p = fit_params(w.values(), bits, mode);
    const QuantizedTensor q = quantize(w, p);
    const Tensor2D back = dequantize(q);
    const double lo = p.scale * (p.c_min - p.zero_point), hi = p.scale * (p.c_max - p.zero_point);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double x = w.values()[i];
      if (x < lo || x > hi) continue;
      if (std::abs(back.values()[i] - x) > p.scale / 2 * (1 + 1e-12)) ++violations;
      if (bits == 4 && q.codes[i] != oracle::nearest_code(x, p)) ++mismatches;
    }
  }
  o.check(violations == 0, std::to_string(violations) + " values off by more than s/2");
  o.check(mismatches == 0, std::to_string(mismatches) + " 4-bit codes differ from the oracle");
  return o;
}

Outcome sampler() {
  Outcome o;
  std::vector<CellStats> cells;
  const double vars[10] = {1.0, 2.0, 3.5, 0.5, 4.0, 1.5, 2.5, 0.8, 3.0, 1.2};
  for (int i = 0; i < 10; ++i) {
    CellStats c;
    c.layer = i < 5 ? "fc0" : "fc1";
    c.t = 1 + i % 5;
    c.count = 100;
    c.variance = vars[i];
    cells.push_back(c);
  }
  auto profile = LayerVarianceProfile::from_cells(cells, 0.1);
  RngStream rng(1002, 0);
  const auto draws = draw_variance_aware(profile, 100000, rng);
  std::map<std::pair<std::string, int>, double> freq;
  for (const auto& d : draws.cells) freq[{d.layer, d.t}] += 1e-5;
  double tv = 0.0;
  for (const auto& c : profile.cells()) tv += std::abs(freq[{c.layer, c.t}] - c.probability);
  tv /= 2;
  o.check(draws.cells.size() == 100000, "wrong draw count");
  o.check(tv < kSamplerTv, "TV " + num(tv));
  o.detail = o.pass ? "TV " + num(tv) : o.detail;

  profile.set_tau_var(profile.max_variance() * 1e9);
  try {
    const auto fb = draw_variance_aware(profile, 1000, rng);
    o.check(fb.halvings <= kMaxTauHalvings && fb.cells.size() == 1000,
            "fallback used " + std::to_string(fb.halvings) + " halvings");
    if (o.pass) o.detail += ", fallback after " + std::to_string(fb.halvings) + " halvings";
  } catch (const Error& e) {
    o.check(false, std::string("fallback threw: ") + e.what());
  }
  return o;
}

class CountingGenerator final : public CaptionGenerator {
 public:
  explicit CountingGenerator(CaptionGenerator& inner) : inner_(inner) {}
  std::string generate(const CaptionRequest& r, const AspectSet& a) override {
    ++calls;
    return inner_.generate(r, a);
  }
  std::size_t calls = 0;

 private:
  CaptionGenerator& inner_;
};

Outcome augmentation() {
  Outcome o;
  const AspectSet aspects = AspectSet::defaults();
  const PromptSet seeds = default_seed_prompts(aspects);
  MockCaptionGenerator mock(1);
  CountingGenerator gen(mock);
  RngStream rng(1003, 0);
  AugmentOptions opts;  // I_max 10, tau_redundancy 0
  const AugmentResult r = augment(seeds, aspects, gen, opts, rng);
  o.check(global_coverage(r.final_set, aspects.size()).all(), "coverage incomplete");
  o.check(gen.calls <= aspects.size(), std::to_string(gen.calls) + " generator calls");
  o.check(r.report.final_redundancy <= opts.tau_redundancy,
          "final redundancy " + std::to_string(r.report.final_redundancy));

  NeverCoveringGenerator never;
  RngStream rng2(1003, 1);
  PromptSet partial = seeds;
  partial.prompts.resize(1);
  const auto before = global_coverage(partial, aspects.size());
  const AugmentResult n = augment(partial, aspects, never, opts, rng2);
  o.check(n.report.coverage_iterations == opts.max_iterations,
          "never-covering run used " + std::to_string(n.report.coverage_iterations) +
              " iterations");
  std::vector<std::string> expected;
  for (std::size_t b = 0; b < aspects.size(); ++b)
    if (!before.test(b)) expected.push_back(aspects[b].id);
  o.check(n.report.uncovered == expected, "uncovered report incomplete");
  if (o.pass)
    o.detail = std::to_string(gen.calls) + " calls to full coverage, " +
               std::to_string(expected.size()) + " aspects reported uncovered";
  return o;
}

Tensor2D spd(std::size_t d, RngStream& rng, double ridge) {
  Tensor2D a(d, d);
  for (double& v : a.values()) v = rng.normal();
  Tensor2D s = matmul_nt(a, a);
  for (std::size_t i = 0; i < d; ++i) s(i, i) += ridge;
  return s;
}

std::vector<double> vec(std::size_t d, RngStream& rng) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

Outcome metrics() {
  Outcome o;
  RngStream rng(1004, 0);
  double worst_self = 0, worst_1d = 0, min_kl = 1e300, worst_oracle = 0;
  for (int i = 0; i < 100; ++i) {
    const GaussianFit a = make_gaussian_fit(vec(3, rng), spd(3, rng, 0.1));
    worst_self = std::max(worst_self, std::abs(frechet_distance(a, a)));
    const double m1 = rng.normal(), m2 = rng.normal();
    const double s1 = 0.1 + 2 * rng.uniform(), s2 = 0.1 + 2 * rng.uniform();
    const GaussianFit g1 = make_gaussian_fit({m1}, Tensor2D(1, 1, s1 * s1));
    const GaussianFit g2 = make_gaussian_fit({m2}, Tensor2D(1, 1, s2 * s2));
    const double fd_ref = (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
    const double kl_ref = std::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2 * s2 * s2) - 0.5;
    worst_1d = std::max({worst_1d, std::abs(frechet_distance(g1, g2) - fd_ref),
                         std::abs(kl_gaussian(g1, g2) - kl_ref)});
  }
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = 1 + rng.uniform_index(4);
    const GaussianFit a = make_gaussian_fit(vec(d, rng), spd(d, rng, 0.01));
    const GaussianFit b = make_gaussian_fit(vec(d, rng), spd(d, rng, 0.01));
    min_kl = std::min(min_kl, kl_gaussian(a, b));
  }
  for (int i = 0; i < 20; ++i) {
    const auto ma = vec(3, rng), mb = vec(3, rng);
    const Tensor2D sa = spd(3, rng, 0.5), sb = spd(3, rng, 0.5);
    const double fd = frechet_distance(make_gaussian_fit(ma, sa), make_gaussian_fit(mb, sb));
    worst_oracle = std::max(worst_oracle, std::abs(fd - oracle::frechet(ma, sa, mb, sb)));
  }
  o.check(worst_self <= kFdSelf, "FD(a,a) " + num(worst_self));
  o.check(worst_1d <= kClosedForm, "1-D closed form off by " + num(worst_1d));
  o.check(min_kl >= kKlFloor, "min KL " + num(min_kl));
  o.check(worst_oracle <= kFdOracle, "3-D oracle gap " + num(worst_oracle));
  if (o.pass) o.detail = "3-D oracle gap " + num(worst_oracle);
  return o;
}

double mse_loss(const DenoiserModel& m, const Tensor2D& in, const Tensor2D& target) {
  const Tensor2D y = m.forward(in, 1, nullptr);
  double acc = 0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::pow(y.values()[i] - target.values()[i], 2);
  return acc / static_cast<double>(y.size());
}

Outcome numerics() {
  Outcome o;
  RngStream rng(1005, 0);
  ModelShape shape;
  shape.time_embed_dim = 4;
  shape.cond_embed_dim = 4;
  shape.hidden = {6};
  DenoiserModel m = DenoiserModel::create(shape, rng, true);
  for (AffineLayer& l : m.mutable_layers())
    for (double& b : l.bias) b = 0.2 * rng.normal();
  const Tensor2D in = gaussian_sample(rng, 5, m.input_dim());
  const Tensor2D target = gaussian_sample(rng, 5, 2);
  const LossAndGradients lg = loss_and_gradients(m, in, target);
  const double h = 1e-5;
  double worst = 0;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7});
  };
  for (std::size_t li = 0; li < m.num_layers(); ++li) {
    for (std::size_t k = 0; k < m.layers()[li].weight.size(); ++k) {
      DenoiserModel p = m, q = m;
      p.mutable_layers()[li].weight.values()[k] += h;
      q.mutable_layers()[li].weight.values()[k] -= h;
      const double fd = (mse_loss(p, in, target) - mse_loss(q, in, target)) / (2 * h);
      worst = std::max(worst, rel(lg.grads.weight[li].values()[k], fd));
    }
    for (std::size_t k = 0; k < m.layers()[li].bias.size(); ++k) {
      DenoiserModel p = m, q = m;
      p.mutable_layers()[li].bias[k] += h;
      q.mutable_layers()[li].bias[k] -= h;
      const double fd = (mse_loss(p, in, target) - mse_loss(q, in, target)) / (2 * h);
      worst = std::max(worst, rel(lg.grads.bias[li][k], fd));
    }
  }
  o.check(worst < kGradRel, "gradient relative error " + num(worst));

  const NoiseSchedule sched = NoiseSchedule::linear_beta(50);
  double worst_var = 0;
  for (int t : {1, 25, 50}) {
    RngStream r(1005, 100 + t);
    const LatentState z = forward_diffuse(Tensor2D(100000, 1), t, sched, r);
    double acc = 0;
    for (double v : z.value.values()) acc += v * v;
    const double expected = 1 - sched.alpha_bar_at(t);
    worst_var = std::max(worst_var, std::abs(acc / 100000 - expected) / expected);
  }
  o.check(worst_var <= kDiffuseRel, "forward variance off by " + num(100 * worst_var) + "%");
  if (o.pass)
    o.detail = "gradient rel err " + num(worst) + ", variance rel err " + num(worst_var);
  return o;
}

Outcome size_accounting() {
  Outcome o;
  RngStream rng(1008, 0);
  const DenoiserModel full = DenoiserModel::create(ModelShape{}, rng);
  const double p8 = model_size_bytes(full, PrecisionPolicy::uniform(full, "8W8A"), false).reduction_pct;
  const double p16 =
      model_size_bytes(full, PrecisionPolicy::uniform(full, "16W16A"), false).reduction_pct;
  // Ends preserved at FP16 hold exactly half the parameters of this shape.
  ModelShape half;
  half.time_embed_dim = 2;
  half.cond_embed_dim = 4;
  half.hidden = {4, 4, 6};
  const DenoiserModel mixed = DenoiserModel::create(half, rng);
  const double p_mixed =
      model_size_bytes(mixed, PrecisionPolicy::sensitive_preserved(mixed, "4W8A"), false)
          .reduction_pct;
  o.check(p8 == 75.0, "8-bit " + num(p8));
  o.check(p16 == 50.0, "FP16 " + num(p16));
  o.check(p_mixed == 68.75, "mixed " + num(p_mixed));
  if (o.pass) o.detail = "75 / 50 / 68.75";
  return o;
}

// ---------------------------------------------------------------------------
// CLI-driven criteria

struct CliRun {
  int exit_code = -1;
  std::string out;
  double seconds = 0;
};

CliRun cli(const std::string& args) {
  const auto t0 = Clock::now();
  CliRun r;
  FILE* p = popen((std::string(DMQ_CLI_PATH) + " " + args + " 2>&1").c_str(), "r");
  if (p) {
    std::array<char, 4096> buf;
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  r.seconds = seconds_since(t0);
  return r;
}

std::vector<std::string> artifact_lines(const std::string& out) {
  std::vector<std::string> lines;
  std::istringstream in(out);
  for (std::string line; std::getline(in, line);)
    if (line.rfind("artifact ", 0) == 0) lines.push_back(line);
  return lines;
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, '\t');) cols.push_back(c);
    rows.push_back(cols);
  }
  return rows;
}

const std::vector<std::string> kPipeline = {"train",    "prompts", "profile", "calibset",
                                            "quantize", "sweep",   "compare", "scale",
                                            "report"};

struct PipelineRun {
  bool ok = true;
  std::string failure;
  double total_seconds = 0;
  std::map<std::string, CliRun> runs;
};

PipelineRun run_pipeline(const fs::path& dir) {
  PipelineRun p;
  for (const std::string& cmd : kPipeline) {
    CliRun r = cli(cmd + " --out " + dir.string());
    p.total_seconds += r.seconds;
    if (r.exit_code != 0) {
      p.ok = false;
      p.failure = cmd + " exited " + std::to_string(r.exit_code) + ": " + r.out;
      return p;
    }
    p.runs[cmd] = std::move(r);
  }
  return p;
}

Outcome bitwidth_trend(const fs::path& dir, const PipelineRun& p, double* seconds) {
  Outcome o;
  *seconds = p.runs.at("train").seconds + p.runs.at("sweep").seconds;
  std::map<std::string, std::map<int, double>> fd;  // seed -> bits -> fd
  for (const auto& row : read_tsv(dir / "sweep.tsv"))
    if (row.size() >= 4) fd[row[0]][std::stoi(row[2])] = std::stod(row[3]);
  int monotone = 0;
  std::string trace;
  for (const auto& [seed, by_bits] : fd) {
    const double f16 = by_bits.at(16), f8 = by_bits.at(8), f4 = by_bits.at(4);
    if (f16 <= f8 && f8 <= f4) ++monotone;
    trace += " s" + seed + ":" + num(f16) + "/" + num(f8) + "/" + num(f4);
  }
  o.check(fd.size() == 5, std::to_string(fd.size()) + " seeds in sweep.tsv");
  o.check(monotone >= 4, std::to_string(monotone) + " of 5 seeds monotone;" + trace);
  if (o.pass) o.detail = std::to_string(monotone) + "/5 seeds monotone (FD 16/8/4 bits)" + trace;
  return o;
}

Outcome strategy_trend(const fs::path& dir, const PipelineRun& p, double* seconds) {
  Outcome o;
  *seconds = p.runs.at("train").seconds + p.runs.at("prompts").seconds +
             p.runs.at("compare").seconds;
  std::map<std::string, std::pair<double, int>> acc;
  std::set<std::string> seeds, policies, ks;
  for (const auto& row : read_tsv(dir / "compare.tsv")) {
    if (row.size() < 6) continue;
    seeds.insert(row[0]);
    policies.insert(row[2]);
    ks.insert(row[4]);
    acc[row[1]].first += std::stod(row[5]);
    acc[row[1]].second += 1;
  }
  auto mean = [&](const char* s) { return acc[s].second ? acc[s].first / acc[s].second : NAN; };
  const double va = mean("variance_aware"), ru = mean("random_uniform"),
               nt = mean("normal_timestep");
  o.check(seeds.size() >= 10, std::to_string(seeds.size()) + " seeds");
  o.check(policies.size() == 1 && *policies.begin() == "8W8A", "policy is not 8W8A");
  o.check(ks.size() == 1, "unequal K across strategies");
  o.check(va <= ru, "variance_aware " + num(va) + " > random_uniform " + num(ru));
  o.check(va <= nt, "variance_aware " + num(va) + " > normal_timestep " + num(nt));
  if (o.pass)
    o.detail = "mean FD variance_aware " + num(va) + ", random_uniform " + num(ru) +
               ", normal_timestep " + num(nt) + " over " + std::to_string(seeds.size()) +
               " seeds";
  return o;
}

Outcome determinism(const fs::path& dir, const PipelineRun& first, double* seconds) {
  Outcome o;
  const auto t0 = Clock::now();
  std::size_t compared = 0;
  for (const std::string& cmd : kPipeline) {
    const CliRun again = cli(cmd + " --out " + dir.string());
    if (again.exit_code != 0) {
      o.check(false, cmd + " rerun exited " + std::to_string(again.exit_code));
      continue;
    }
    const auto a = artifact_lines(first.runs.at(cmd).out), b = artifact_lines(again.out);
    o.check(!a.empty(), cmd + " printed no artifact hashes");
    o.check(a == b, cmd + " artifact hashes changed");
    compared += a.size();
  }
  *seconds = seconds_since(t0);
  if (o.pass) o.detail = std::to_string(compared) + " artifact hashes identical on rerun";
  return o;
}

void report(int id, const char* name, const Outcome& o, double seconds, double limit, int* failures) {
  const bool in_time = seconds < limit;
  const bool pass = o.pass && in_time;
  if (!pass) ++*failures;
  std::string detail = o.detail;
  if (!in_time) detail += (detail.empty() ? "" : "; ") + std::string("over time limit");
  std::printf("%s criterion %d %s (%.2fs, limit %.0fs) %s\n", pass ? "PASS" : "FAIL", id, name,
              seconds, limit, detail.c_str());
  std::fflush(stdout);
}

template <typename F>
void timed(int id, const char* name, double limit, int* failures, F fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o.check(false, std::string("exception: ") + e.what());
  }
  report(id, name, o, seconds_since(t0), limit, failures);
}

}  // namespace

int main() {
  int failures = 0;
  timed(1, "quantization round-trip", kLimitRoundTrip, &failures, round_trip);
  timed(2, "sampler fidelity", kLimitSampler, &failures, sampler);
  timed(3, "coverage augmentation", kLimitAugment, &failures, augmentation);
  timed(4, "metric correctness", kLimitMetrics, &failures, metrics);
  timed(5, "toy-model numerics", kLimitNumerics, &failures, numerics);

  const fs::path dir = fs::temp_directory_path() / ("dmq_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const PipelineRun pipeline = run_pipeline(dir);
  if (!pipeline.ok) {
    Outcome o;
    o.check(false, "pipeline failed: " + pipeline.failure);
    report(6, "bitwidth trend", o, pipeline.total_seconds, kLimitSweep, &failures);
    report(7, "strategy trend", o, pipeline.total_seconds, kLimitCompare, &failures);
  } else {
    double s6 = 0, s7 = 0;
    Outcome o6, o7;
    try {
      o6 = bitwidth_trend(dir, pipeline, &s6);
    } catch (const std::exception& e) {
      o6.check(false, e.what());
    }
    try {
      o7 = strategy_trend(dir, pipeline, &s7);
    } catch (const std::exception& e) {
      o7.check(false, e.what());
    }
    report(6, "bitwidth trend", o6, s6, kLimitSweep, &failures);
    report(7, "strategy trend", o7, s7, kLimitCompare, &failures);
  }

  timed(8, "size accounting", kLimitSize, &failures, size_accounting);

  if (!pipeline.ok) {
    Outcome o;
    o.check(false, "pipeline failed");
    report(9, "determinism", o, 0, 1, &failures);
  } else {
    double s9 = 0;
    Outcome o9 = determinism(dir, pipeline, &s9);
    report(9, "determinism", o9, s9, 2 * pipeline.total_seconds, &failures);
  }
  fs::remove_all(dir);

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
