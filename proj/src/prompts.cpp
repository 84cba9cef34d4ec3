// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dmq/embedded_data.hpp"
#include "dmq/error.hpp"
#include "dmq/hash.hpp"

namespace dmq {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool contains_run(const std::vector<std::string>& tokens,
                  const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end()) !=
         tokens.end();
}

}  // namespace

// ---------------------------------------------------------------------------
// AspectSet

AspectSet::AspectSet(std::vector<Aspect> aspects) : aspects_(std::move(aspects)) {
  std::set<std::string> ids;
  for (const Aspect& a : aspects_) {
    if (a.id.empty()) throw ArgumentError("aspect with empty id");
    if (!ids.insert(a.id).second) throw ArgumentError("duplicate aspect id: " + a.id);
    std::vector<std::vector<std::string>> phrases;
    for (const std::string& p : a.lexicon) {
      auto toks = normalize_tokens(p);
      if (!toks.empty()) phrases.push_back(std::move(toks));
    }
    if (phrases.empty()) throw ArgumentError("aspect '" + a.id + "' has an empty lexicon");
    tokens_.push_back(std::move(phrases));
  }
}

AspectSet AspectSet::parse(std::string_view text) {
  std::vector<Aspect> aspects;
  std::size_t line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3)
      throw DataError("aspect file line " + std::to_string(line_no) +
                      ": expected 3 tab-separated fields");
    Aspect a{trim(fields[0]), trim(fields[1]), {}};
    for (const std::string& p : split(fields[2], ';')) {
      std::string phrase = trim(p);
      if (!phrase.empty()) a.lexicon.push_back(std::move(phrase));
    }
    aspects.push_back(std::move(a));
  }
  try {
    return AspectSet(std::move(aspects));
  } catch (const ArgumentError& e) {
    throw DataError(std::string("invalid aspect file: ") + e.what());
  }
}

AspectSet AspectSet::load(const std::string& path) { return parse(read_text(path)); }

AspectSet AspectSet::defaults() { return parse(embedded::kDefaultAspects); }

std::string AspectSet::serialize() const {
  std::string out;
  for (const Aspect& a : aspects_) {
    out += a.id + "\t" + a.name + "\t";
    for (std::size_t i = 0; i < a.lexicon.size(); ++i) {
      if (i) out += "; ";
      out += a.lexicon[i];
    }
    out += "\n";
  }
  return out;
}

std::size_t AspectSet::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < aspects_.size(); ++i)
    if (aspects_[i].id == id) return i;
  throw ArgumentError("unknown aspect id: " + std::string(id));
}

std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// ---------------------------------------------------------------------------
// Coverage

CoverageVector CoverageVector::from_string(std::string_view s) {
  std::vector<std::uint8_t> bits;
  bits.reserve(s.size());
  for (char c : s) {
    if (c != '0' && c != '1')
      throw DataError("coverage string may contain only 0 and 1: " + std::string(s));
    bits.push_back(c == '1' ? 1 : 0);
  }
  return CoverageVector(std::move(bits));
}

std::size_t CoverageVector::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

std::string CoverageVector::to_string() const {
  std::string s;
  s.reserve(bits_.size());
  for (auto b : bits_) s.push_back(b ? '1' : '0');
  return s;
}

CoverageVector compute_coverage_vector(std::string_view text, const AspectSet& aspects) {
  if (trim(text).empty()) throw ArgumentError("coverage of empty text");
  const auto tokens = normalize_tokens(text);
  CoverageVector v(aspects.size());
  for (std::size_t b = 0; b < aspects.size(); ++b) {
    for (const auto& phrase : aspects.phrase_tokens(b)) {
      if (contains_run(tokens, phrase)) {
        v.set(b);
        break;
      }
    }
  }
  return v;
}

CoverageVector global_coverage(const PromptSet& set, std::size_t num_aspects) {
  CoverageVector g(num_aspects);
  for (const Prompt& p : set.prompts) {
    if (p.coverage.size() != num_aspects)
      throw ArgumentError("prompt '" + p.id + "' coverage length mismatch");
    for (std::size_t b = 0; b < num_aspects; ++b)
      if (p.coverage.test(b)) g.set(b);
  }
  return g;
}

std::uint64_t redundancy_score(const PromptSet& set) {
  std::map<CoverageVector, std::uint64_t> groups;
  for (const Prompt& p : set.prompts) ++groups[p.coverage];
  std::uint64_t r = 0;
  for (const auto& [v, c] : groups) r += c * (c - 1);
  return r;
}

// ---------------------------------------------------------------------------
// Prompt set files

PromptSet make_prompt_set(const std::vector<std::string>& texts, const AspectSet& aspects,
                          std::string_view id_prefix) {
  PromptSet set;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    set.prompts.push_back({std::string(id_prefix) + std::to_string(i), texts[i],
                           compute_coverage_vector(texts[i], aspects), true});
  }
  return set;
}

PromptSet parse_prompt_set(std::string_view text, const AspectSet& aspects) {
  PromptSet set;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  bool header_seen = false;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    const auto fields = split(line, '\t');
    if (!header_seen) {
      header_seen = true;
      if (trim(fields[0]) == "id") continue;
    }
    if (fields.size() < 2 || fields.size() > 3)
      throw DataError("prompt file line " + std::to_string(line_no) +
                      ": expected id<TAB>text[<TAB>coverage]");
    Prompt p;
    p.id = trim(fields[0]);
    p.text = trim(fields[1]);
    if (p.id.empty() || p.text.empty())
      throw DataError("prompt file line " + std::to_string(line_no) + ": empty id or text");
    if (!ids.insert(p.id).second) throw DataError("duplicate prompt id: " + p.id);
    p.coverage = compute_coverage_vector(p.text, aspects);
    if (fields.size() == 3 && !trim(fields[2]).empty()) {
      const auto stored = CoverageVector::from_string(trim(fields[2]));
      if (stored != p.coverage)
        throw DataError("prompt '" + p.id + "' coverage " + stored.to_string() +
                        " disagrees with the aspect set (" + p.coverage.to_string() + ")");
    }
    set.prompts.push_back(std::move(p));
  }
  return set;
}

PromptSet load_prompt_set(const std::string& path, const AspectSet& aspects) {
  return parse_prompt_set(read_text(path), aspects);
}

std::string serialize_prompt_set(const PromptSet& set) {
  std::string out = "id\ttext\tcoverage\n";
  for (const Prompt& p : set.prompts)
    out += p.id + "\t" + p.text + "\t" + p.coverage.to_string() + "\n";
  return out;
}

PromptSet default_seed_prompts(const AspectSet& aspects) {
  return parse_prompt_set(embedded::kDefaultSeedPrompts, aspects);
}

// ---------------------------------------------------------------------------
// Generators

namespace {

constexpr const char* kDescriptors[] = {"vivid", "brief", "layered", "gentle", "sudden",
                                        "lively", "sparse", "dense",  "warm",   "bright"};

std::uint64_t context_hash(const std::vector<std::string>& context) {
  std::uint64_t h = fnv1a64("ctx");
  for (const auto& c : context) h = fnv1a64(c, fnv1a64("\x1f", h));
  return h;
}

}  // namespace

std::string MockCaptionGenerator::generate(const CaptionRequest& request,
                                           const AspectSet& aspects) {
  const std::size_t n = aspects.size();
  if (request.aspect_index >= n) throw ArgumentError("caption request for unknown aspect");
  std::uint64_t h = splitmix64(seed_ ^ context_hash(request.context));
  h = splitmix64(h ^ (request.aspect_index * 0x9e3779b97f4a7c15ULL));
  h = splitmix64(h ^ request.attempt);
  const auto& lex = aspects[request.aspect_index].lexicon;
  const std::string& phrase = lex[h % lex.size()];
  if (request.purpose == CaptionPurpose::kFill || n < 2) return phrase + " sound";

  const std::size_t other = (request.aspect_index + 1 + (h >> 20) % (n - 1)) % n;
  const auto& lex2 = aspects[other].lexicon;
  const std::string& phrase2 = lex2[(h >> 40) % lex2.size()];
  const char* desc = kDescriptors[(h >> 8) % std::size(kDescriptors)];
  return std::string("a ") + desc + " " + phrase + " with " + phrase2 + " sound";
}

// ---------------------------------------------------------------------------
// Augmentation

std::string AugmentReport::to_text() const {
  std::ostringstream os;
  os << "coverage_iterations\t" << coverage_iterations << "\n"
     << "redundancy_rounds\t" << redundancy_rounds << "\n"
     << "generator_calls\t" << generator_calls << "\n"
     << "admitted\t" << admitted << "\n"
     << "rejected\t" << rejected << "\n"
     << "replaced\t" << replaced << "\n"
     << "initial_redundancy\t" << initial_redundancy << "\n"
     << "final_redundancy\t" << final_redundancy << "\n"
     << "uncovered\t";
  for (std::size_t i = 0; i < uncovered.size(); ++i) os << (i ? "," : "") << uncovered[i];
  os << "\n";
  return os.str();
}

namespace {

std::vector<std::string> sample_context(const PromptSet& set, std::size_t k, RngStream& rng) {
  std::vector<std::string> ctx;
  if (set.prompts.empty() || k == 0) return ctx;
  if (set.prompts.size() <= k) {
    for (const auto& p : set.prompts) ctx.push_back(p.text);
    return ctx;
  }
  // Partial Fisher-Yates over indices keeps the draw count fixed at k.
  std::vector<std::size_t> idx(set.prompts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i = 0; i < k; ++i) ctx.push_back(set.prompts[idx[i]].text);
  return ctx;
}

std::string next_generated_id(const PromptSet& set, std::size_t& counter) {
  while (true) {
    std::string id = "g" + std::to_string(++counter);
    bool clash = false;
    for (const auto& p : set.prompts) clash = clash || p.id == id;
    if (!clash) return id;
  }
}

bool has_vector(const PromptSet& set, const CoverageVector& v, std::size_t skip) {
  for (std::size_t i = 0; i < set.prompts.size(); ++i)
    if (i != skip && set.prompts[i].coverage == v) return true;
  return false;
}

bool has_text(const PromptSet& set, const std::string& text) {
  for (const auto& p : set.prompts)
    if (p.text == text) return true;
  return false;
}

std::string safe_generate(CaptionGenerator& gen, const CaptionRequest& req,
                          const AspectSet& aspects) {
  try {
    return gen.generate(req, aspects);
  } catch (const GeneratorError&) {
    throw;
  } catch (const std::exception& e) {
    throw GeneratorError(aspects[req.aspect_index].id,
                         "caption generator failed for aspect '" +
                             aspects[req.aspect_index].id + "': " + e.what());
  }
}

}  // namespace

AugmentResult augment(const PromptSet& seed_set, const AspectSet& aspects,
                      CaptionGenerator& generator, const AugmentOptions& options,
                      RngStream& rng) {
  if (options.max_iterations < 1) throw ArgumentError("augment: I_max must be >= 1");
  const std::size_t n_aspects = aspects.size();

  AugmentResult result;
  PromptSet& fin = result.final_set;
  AugmentReport& rep = result.report;
  fin = seed_set;
  fin.role = PromptSetRole::kFinalSet;
  for (auto& p : fin.prompts) {
    if (p.coverage.size() != n_aspects)
      throw ArgumentError("seed prompt '" + p.id + "' coverage length mismatch");
  }
  rep.initial_redundancy = redundancy_score(fin);

  std::size_t id_counter = 0;
  auto at_capacity = [&] { return options.max_size != 0 && fin.size() >= options.max_size; };

  CoverageVector covered = global_coverage(fin, n_aspects);
  while (!covered.all() && rep.coverage_iterations < options.max_iterations && !at_capacity()) {
    ++rep.coverage_iterations;
    std::vector<std::size_t> uncovered;
    for (std::size_t b = 0; b < n_aspects; ++b)
      if (!covered.test(b)) uncovered.push_back(b);
    for (std::size_t b : uncovered) {
      // An earlier caption in this round may have covered b as a side effect.
      if (covered.test(b)) continue;
      if (at_capacity()) break;
      CaptionRequest req;
      req.aspect_index = b;
      req.purpose = CaptionPurpose::kFill;
      req.attempt = rep.coverage_iterations - 1;
      req.context = sample_context(fin, options.context_size, rng);
      std::string text = safe_generate(generator, req, aspects);
      ++rep.generator_calls;
      if (trim(text).empty()) {
        ++rep.rejected;
        continue;
      }
      CoverageVector v = compute_coverage_vector(text, aspects);
      if (!v.test(b)) {
        ++rep.rejected;
        continue;
      }
      for (std::size_t k = 0; k < n_aspects; ++k)
        if (v.test(k)) covered.set(k);
      fin.prompts.push_back({next_generated_id(fin, id_counter), trim(text), std::move(v), false});
      ++rep.admitted;
    }
  }

  // Diversity phase: one replacement request per round for a generated prompt
  // whose coverage vector duplicates another prompt's.
  while (redundancy_score(fin) > options.tau_redundancy &&
         rep.redundancy_rounds < options.max_iterations) {
    ++rep.redundancy_rounds;
    std::size_t victim = fin.size();
    for (std::size_t i = 0; i < fin.size() && victim == fin.size(); ++i) {
      if (!fin.prompts[i].from_seed && has_vector(fin, fin.prompts[i].coverage, i)) victim = i;
    }
    if (victim == fin.size()) continue;  // only seed prompts collide; they are kept

    const CoverageVector& old = fin.prompts[victim].coverage;
    std::size_t target = 0;
    while (target < n_aspects && !old.test(target)) ++target;
    if (target == n_aspects) target = victim % n_aspects;

    CaptionRequest req;
    req.aspect_index = target;
    req.purpose = CaptionPurpose::kDiversify;
    req.attempt = rep.redundancy_rounds;
    req.context = sample_context(fin, options.context_size, rng);
    std::string text = safe_generate(generator, req, aspects);
    ++rep.generator_calls;
    if (trim(text).empty()) {
      ++rep.rejected;
      continue;
    }
    CoverageVector v = compute_coverage_vector(text, aspects);
    // The replacement must keep every aspect the old caption covered, so
    // global coverage can only grow.
    bool keeps = true;
    for (std::size_t k = 0; k < n_aspects; ++k) keeps = keeps && (!old.test(k) || v.test(k));
    if (!keeps || has_vector(fin, v, victim)) {
      ++rep.rejected;
      continue;
    }
    fin.prompts[victim].text = trim(text);
    fin.prompts[victim].coverage = std::move(v);
    ++rep.replaced;
  }

  covered = global_coverage(fin, n_aspects);
  for (std::size_t b = 0; b < n_aspects; ++b)
    if (!covered.test(b)) rep.uncovered.push_back(aspects[b].id);
  rep.final_redundancy = redundancy_score(fin);
  return result;
}

std::size_t extend_prompt_set(PromptSet& set, std::size_t target_size, const AspectSet& aspects,
                              CaptionGenerator& generator, RngStream& rng) {
  const std::size_t n_aspects = aspects.size();
  const std::size_t max_calls = 8 * target_size;
  std::size_t calls = 0;
  std::size_t id_counter = set.size();
  std::size_t failures = 0;  // consecutive candidates rejected for this slot
  while (set.size() < target_size && calls < max_calls) {
    CaptionRequest req;
    req.aspect_index = (set.size() + calls) % n_aspects;
    req.purpose = CaptionPurpose::kDiversify;
    req.attempt = calls;
    req.context = sample_context(set, 8, rng);
    std::string text = trim(safe_generate(generator, req, aspects));
    ++calls;
    if (text.empty() || has_text(set, text)) {
      ++failures;
      continue;
    }
    CoverageVector v = compute_coverage_vector(text, aspects);
    // After four misses a caption with a repeated coverage vector is accepted.
    if (has_vector(set, v, set.size()) && failures < 4) {
      ++failures;
      continue;
    }
    set.prompts.push_back({next_generated_id(set, id_counter), std::move(text), std::move(v), false});
    failures = 0;
  }
  return calls;
}

}  // namespace dmq
