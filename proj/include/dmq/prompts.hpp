// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// Coverage-driven prompt augmentation.
//
// Every caption is mapped to a binary coverage vector over a user-defined
// aspect set by a lexicon phrase matcher. Augmentation asks a pluggable
// caption generator for captions that target uncovered aspects until the
// set covers every aspect (or an iteration cap is hit), then re-prompts for
// diversity while ordered pairs of identical coverage vectors exceed a
// redundancy threshold.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dmq/numeric.hpp"

namespace dmq {

struct Aspect {
  std::string id;
  std::string name;
  std::vector<std::string> lexicon;
};

class AspectSet {
 public:
  AspectSet() = default;
  // Throws ArgumentError on duplicate ids or an empty lexicon.
  explicit AspectSet(std::vector<Aspect> aspects);

  // Lexicon file: one aspect per line, "id<TAB>name<TAB>phrase; phrase; ...".
  // Blank lines and lines starting with '#' are skipped.
  static AspectSet parse(std::string_view text);
  static AspectSet load(const std::string& path);
  // The 16 built-in audio aspects (7 modalities, 9 characteristics).
  static AspectSet defaults();
  std::string serialize() const;

  std::size_t size() const noexcept { return aspects_.size(); }
  const Aspect& operator[](std::size_t i) const { return aspects_[i]; }
  const std::vector<Aspect>& aspects() const noexcept { return aspects_; }
  // Throws ArgumentError for unknown ids.
  std::size_t index_of(std::string_view id) const;

  // Tokenized lexicon of aspect i.
  const std::vector<std::vector<std::string>>& phrase_tokens(std::size_t i) const {
    return tokens_[i];
  }

 private:
  std::vector<Aspect> aspects_;
  std::vector<std::vector<std::vector<std::string>>> tokens_;
};

// Lowercase, replace every non-alphanumeric byte by a space, split on spaces.
std::vector<std::string> normalize_tokens(std::string_view text);

class CoverageVector {
 public:
  CoverageVector() = default;
  explicit CoverageVector(std::size_t n) : bits_(n, 0) {}
  explicit CoverageVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {}
  // "0110..." -> bits. Throws DataError on other characters.
  static CoverageVector from_string(std::string_view s);

  std::size_t size() const noexcept { return bits_.size(); }
  bool test(std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v = true) { bits_[i] = v ? 1 : 0; }
  std::size_t count() const noexcept;
  bool all() const noexcept { return count() == bits_.size(); }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
  std::string to_string() const;

  friend bool operator==(const CoverageVector&, const CoverageVector&) = default;
  friend auto operator<=>(const CoverageVector&, const CoverageVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

// Bit b is set iff the normalized text contains some lexicon phrase of aspect
// b as a contiguous token run. Throws ArgumentError on blank text.
CoverageVector compute_coverage_vector(std::string_view text, const AspectSet& aspects);

struct Prompt {
  std::string id;
  std::string text;
  CoverageVector coverage;
  bool from_seed = true;
};

enum class PromptSetRole { kRandomSeedSet, kFinalSet };

struct PromptSet {
  std::vector<Prompt> prompts;
  PromptSetRole role = PromptSetRole::kRandomSeedSet;

  std::size_t size() const noexcept { return prompts.size(); }
  bool empty() const noexcept { return prompts.empty(); }
};

PromptSet make_prompt_set(const std::vector<std::string>& texts, const AspectSet& aspects,
                          std::string_view id_prefix = "p");

// Prompt set file: header "id<TAB>text<TAB>coverage", one prompt per line.
// The coverage column may be empty on import; when present it must agree with
// the matcher under `aspects`.
PromptSet parse_prompt_set(std::string_view text, const AspectSet& aspects);
PromptSet load_prompt_set(const std::string& path, const AspectSet& aspects);
std::string serialize_prompt_set(const PromptSet& set);
// The built-in seed captions.
PromptSet default_seed_prompts(const AspectSet& aspects);

// Elementwise max over members; all zeros for an empty set.
CoverageVector global_coverage(const PromptSet& set, std::size_t num_aspects);

// Number of ordered pairs (i, j), i != j, with identical coverage vectors.
// Two identical prompts contribute 2.
std::uint64_t redundancy_score(const PromptSet& set);

// ---------------------------------------------------------------------------
// Caption generation

enum class CaptionPurpose { kFill, kDiversify };

struct CaptionRequest {
  std::size_t aspect_index = 0;
  CaptionPurpose purpose = CaptionPurpose::kFill;
  // Retry counter; lets deterministic generators vary their answer.
  std::size_t attempt = 0;
  std::vector<std::string> context;
};

class CaptionGenerator {
 public:
  virtual ~CaptionGenerator() = default;
  // Throws GeneratorError on transport failure.
  virtual std::string generate(const CaptionRequest& request, const AspectSet& aspects) = 0;
};

// Deterministic given (aspect, context hash, attempt, seed). Fill requests
// produce "<lexicon phrase> sound"; diversify requests pair the target phrase
// with a phrase from a second aspect and a descriptor word.
class MockCaptionGenerator final : public CaptionGenerator {
 public:
  explicit MockCaptionGenerator(std::uint64_t seed = 0) : seed_(seed) {}
  std::string generate(const CaptionRequest& request, const AspectSet& aspects) override;

 private:
  std::uint64_t seed_;
};

// Always returns the same caption, which matches no built-in lexicon phrase.
class NeverCoveringGenerator final : public CaptionGenerator {
 public:
  std::string generate(const CaptionRequest&, const AspectSet&) override {
    return "an unremarkable recording of nothing much";
  }
};

struct AugmentOptions {
  std::size_t max_iterations = 10;    // I_max
  std::uint64_t tau_redundancy = 0;
  // Stop admitting captions once the set holds this many prompts (0 = no cap).
  std::size_t max_size = 0;
  std::size_t context_size = 8;
};

struct AugmentReport {
  std::size_t coverage_iterations = 0;
  std::size_t redundancy_rounds = 0;
  std::size_t generator_calls = 0;
  std::size_t admitted = 0;
  std::size_t rejected = 0;
  std::size_t replaced = 0;
  std::vector<std::string> uncovered;  // aspect ids, in aspect order
  std::uint64_t initial_redundancy = 0;
  std::uint64_t final_redundancy = 0;

  std::string to_text() const;
};

struct AugmentResult {
  PromptSet final_set;
  AugmentReport report;
};

// Seed prompts are never removed or rewritten. Generated prompts that share a
// coverage vector with another prompt may be replaced during the redundancy
// phase, one replacement request per round.
AugmentResult augment(const PromptSet& seed_set, const AspectSet& aspects,
                      CaptionGenerator& generator, const AugmentOptions& options,
                      RngStream& rng);

// Appends generated captions until the set holds `target_size` prompts,
// preferring captions with a coverage vector not yet in the set. Gives up
// after 8 * target_size generator calls. Returns the number of calls made.
std::size_t extend_prompt_set(PromptSet& set, std::size_t target_size,
                              const AspectSet& aspects, CaptionGenerator& generator,
                              RngStream& rng);

}  // namespace dmq
