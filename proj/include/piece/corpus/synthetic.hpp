#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "piece/corpus/types.hpp"

namespace piece::corpus {

// Templates may contain the slots {phq}, {concern} and {time}. A {phq} slot is
// filled from `phq_phrases` with probability `phq_rate`, else from `neutral_phrases`.
struct GeneratorSpec {
  std::size_t dialogues = 50;
  std::size_t min_length = 6;
  std::size_t max_length = 10;
  double phq_rate = 0.6;
  std::array<double, kComponentCount> component_weights{2379, 5428, 1242, 2494};
  std::array<std::vector<std::string>, kComponentCount> templates;
  std::vector<std::string> phq_phrases;
  std::vector<std::string> neutral_phrases;
  std::vector<std::string> concerns;
  std::vector<std::string> times;
  std::string id_prefix = "syn";
};

GeneratorSpec default_generator_spec();

struct Provenance {
  Component component = Component::DF;
  std::size_t template_index = 0;
  bool phq_filled = false;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<std::vector<Provenance>> provenance;  // [dialogue][utterance]
};

// Throws UsageError for zero dialogues, a bad length range, weights that are not
// positive, or an empty template or filler pool.
void validate_generator_spec(const GeneratorSpec& spec);

// Speakers alternate starting with the therapist. Every utterance is labeled and
// every dialogue carries the gold summary: its SH, PD and RT texts joined by spaces.
// A dialogue that would contain no relevant utterance has its last one redrawn as SH.
SyntheticCorpus generate_synthetic_traced(const GeneratorSpec& spec, std::uint64_t seed);
Corpus generate_synthetic(const GeneratorSpec& spec, std::uint64_t seed);

}  // namespace piece::corpus
