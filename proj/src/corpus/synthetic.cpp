#include "piece/corpus/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "piece/error.hpp"
#include "piece/numerics/rng.hpp"

namespace piece::corpus {

GeneratorSpec default_generator_spec() {
  GeneratorSpec s;
  s.templates[static_cast<std::size_t>(Component::SH)] = {
      "i keep {phq} .",
      "for {time} i am {phq} .",
      "lately i am {phq} .",
      "my mother was {phq} too .",
      "it began with {phq} .",
      "mostly i am {phq} .",
  };
  s.templates[static_cast<std::size_t>(Component::PD)] = {
      "how has your {concern} been over {time} ?",
      "can you tell me more about your {concern} ?",
      "what goes through your mind when you think about your {concern} ?",
      "when did you first notice problems with your {concern} ?",
      "how do you usually cope when your {concern} gets hard ?",
      "who do you talk to about your {concern} ?",
  };
  s.templates[static_cast<std::size_t>(Component::RT)] = {
      "it sounds like your {concern} has been weighing on you .",
      "so you feel that your {concern} is out of your control .",
      "i hear that your {concern} leaves you exhausted .",
      "you are saying your {concern} has changed how you see yourself .",
  };
  s.templates[static_cast<std::size_t>(Component::DF)] = {
      "okay .",
      "mm hmm .",
      "good morning , thanks for coming in .",
      "right , yes .",
      "sure , go on .",
      "let me just check the time .",
  };
  // Same wording as the default questionnaire lexicon.
  s.phq_phrases = {
      "little interest in things",
      "no pleasure in anything",
      "feeling down and depressed",
      "feeling hopeless about everything",
      "trouble falling asleep",
      "sleeping far too much",
      "feeling tired all the time",
      "having little energy",
      "eating much less than usual",
      "overeating at night",
      "feeling like a failure",
      "feeling bad about myself",
      "trouble concentrating on work",
      "cannot focus on reading",
      "moving slowly all day",
      "too restless to sit still",
      "thoughts of hurting myself",
      "better off dead",
  };
  s.neutral_phrases = {
      "busy with work",
      "travelling for my job",
      "looking after my sister",
      "planning a move",
      "painting the kitchen",
  };
  s.concerns = {"sleep", "mood", "job", "family", "relationship", "energy", "appetite", "studies"};
  s.times = {"two weeks", "a month", "several months", "a year", "the winter"};
  return s;
}

void validate_generator_spec(const GeneratorSpec& s) {
  if (s.dialogues == 0) throw UsageError("generator: dialogue count must be positive");
  if (s.min_length == 0 || s.min_length > s.max_length) throw UsageError("generator: invalid length range");
  if (!(s.phq_rate >= 0.0 && s.phq_rate <= 1.0)) throw UsageError("generator: phq rate must lie in [0, 1]");
  double total = 0.0;
  for (double w : s.component_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("generator: component weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw UsageError("generator: component weights sum to zero");
  for (Component c : kComponents) {
    const auto& pool = s.templates[static_cast<std::size_t>(c)];
    if (pool.empty()) throw UsageError("generator: empty template pool for " + std::string(component_name(c)));
  }
  for (const auto* pool : {&s.phq_phrases, &s.neutral_phrases, &s.concerns, &s.times}) {
    if (pool->empty()) throw UsageError("generator: empty filler pool");
  }
}

namespace {

template <class T>
const T& pick(num::Rng& rng, const std::vector<T>& pool) {
  return pool[static_cast<std::size_t>(rng.below(pool.size()))];
}

Component draw_component(num::Rng& rng, const std::array<double, kComponentCount>& w) {
  double total = 0.0;
  for (double x : w) total += x;
  double u = rng.uniform01() * total;
  for (Component c : kComponents) {
    u -= w[static_cast<std::size_t>(c)];
    if (u < 0.0) return c;
  }
  return Component::DF;
}

void replace_all(std::string& s, const std::string& slot, const std::string& value) {
  for (std::size_t pos = s.find(slot); pos != std::string::npos; pos = s.find(slot, pos + value.size())) {
    s.replace(pos, slot.size(), value);
  }
}

struct Drawn {
  std::string text;
  Provenance provenance;
};

Drawn draw_utterance(num::Rng& rng, const GeneratorSpec& s, Component c) {
  const auto& pool = s.templates[static_cast<std::size_t>(c)];
  Drawn d;
  d.provenance.component = c;
  d.provenance.template_index = static_cast<std::size_t>(rng.below(pool.size()));
  d.text = pool[d.provenance.template_index];
  if (d.text.find("{phq}") != std::string::npos) {
    d.provenance.phq_filled = rng.bernoulli(s.phq_rate);
    replace_all(d.text, "{phq}", d.provenance.phq_filled ? pick(rng, s.phq_phrases) : pick(rng, s.neutral_phrases));
  }
  if (d.text.find("{concern}") != std::string::npos) replace_all(d.text, "{concern}", pick(rng, s.concerns));
  if (d.text.find("{time}") != std::string::npos) replace_all(d.text, "{time}", pick(rng, s.times));
  return d;
}

}  // namespace

SyntheticCorpus generate_synthetic_traced(const GeneratorSpec& s, std::uint64_t seed) {
  validate_generator_spec(s);
  num::Rng rng(num::Rng::derive(seed, "corpus.synthetic"));
  SyntheticCorpus out;
  const int width = static_cast<int>(std::to_string(s.dialogues - 1).size());
  for (std::size_t k = 0; k < s.dialogues; ++k) {
    char id[64];
    std::snprintf(id, sizeof id, "%s-%0*zu", s.id_prefix.c_str(), width, k);
    Dialogue d;
    d.id = id;
    const std::size_t n = s.min_length + static_cast<std::size_t>(rng.below(s.max_length - s.min_length + 1));
    std::vector<Provenance> prov;
    bool any_relevant = false;
    for (std::size_t i = 0; i < n; ++i) {
      Component c = draw_component(rng, s.component_weights);
      if (i + 1 == n && !any_relevant && c == Component::DF) c = Component::SH;
      any_relevant = any_relevant || is_relevant(c);
      Drawn u = draw_utterance(rng, s, c);
      d.utterances.push_back({i, i % 2 == 0 ? Speaker::Therapist : Speaker::Client, std::move(u.text), c});
      prov.push_back(u.provenance);
    }
    std::string summary;
    for (const Utterance& u : d.utterances) {
      if (!is_relevant(*u.component)) continue;
      if (!summary.empty()) summary.push_back(' ');
      summary += u.text;
    }
    d.gold_summary = std::move(summary);
    out.corpus.dialogues.push_back(std::move(d));
    out.provenance.push_back(std::move(prov));
  }
  return out;
}

Corpus generate_synthetic(const GeneratorSpec& spec, std::uint64_t seed) {
  return generate_synthetic_traced(spec, seed).corpus;
}

}  // namespace piece::corpus
