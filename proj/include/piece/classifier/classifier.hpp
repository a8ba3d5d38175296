#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "piece/corpus/types.hpp"
#include "piece/corpus/vocab.hpp"
#include "piece/numerics/layers.hpp"

namespace piece::classifier {

using corpus::Component;
using corpus::kComponentCount;

struct ClassifierConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t window = 32;
  std::size_t epochs = 10;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  double decay = 0.1;
  std::uint64_t seed = 1;
  bool require_all_classes = true;
};

struct ComponentClassifier {
  num::Tensor embedding;  // vocab x e
  num::GruParams gru;     // e -> h
  num::Tensor query;      // h x h
  num::Tensor key;        // h x h
  num::Tensor value;      // h x h
  num::Dense dense1;      // h -> h
  num::Dense dense2;      // h -> 4

  static ComponentClassifier init(std::uint64_t seed, std::size_t vocab, std::size_t embed_dim,
                                  std::size_t hidden_dim);
  void collect(const std::string& prefix, num::NamedParams& out);

  // Pooled utterance rows of a whole dialogue (n x e).
  num::Var pool(num::Tape& tape, const corpus::EncodedDialogue& dialogue) const;
  // Logits (1 x 4) for utterance i from pooled rows, over the last `window` utterances.
  num::Var logits(num::Var pooled, std::size_t i, std::size_t window) const;
};

struct ComponentPrediction {
  std::array<double, kComponentCount> distribution{};  // SH, PD, RT, DF
  Component label = Component::SH;                     // argmax, lowest index on ties

  static ComponentPrediction from_distribution(const std::array<double, kComponentCount>& p);
};

ComponentPrediction classify_utterance(const ComponentClassifier& model, const corpus::EncodedDialogue& dialogue,
                                       std::size_t i, std::size_t window);
std::vector<ComponentPrediction> classify_dialogue(const ComponentClassifier& model,
                                                   const corpus::EncodedDialogue& dialogue, std::size_t window);

// mask[i] = label_i is SH, PD or RT. With use_gold, an utterance's gold label
// replaces its prediction when present.
std::vector<bool> mask_fillers(const corpus::Dialogue& dialogue, const std::vector<ComponentPrediction>& predictions,
                               bool use_gold = false);
std::vector<bool> mask_from_labels(const std::vector<Component>& labels);

struct ClassificationReport {
  std::array<std::array<std::size_t, kComponentCount>, kComponentCount> confusion{};  // [gold][predicted]

  void add(Component gold, Component predicted);
  std::size_t total() const;
  double accuracy() const;
  double precision(Component c) const;
  double recall(Component c) const;
  double f1(Component c) const;
  std::string to_json() const;
  bool operator==(const ClassificationReport&) const = default;
};

ClassificationReport evaluate_classifier(const ComponentClassifier& model, const std::vector<const corpus::Dialogue*>& dialogues,
                                         const corpus::Vocabulary& vocab, std::size_t window);

struct ClassifierTraining {
  ComponentClassifier model;
  ClassificationReport report;       // validation split, or training data when there is none
  std::vector<double> epoch_losses;  // mean batch loss per epoch
};

// Trains on the labeled utterances of the Train split (all dialogues when the
// corpus has no split). Throws DataError when no utterance is labeled, or when
// require_all_classes is set and a class is absent.
ClassifierTraining train_classifier(const corpus::Corpus& corpus, const corpus::Vocabulary& vocab,
                                    const ClassifierConfig& config);

}  // namespace piece::classifier
