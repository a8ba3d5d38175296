#include "piece/classifier/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "piece/error.hpp"
#include "piece/numerics/optim.hpp"

namespace piece::classifier {

using num::Tape;
using num::Tensor;
using num::Var;

ComponentClassifier ComponentClassifier::init(std::uint64_t seed, std::size_t vocab, std::size_t embed_dim,
                                              std::size_t hidden_dim) {
  num::Initializer init(seed);
  return ComponentClassifier{init.uniform("clf.embedding", {vocab, embed_dim}, 1),
                             num::GruParams::init(init, "clf.gru", embed_dim, hidden_dim),
                             init.uniform("clf.query", {hidden_dim, hidden_dim}, hidden_dim),
                             init.uniform("clf.key", {hidden_dim, hidden_dim}, hidden_dim),
                             init.uniform("clf.value", {hidden_dim, hidden_dim}, hidden_dim),
                             num::Dense::init(init, "clf.dense1", hidden_dim, hidden_dim),
                             num::Dense::init(init, "clf.dense2", hidden_dim, kComponentCount)};
}

void ComponentClassifier::collect(const std::string& prefix, num::NamedParams& out) {
  out.emplace_back(prefix + "embedding", &embedding);
  gru.collect(prefix + "gru.", out);
  out.emplace_back(prefix + "query", &query);
  out.emplace_back(prefix + "key", &key);
  out.emplace_back(prefix + "value", &value);
  dense1.collect(prefix + "dense1.", out);
  dense2.collect(prefix + "dense2.", out);
}

Var ComponentClassifier::pool(Tape& tape, const corpus::EncodedDialogue& dialogue) const {
  Var table = tape.param(embedding);
  std::vector<Var> rows;
  rows.reserve(dialogue.size());
  for (const auto& ids : dialogue) rows.push_back(num::mean_rows(num::gather_rows(table, ids)));
  return num::concat_rows(rows);
}

Var ComponentClassifier::logits(Var pooled, std::size_t i, std::size_t window) const {
  if (i >= pooled.rows()) throw ShapeError("classifier: utterance index out of range");
  if (window == 0) throw UsageError("classifier: window must be positive");
  Tape& tape = pooled.tape();
  const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
  Var h = tape.constant(Tensor::zeros({1, gru.hidden()}));
  std::vector<Var> states;
  for (std::size_t j = first; j <= i; ++j) {
    h = num::gru_cell(num::slice_rows(pooled, j, 1), h, gru);
    states.push_back(h);
  }
  Var hs = num::concat_rows(states);
  Var attended = num::scaled_dot_attention(num::matmul(h, tape.param(query)), num::matmul(hs, tape.param(key)),
                                           num::matmul(hs, tape.param(value)))
                     .output;
  return dense2.forward(num::relu(dense1.forward(attended)));
}

ComponentPrediction ComponentPrediction::from_distribution(const std::array<double, kComponentCount>& p) {
  ComponentPrediction out;
  out.distribution = p;
  std::size_t best = 0;
  for (std::size_t c = 1; c < kComponentCount; ++c)
    if (p[c] > p[best]) best = c;
  out.label = static_cast<Component>(best);
  return out;
}

namespace {

ComponentPrediction predict(Var logits) {
  const std::vector<double> p = num::softmax(logits.value().data());
  std::array<double, kComponentCount> dist{};
  std::copy(p.begin(), p.end(), dist.begin());
  return ComponentPrediction::from_distribution(dist);
}

}  // namespace

ComponentPrediction classify_utterance(const ComponentClassifier& model, const corpus::EncodedDialogue& dialogue,
                                       std::size_t i, std::size_t window) {
  if (i >= dialogue.size()) throw ShapeError("classify_utterance: index out of range");
  Tape tape;
  const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
  corpus::EncodedDialogue context(dialogue.begin() + static_cast<std::ptrdiff_t>(first),
                                  dialogue.begin() + static_cast<std::ptrdiff_t>(i + 1));
  return predict(model.logits(model.pool(tape, context), i - first, window));
}

std::vector<ComponentPrediction> classify_dialogue(const ComponentClassifier& model,
                                                   const corpus::EncodedDialogue& dialogue, std::size_t window) {
  Tape tape;
  Var pooled = model.pool(tape, dialogue);
  std::vector<ComponentPrediction> out;
  out.reserve(dialogue.size());
  for (std::size_t i = 0; i < dialogue.size(); ++i) out.push_back(predict(model.logits(pooled, i, window)));
  return out;
}

std::vector<bool> mask_from_labels(const std::vector<Component>& labels) {
  std::vector<bool> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = corpus::is_relevant(labels[i]);
  return mask;
}

std::vector<bool> mask_fillers(const corpus::Dialogue& dialogue, const std::vector<ComponentPrediction>& predictions,
                               bool use_gold) {
  if (predictions.size() != dialogue.size()) throw ShapeError("mask_fillers: prediction count differs from n");
  std::vector<Component> labels;
  labels.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& gold = dialogue.utterances[i].component;
    labels.push_back(use_gold && gold ? *gold : predictions[i].label);
  }
  return mask_from_labels(labels);
}

void ClassificationReport::add(Component gold, Component predicted) {
  ++confusion[static_cast<std::size_t>(gold)][static_cast<std::size_t>(predicted)];
}

std::size_t ClassificationReport::total() const {
  std::size_t n = 0;
  for (const auto& row : confusion)
    for (std::size_t v : row) n += v;
  return n;
}

double ClassificationReport::accuracy() const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  std::size_t hit = 0;
  for (std::size_t c = 0; c < kComponentCount; ++c) hit += confusion[c][c];
  return static_cast<double>(hit) / static_cast<double>(n);
}

double ClassificationReport::precision(Component c) const {
  const auto k = static_cast<std::size_t>(c);
  std::size_t predicted = 0;
  for (std::size_t g = 0; g < kComponentCount; ++g) predicted += confusion[g][k];
  return predicted == 0 ? 0.0 : static_cast<double>(confusion[k][k]) / static_cast<double>(predicted);
}

double ClassificationReport::recall(Component c) const {
  const auto k = static_cast<std::size_t>(c);
  std::size_t gold = 0;
  for (std::size_t p = 0; p < kComponentCount; ++p) gold += confusion[k][p];
  return gold == 0 ? 0.0 : static_cast<double>(confusion[k][k]) / static_cast<double>(gold);
}

double ClassificationReport::f1(Component c) const {
  const double p = precision(c), r = recall(c);
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

std::string ClassificationReport::to_json() const {
  nlohmann::ordered_json j;
  j["examples"] = total();
  j["accuracy"] = accuracy();
  nlohmann::ordered_json classes;
  for (Component c : corpus::kComponents) {
    nlohmann::ordered_json row;
    row["precision"] = precision(c);
    row["recall"] = recall(c);
    row["f1"] = f1(c);
    classes[std::string(corpus::component_name(c))] = row;
  }
  j["classes"] = classes;
  nlohmann::ordered_json matrix = nlohmann::ordered_json::array();
  for (const auto& row : confusion) matrix.push_back(row);
  j["confusion"] = matrix;
  j["confusion_axes"] = "rows gold, columns predicted, order SH PD RT DF";
  return j.dump(2);
}

ClassificationReport evaluate_classifier(const ComponentClassifier& model,
                                         const std::vector<const corpus::Dialogue*>& dialogues,
                                         const corpus::Vocabulary& vocab, std::size_t window) {
  ClassificationReport report;
  for (const corpus::Dialogue* d : dialogues) {
    const auto preds = classify_dialogue(model, corpus::encode_dialogue(*d, vocab), window);
    for (std::size_t i = 0; i < d->size(); ++i)
      if (d->utterances[i].component) report.add(*d->utterances[i].component, preds[i].label);
  }
  return report;
}

namespace {

struct Example {
  std::size_t dialogue;
  std::size_t utterance;
};

std::vector<const corpus::Dialogue*> dialogues_in(const corpus::Corpus& c, corpus::Split s) {
  if (c.split.empty()) {
    std::vector<const corpus::Dialogue*> all;
    if (s == corpus::Split::Train)
      for (const auto& d : c.dialogues) all.push_back(&d);
    return all;
  }
  return c.in_split(s);
}

}  // namespace

ClassifierTraining train_classifier(const corpus::Corpus& corpus, const corpus::Vocabulary& vocab,
                                    const ClassifierConfig& config) {
  if (config.batch_size == 0) throw UsageError("classifier: batch size must be positive");
  const auto train = dialogues_in(corpus, corpus::Split::Train);
  std::vector<corpus::EncodedDialogue> encoded;
  std::vector<Example> examples;
  std::array<std::size_t, kComponentCount> counts{};
  for (std::size_t k = 0; k < train.size(); ++k) {
    encoded.push_back(corpus::encode_dialogue(*train[k], vocab));
    for (std::size_t i = 0; i < train[k]->size(); ++i) {
      const auto& label = train[k]->utterances[i].component;
      if (!label) continue;
      examples.push_back({k, i});
      ++counts[static_cast<std::size_t>(*label)];
    }
  }
  if (examples.empty()) throw DataError("classifier: no labeled training utterances");
  if (config.require_all_classes) {
    for (Component c : corpus::kComponents)
      if (counts[static_cast<std::size_t>(c)] == 0) {
        throw DataError("classifier: class " + std::string(corpus::component_name(c)) + " missing from training data");
      }
  }

  ClassifierTraining out{ComponentClassifier::init(config.seed, vocab.size(), config.embed_dim, config.hidden_dim), {}, {}};
  num::NamedParams params;
  out.model.collect("clf.", params);
  num::OptimizerState opt(config.learning_rate, config.decay);
  num::Rng rng(num::Rng::derive(config.seed, "clf.shuffle"));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(examples);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
      const std::size_t end = std::min(examples.size(), start + config.batch_size);
      Tape tape;
      std::vector<Var> pooled(encoded.size());
      Var total;
      for (std::size_t b = start; b < end; ++b) {
        const Example& ex = examples[b];
        if (!pooled[ex.dialogue].valid()) pooled[ex.dialogue] = out.model.pool(tape, encoded[ex.dialogue]);
        const auto label = static_cast<std::int64_t>(*train[ex.dialogue]->utterances[ex.utterance].component);
        Var ce = num::cross_entropy_logits(out.model.logits(pooled[ex.dialogue], ex.utterance, config.window), {label}, -1);
        total = total.valid() ? num::add(total, ce) : ce;
      }
      Var loss = num::scale(total, 1.0 / static_cast<double>(end - start));
      loss_sum += loss.value().item();
      ++batches;
      num::sgd_step(params, tape.backward(loss), opt);
    }
    out.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
    opt.advance_epoch();
  }

  auto report_on = dialogues_in(corpus, corpus::Split::Val);
  if (report_on.empty()) report_on = train;
  out.report = evaluate_classifier(out.model, report_on, vocab, config.window);
  return out;
}

}  // namespace piece::classifier
