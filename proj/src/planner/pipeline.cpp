#include "piece/planner/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "piece/error.hpp"
#include "piece/numerics/checkpoint.hpp"
#include "piece/numerics/optim.hpp"
#include "piece/numerics/rng.hpp"

namespace piece::planner {

using corpus::Component;
using corpus::TokenId;
using corpus::Vocabulary;
using num::Tape;
using num::Tensor;
using num::Var;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kManifestFormat = "piece-checkpoint";

EngineDims engine_dims(const PieceConfig& c) {
  return EngineDims{c.width, 2 * c.scaffold_hidden, c.sheaf.out_dim, c.key_dim, c.value_dim};
}

DecoderConfig decoder_config(const PieceConfig& c, std::size_t vocab) {
  DecoderConfig d;
  d.vocab = vocab;
  d.width = c.width;
  d.blocks = c.blocks;
  d.ff_width = c.ff_width;
  d.max_len = c.max_len;
  d.tied_head = c.tied_head;
  return d;
}

std::vector<const corpus::Dialogue*> training_dialogues(const corpus::Corpus& c) {
  if (!c.split.empty()) return c.in_split(corpus::Split::Train);
  std::vector<const corpus::Dialogue*> all;
  for (const corpus::Dialogue& d : c.dialogues) all.push_back(&d);
  return all;
}

// Temporary sibling file renamed over `path` on success.
template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer&& write) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  try {
    write(tmp);
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw;
  }
}

double mean_entropy(const Tensor& weights) {
  const std::size_t rows = weights.rows(), cols = weights.cols();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double w = weights[r * cols + c];
      if (w > 0.0) total -= w * std::log(w);
    }
  return rows == 0 ? 0.0 : total / static_cast<double>(rows);
}

std::vector<double> row_norms(const Tensor& x) {
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += x[r * x.cols() + c] * x[r * x.cols() + c];
    out[r] = std::sqrt(s);
  }
  return out;
}

}  // namespace

PieceModel PieceModel::init(const PieceConfig& config, corpus::Vocabulary vocab, knowledge::Lexicon lexicon) {
  validate_config(config);
  knowledge::validate_lexicon(lexicon);
  const num::Initializer init(config.seed);
  const std::size_t v = vocab.size();
  PieceModel m;
  m.config = config;
  m.classifier = classifier::ComponentClassifier::init(config.seed, v, config.classifier.embed_dim,
                                                       config.classifier.hidden_dim);
  m.static_table = knowledge::StaticTable::random(vocab, config.static_dim, num::Rng::derive(config.seed, "static"));
  m.encoder = knowledge::ContextEncoder::init(init, "scaf.encoder", v, config.embed_dim);
  m.scaffold = knowledge::ScaffoldParams::init(init, "scaf", config.embed_dim + config.static_dim,
                                               config.scaffold_hidden);
  m.sheaf = sheaf::SheafParams::init(init, "sheaf", config.embed_dim, config.sheaf);
  m.decoder = DecoderLM::init(init, decoder_config(config, v), engine_dims(config));
  m.vocab = std::move(vocab);
  m.lexicon = std::move(lexicon);
  return m;
}

void PieceModel::collect_trainable(num::NamedParams& out) {
  encoder.collect("scaf.encoder.", out);
  scaffold.collect("scaf.", out);
  sheaf.collect("sheaf.", out);
  decoder.collect(out);
}

void PieceModel::collect_all(num::NamedParams& out) {
  classifier.collect("clf.", out);
  out.emplace_back("scaf.static", &static_table.table());
  collect_trainable(out);
}

PreparedDialogue prepare_dialogue(const PieceModel& model, const corpus::Dialogue& dialogue) {
  PreparedDialogue p;
  p.id = dialogue.id;
  p.tokens = corpus::encode_dialogue(dialogue, model.vocab);
  const auto predictions = classifier::classify_dialogue(model.classifier, p.tokens, model.config.classifier.window);
  for (std::size_t i = 0; i < dialogue.size(); ++i) {
    const auto& gold = dialogue.utterances[i].component;
    p.labels.push_back(model.config.use_gold_components && gold ? *gold : predictions[i].label);
  }
  p.filtered = knowledge::filter_dialogue(dialogue, classifier::mask_from_labels(p.labels), model.lexicon,
                                          model.static_table, model.vocab, model.config.phq_threshold);
  p.graph = sheaf::build_graph(dialogue, sheaf::GraphConfig{model.config.same_speaker_edges});
  p.static_rows = knowledge::embed_static_all(model.static_table, p.tokens);
  if (dialogue.gold_summary) {
    p.has_summary = true;
    p.summary = model.vocab.encode(*dialogue.gold_summary);
  }
  return p;
}

PlanForward encode_plan(Tape& tape, const PieceModel& model, const PreparedDialogue& prepared, Ablation ablation) {
  Var contextual = model.encoder.encode_all(tape, prepared.tokens);
  Var r_k = knowledge::scaffold(model.scaffold, contextual, tape.constant(prepared.static_rows), prepared.filtered.keep);
  sheaf::StructuralResult structure = sheaf::encode_structure(tape, prepared.graph, contextual, model.sheaf);
  return PlanForward{PlanContext{r_k, structure.r_s, prepared.filtered.keep, ablation}, structure.laplacian};
}

PlanMemory compute_memory(const PieceModel& model, const PreparedDialogue& prepared, Ablation ablation) {
  Tape tape;
  PlanForward f = encode_plan(tape, model, prepared, ablation);
  return PlanMemory{f.context.r_k.value(), f.context.r_s.value(), f.context.keep, ablation};
}

Var summary_loss(Tape& tape, const PieceModel& model, const PreparedDialogue& prepared, Ablation ablation) {
  if (!prepared.has_summary) throw DataError("dialogue " + prepared.id + " has no gold summary");
  PlanForward f = encode_plan(tape, model, prepared, ablation);
  return teacher_forced_loss(tape, model.decoder, prepared.summary, &f.context);
}

double summary_loss_value(const PieceModel& model, const PreparedDialogue& prepared, Ablation ablation) {
  Tape tape;
  return summary_loss(tape, model, prepared, ablation).value().item();
}

std::vector<TokenId> generate_tokens(const PieceModel& model, const PreparedDialogue& prepared,
                                     const GenerationConfig& generation, Ablation ablation) {
  validate_generation(generation, model.decoder);
  const PlanMemory memory = compute_memory(model, prepared, ablation);
  StepFn step = [&](const std::vector<TokenId>& prefix) { return decode_step(model.decoder, prefix, &memory); };
  if (generation.mode == GenerationConfig::Mode::Greedy) return greedy_decode(step, generation.max_length);
  return beam_decode(step, generation.beam_width, generation.max_length, generation.length_penalty);
}

std::string generate_summary(const PieceModel& model, const corpus::Dialogue& dialogue,
                             const GenerationConfig& generation, Ablation ablation) {
  return model.vocab.decode(generate_tokens(model, prepare_dialogue(model, dialogue), generation, ablation));
}

PieceModel build_model(const corpus::Corpus& corpus, const PieceConfig& config, knowledge::Lexicon lexicon,
                       classifier::ClassificationReport* report) {
  validate_config(config);
  PieceModel model = PieceModel::init(config, corpus::build_vocab(corpus, config.min_count), std::move(lexicon));
  if (!config.use_gold_components) {
    classifier::ClassifierConfig cc = config.classifier;
    cc.seed = config.seed;
    classifier::ClassifierTraining trained = classifier::train_classifier(corpus, model.vocab, cc);
    model.classifier = std::move(trained.model);
    if (report) *report = trained.report;
  }
  return model;
}

std::vector<double> train_end_to_end(PieceModel& model, const corpus::Corpus& corpus) {
  const TrainingConfig& tc = model.config.training;
  validate_config(model.config);
  std::vector<PreparedDialogue> data;
  for (const corpus::Dialogue* d : training_dialogues(corpus))
    if (d->gold_summary) data.push_back(prepare_dialogue(model, *d));
  if (data.empty()) throw DataError("no gold summaries among the training dialogues");

  num::NamedParams params;
  model.collect_trainable(params);
  num::OptimizerState opt(tc.learning_rate, tc.decay);
  num::Rng rng(num::Rng::derive(model.config.seed, "e2e.shuffle"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> losses;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      Tape tape;
      Var total;
      for (std::size_t b = start; b < end; ++b) {
        Var l = summary_loss(tape, model, data[order[b]]);
        total = total.valid() ? num::add(total, l) : l;
      }
      Var loss = num::scale(total, 1.0 / static_cast<double>(end - start));
      loss_sum += loss.value().item();
      ++batches;
      num::sgd_step(params, tape.backward(loss), opt);
    }
    losses.push_back(loss_sum / static_cast<double>(batches));
    opt.advance_epoch();
  }
  return losses;
}

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".json";
  return p;
}

void save_model(const std::filesystem::path& path, PieceModel& model) {
  ordered_json manifest;
  manifest["format"] = kManifestFormat;
  manifest["version"] = num::kCheckpointVersion;
  ordered_json config = ordered_json::object();
  for (const auto& [k, v] : config_entries(model.config)) config[k] = v;
  manifest["config"] = std::move(config);
  manifest["config_hash"] = config_hash(model.config);
  manifest["vocab_hash"] = num::hex64(model.vocab.hash());
  manifest["vocab"] = std::vector<std::string>(model.vocab.tokens().begin() + Vocabulary::kReserved,
                                               model.vocab.tokens().end());
  ordered_json lexicon = ordered_json::array();
  for (const knowledge::LexiconEntry& e : model.lexicon.entries) lexicon.push_back({{"item", e.item}, {"phrases", e.phrases}});
  manifest["lexicon"] = std::move(lexicon);

  num::NamedParams params;
  model.collect_all(params);
  write_atomically(path, [&](const std::filesystem::path& tmp) { num::save_checkpoint(tmp, params); });
  write_atomically(manifest_path(path), [&](const std::filesystem::path& tmp) {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os << manifest.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write checkpoint manifest " + tmp.string());
  });
}

PieceModel load_model(const std::filesystem::path& path) {
  const std::filesystem::path mpath = manifest_path(path);
  std::ifstream is(mpath);
  if (!is) throw DataError("cannot read checkpoint manifest " + mpath.string());
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(is);
    if (manifest.at("format").get<std::string>() != kManifestFormat) throw DataError("not a checkpoint manifest");
    ConfigEntries entries;
    for (const auto& [k, v] : manifest.at("config").items()) entries.emplace_back(k, v.get<std::string>());
    PieceConfig config = config_from_entries(entries);
    Vocabulary vocab(manifest.at("vocab").get<std::vector<std::string>>());
    if (num::hex64(vocab.hash()) != manifest.at("vocab_hash").get<std::string>()) {
      throw DataError("checkpoint manifest: vocabulary does not match its hash");
    }
    knowledge::Lexicon lexicon;
    for (const auto& e : manifest.at("lexicon")) {
      lexicon.entries.push_back({e.at("item").get<int>(), e.at("phrases").get<std::vector<std::vector<std::string>>>()});
    }
    PieceModel model = PieceModel::init(config, std::move(vocab), std::move(lexicon));
    num::NamedParams params;
    model.collect_all(params);
    num::assign_checkpoint(num::load_checkpoint(path), params);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint manifest " + mpath.string() + ": " + e.what());
  } catch (const UsageError& e) {
    throw DataError("checkpoint manifest " + mpath.string() + ": " + e.what());
  }
}

PlanInspection inspect_plan(const PieceModel& model, const corpus::Dialogue& dialogue,
                            const GenerationConfig& generation) {
  PlanInspection out;
  out.prepared = prepare_dialogue(model, dialogue);
  const std::vector<TokenId> tokens = generate_tokens(model, out.prepared, generation);
  out.summary = model.vocab.decode(tokens);

  Tape tape;
  PlanForward f = encode_plan(tape, model, out.prepared);
  out.spectrum = sheaf::spectral_range(f.laplacian.value());
  out.knowledge_norms = row_norms(f.context.r_k.value());
  out.structure_norms = row_norms(f.context.r_s.value());

  std::vector<TokenId> prefix{Vocabulary::kBos};
  prefix.insert(prefix.end(), tokens.begin(), tokens.end());
  prefix.resize(std::min(prefix.size(), model.decoder.capacity()));
  std::vector<Var> queries;
  model.decoder.logits(tape, prefix, &f.context, &queries);
  const auto& keep = f.context.keep;
  const bool any_kept = std::any_of(keep.begin(), keep.end(), [](bool k) { return k; });
  for (std::size_t b = 0; b < queries.size(); ++b) {
    // Cycle 2 is unmasked, so an all-true mask yields its weights when nothing is kept.
    const std::vector<bool> mask = any_kept ? keep : std::vector<bool>(keep.size(), true);
    RotationResult r = rotate_attend(model.decoder.blocks[b].engine, queries[b], f.context.r_k, f.context.r_s, mask);
    out.attention.push_back({any_kept ? mean_entropy(r.knowledge_weights.value()) : 0.0,
                             mean_entropy(r.structure_weights.value())});
  }
  return out;
}

}  // namespace piece::planner
