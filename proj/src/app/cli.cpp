#include "piece/app/cli.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "piece/corpus/io.hpp"
#include "piece/corpus/split.hpp"
#include "piece/corpus/synthetic.hpp"
#include "piece/error.hpp"
#include "piece/evaluation/report.hpp"
#include "piece/numerics/rng.hpp"
#include "piece/planner/pipeline.hpp"

namespace piece::app {

namespace {

using planner::PieceConfig;
using planner::PieceModel;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::pair<std::string, std::string> split_entry(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw UsageError("config entry \"" + text + "\" is not key=value");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

std::string fixed(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string exact(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Writes through a sibling temporary so a failure never leaves a partial file.
void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) {
      os.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("failed writing " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

struct ModelFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::uint64_t seed = 1;
  std::size_t epochs = 10;
  double phq_threshold = 0.5;
  bool use_gold = false;
  bool same_speaker = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* phq_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "Flat key=value config file");
    cmd->add_option("--set", sets, "Config override key=value (repeatable)");
    seed_opt = cmd->add_option("--seed", seed, "Seed for initialization, shuffling and the split");
    epochs_opt = cmd->add_option("--epochs", epochs, "Epochs for both the classifier and the summarizer");
    phq_opt = cmd->add_option("--phq-threshold", phq_threshold, "PHQ similarity threshold in [0, 1]");
    cmd->add_flag("--use-gold-components", use_gold, "Use gold component labels instead of the classifier");
    cmd->add_flag("--same-speaker-edges", same_speaker, "Add same-speaker skip edges to the dialogue graph");
  }

  PieceConfig resolve() const {
    PieceConfig c;
    if (!config_file.empty())
      for (const auto& [k, v] : read_config_file(config_file)) planner::set_config_entry(c, k, v);
    for (const std::string& s : sets) {
      const auto [k, v] = split_entry(s);
      planner::set_config_entry(c, k, v);
    }
    if (seed_opt->count()) c.seed = seed;
    if (epochs_opt->count()) c.training.epochs = c.classifier.epochs = epochs;
    if (phq_opt->count()) c.phq_threshold = phq_threshold;
    if (use_gold) c.use_gold_components = true;
    if (same_speaker) c.same_speaker_edges = true;
    planner::validate_config(c);
    return c;
  }
};

struct GenerationFlags {
  std::size_t beam = 1;
  std::size_t max_len = 0;
  double length_penalty = 0.0;
  CLI::Option* beam_opt = nullptr;
  CLI::Option* max_len_opt = nullptr;

  void attach(CLI::App* cmd) {
    beam_opt = cmd->add_option("--beam", beam, "Beam width (greedy decoding when absent)");
    max_len_opt = cmd->add_option("--max-len", max_len, "Maximum summary tokens (default: model max_len)");
    cmd->add_option("--length-penalty", length_penalty, "Beam length penalty exponent");
  }

  planner::GenerationConfig resolve(const PieceModel& model) const {
    planner::GenerationConfig g;
    if (beam_opt->count()) {
      g.mode = planner::GenerationConfig::Mode::Beam;
      g.beam_width = beam;
    }
    g.max_length = max_len_opt->count() ? max_len : model.config.max_len;
    g.length_penalty = length_penalty;
    planner::validate_generation(g, model.decoder);
    return g;
  }
};

struct InputFlags {
  std::string checkpoint;
  std::string corpus;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    cmd->add_option("--corpus", corpus, "Corpus the checkpoint was trained on")->required();
    seed_opt = cmd->add_option("--seed", seed, "Split seed (default: the checkpoint's seed)");
  }
};

struct Loaded {
  PieceModel model;
  corpus::Corpus corpus;
};

// Loads model and corpus, checks the vocabulary hash and recomputes the split.
Loaded load_inputs(const InputFlags& f) {
  Loaded l{planner::load_model(f.checkpoint), corpus::load_corpus(f.corpus)};
  corpus::validate_corpus(l.corpus);
  const auto corpus_vocab = corpus::build_vocab(l.corpus, l.model.config.min_count);
  if (corpus_vocab.hash() != l.model.vocab.hash()) {
    throw DataError("corpus vocabulary hash " + num::hex64(corpus_vocab.hash()) + " does not match checkpoint " +
                    num::hex64(l.model.vocab.hash()));
  }
  const std::uint64_t seed = f.seed_opt->count() ? f.seed : l.model.config.seed;
  if (l.corpus.dialogues.size() >= 3) l.corpus = corpus::split_corpus(l.corpus, l.model.config.split, seed);
  return l;
}

std::vector<const corpus::Dialogue*> select(const corpus::Corpus& c, const std::string& split) {
  if (split == "all" || c.split.empty()) {
    std::vector<const corpus::Dialogue*> all;
    for (const auto& d : c.dialogues) all.push_back(&d);
    return all;
  }
  auto s = corpus::parse_split(split);
  if (!s) throw UsageError("unknown split \"" + split + "\"");
  return c.in_split(*s);
}

int cmd_gen_synthetic(std::size_t dialogues, std::uint64_t seed, std::size_t min_len, std::size_t max_len,
                      double phq_rate, const std::string& out_path, std::ostream& out) {
  corpus::GeneratorSpec spec = corpus::default_generator_spec();
  spec.dialogues = dialogues;
  spec.min_length = min_len;
  spec.max_length = max_len;
  spec.phq_rate = phq_rate;
  corpus::validate_generator_spec(spec);
  const corpus::Corpus c = corpus::generate_synthetic(spec, seed);
  std::ostringstream text;
  corpus::write_corpus(text, c);
  write_text(out_path, text.str());

  std::array<std::size_t, corpus::kComponentCount> counts{};
  std::size_t utterances = 0;
  for (const auto& d : c.dialogues)
    for (const auto& u : d.utterances) {
      ++utterances;
      if (u.component) ++counts[static_cast<std::size_t>(*u.component)];
    }
  out << "dialogues\t" << c.dialogues.size() << "\nutterances\t" << utterances << "\n";
  for (corpus::Component comp : corpus::kComponents)
    out << corpus::component_name(comp) << "\t" << counts[static_cast<std::size_t>(comp)] << "\n";
  return kExitOk;
}

int cmd_train(const ModelFlags& flags, const std::string& corpus_path, const std::string& lexicon_path,
              const std::string& out_path, std::string loss_path, std::ostream& out) {
  const PieceConfig config = flags.resolve();
  knowledge::Lexicon lexicon = lexicon_path.empty() ? knowledge::default_lexicon() : knowledge::load_lexicon(lexicon_path);
  corpus::Corpus c = corpus::load_corpus(corpus_path);
  corpus::validate_corpus(c);
  if (c.dialogues.empty()) throw DataError("corpus " + corpus_path + " is empty");
  if (c.dialogues.size() >= 3) c = corpus::split_corpus(c, config.split, config.seed);
  if (loss_path.empty()) loss_path = out_path + ".loss";

  classifier::ClassificationReport report;
  PieceModel model = planner::build_model(c, config, std::move(lexicon), &report);
  out << "vocabulary\t" << model.vocab.size() << "\n";
  if (!config.use_gold_components) out << "classifier_accuracy\t" << fixed(report.accuracy()) << "\n";
  const std::vector<double> losses = planner::train_end_to_end(model, c);
  std::string log;
  for (std::size_t e = 0; e < losses.size(); ++e) {
    log += std::to_string(e + 1) + "\t" + exact(losses[e]) + "\n";
    out << "epoch\t" << e + 1 << "\tloss\t" << fixed(losses[e]) << "\n";
  }
  planner::save_model(out_path, model);
  write_text(loss_path, log);
  out << "config_hash\t" << planner::config_hash(model.config) << "\ncheckpoint\t" << out_path << "\n";
  return kExitOk;
}

int cmd_summarize(const InputFlags& in, const GenerationFlags& gen, const std::string& split,
                  const std::string& out_path, std::ostream& out) {
  Loaded l = load_inputs(in);
  const planner::GenerationConfig g = gen.resolve(l.model);
  std::string text;
  std::size_t count = 0;
  for (const corpus::Dialogue* d : select(l.corpus, split)) {
    nlohmann::ordered_json rec;
    rec["id"] = d->id;
    rec["summary"] = planner::generate_summary(l.model, *d, g);
    text += rec.dump() + "\n";
    ++count;
  }
  write_text(out_path, text);
  out << "summaries\t" << count << "\n";
  return kExitOk;
}

int cmd_evaluate(const InputFlags& in, const GenerationFlags& gen, const std::string& split,
                 const std::string& ablate, const std::string& out_path, std::ostream& out) {
  const auto ablation = planner::parse_ablation(ablate);
  if (!ablation) throw UsageError("unknown ablation \"" + ablate + "\" (expected none, no-domain or no-struct)");
  Loaded l = load_inputs(in);
  const planner::GenerationConfig g = gen.resolve(l.model);
  const auto dialogues = select(l.corpus, split);
  evaluation::ReportHeader header{planner::config_hash(l.model.config),
                                  std::filesystem::path(in.checkpoint).filename().string(), split,
                                  std::string(planner::ablation_name(*ablation))};
  const PieceModel& model = l.model;
  const auto report = evaluation::evaluate_dialogues(
      dialogues,
      [&](const corpus::Dialogue& d) {
        const planner::PreparedDialogue p = planner::prepare_dialogue(model, d);
        return evaluation::Annotation{model.vocab.decode(planner::generate_tokens(model, p, g, *ablation)), p.labels};
      },
      header);
  const std::string text = report.to_text();
  if (out_path.empty()) {
    out << text;
  } else {
    write_text(out_path, text);
    out << "rouge1_f1\t" << fixed(report.rouge1.mean) << "\nrouge2_f1\t" << fixed(report.rouge2.mean)
        << "\nrougeL_f1\t" << fixed(report.rouge_l.mean) << "\nmhic\t" << fixed(report.mhic.mean) << "\n";
  }
  return kExitOk;
}

int cmd_inspect_plan(const InputFlags& in, const GenerationFlags& gen, const std::string& id, std::ostream& out) {
  Loaded l = load_inputs(in);
  const corpus::Dialogue* d = l.corpus.find(id);
  if (!d) throw DataError("unknown dialogue id " + id);
  const planner::GenerationConfig g = gen.resolve(l.model);
  const planner::PlanInspection ins = planner::inspect_plan(l.model, *d, g);
  const auto& keep = ins.prepared.filtered.keep;
  std::size_t kept = 0;
  for (bool k : keep) kept += k ? 1 : 0;
  out << "dialogue\t" << d->id << "\nutterances\t" << d->size() << "\nkept\t" << kept << "\n\n";
  out << "index\tspeaker\tlabel\tscore\tstatus\tk_norm\ts_norm\ttext\n";
  for (std::size_t i = 0; i < d->size(); ++i) {
    out << i << "\t" << corpus::speaker_code(d->utterances[i].speaker) << "\t"
        << corpus::component_name(ins.prepared.labels[i]) << "\t" << fixed(ins.prepared.filtered.scores[i], 4) << "\t"
        << (keep[i] ? "kept" : "masked") << "\t" << fixed(ins.knowledge_norms[i], 4) << "\t"
        << fixed(ins.structure_norms[i], 4) << "\t" << nlohmann::json(d->utterances[i].text).dump() << "\n";
  }
  out << "\nlaplacian_min_eigenvalue\t" << exact(ins.spectrum.min) << "\nlaplacian_max_eigenvalue\t"
      << exact(ins.spectrum.max) << "\n";
  for (std::size_t b = 0; b < ins.attention.size(); ++b) {
    out << "block" << b << "_knowledge_entropy\t" << (kept ? fixed(ins.attention[b].knowledge_entropy, 4) : "n/a")
        << "\nblock" << b << "_structure_entropy\t" << fixed(ins.attention[b].structure_entropy, 4) << "\n";
  }
  out << "summary\t" << nlohmann::json(ins.summary).dump() << "\n";
  return kExitOk;
}

}  // namespace

planner::ConfigEntries read_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read config file " + path.string());
  planner::ConfigEntries entries;
  std::string line;
  while (std::getline(is, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    entries.push_back(split_entry(line));
  }
  return entries;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Counseling-dialogue summarizer with knowledge filtering, sheaf structure and rotating attention",
               "piece"};
  app.require_subcommand(1);

  std::size_t dialogues = 50, min_len = 6, max_len = 10;
  std::uint64_t gen_seed = 1;
  double phq_rate = 0.6;
  std::string gen_out;
  CLI::App* gen = app.add_subcommand("gen-synthetic", "Write a labeled synthetic corpus");
  gen->add_option("--dialogues", dialogues, "Number of dialogues");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--min-length", min_len, "Minimum utterances per dialogue");
  gen->add_option("--max-length", max_len, "Maximum utterances per dialogue");
  gen->add_option("--phq-rate", phq_rate, "Probability that a symptom slot uses a questionnaire phrase");
  gen->add_option("--out", gen_out, "Output corpus path")->required();

  ModelFlags model_flags;
  std::string train_corpus, lexicon, train_out, loss_log;
  CLI::App* train = app.add_subcommand("train", "Train the classifier and the summarizer");
  train->add_option("--corpus", train_corpus, "Training corpus")->required();
  train->add_option("--lexicon", lexicon, "Questionnaire lexicon (default: built-in)");
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--loss-log", loss_log, "Per-epoch loss log (default: <checkpoint>.loss)");
  model_flags.attach(train);

  InputFlags sum_in, eval_in, insp_in;
  GenerationFlags sum_gen, eval_gen, insp_gen;
  std::string sum_split = "all", sum_out;
  CLI::App* summarize = app.add_subcommand("summarize", "Generate one summary per dialogue");
  sum_in.attach(summarize);
  sum_gen.attach(summarize);
  summarize->add_option("--split", sum_split, "all, train, val or test");
  summarize->add_option("--out", sum_out, "Summaries (JSON Lines)")->required();

  std::string eval_split = "test", ablate = "none", eval_out;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score summaries against gold and predicted components");
  eval_in.attach(evaluate);
  eval_gen.attach(evaluate);
  evaluate->add_option("--split", eval_split, "all, train, val or test");
  evaluate->add_option("--ablate", ablate, "none, no-domain or no-struct");
  evaluate->add_option("--out", eval_out, "Report path (default: stdout)");

  std::string dialogue_id;
  CLI::App* inspect = app.add_subcommand("inspect-plan", "Show filtering, structure and attention diagnostics");
  insp_in.attach(inspect);
  insp_gen.attach(inspect);
  inspect->add_option("--dialogue", dialogue_id, "Dialogue id")->required();

  std::vector<std::string> argv_storage{"piece"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_synthetic(dialogues, gen_seed, min_len, max_len, phq_rate, gen_out, out);
    if (train->parsed()) return cmd_train(model_flags, train_corpus, lexicon, train_out, loss_log, out);
    if (summarize->parsed()) return cmd_summarize(sum_in, sum_gen, sum_split, sum_out, out);
    if (evaluate->parsed()) return cmd_evaluate(eval_in, eval_gen, eval_split, ablate, eval_out, out);
    if (inspect->parsed()) return cmd_inspect_plan(insp_in, insp_gen, dialogue_id, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace piece::app
