#include <fstream>

#include "doctest.h"
#include "piece/corpus/synthetic.hpp"
#include "piece/error.hpp"
#include "piece/numerics/gradcheck.hpp"
#include "piece/planner/pipeline.hpp"
#include "test_util.hpp"

using namespace piece;
using namespace piece::planner;
using corpus::Component;
using corpus::Speaker;

namespace {

PieceConfig tiny_config() {
  PieceConfig c;
  c.embed_dim = 3;
  c.static_dim = 4;
  c.scaffold_hidden = 2;
  c.sheaf.out_dim = 3;
  c.width = 4;
  c.blocks = 1;
  c.ff_width = 4;
  c.key_dim = 3;
  c.value_dim = 3;
  c.max_len = 8;
  c.classifier.embed_dim = 3;
  c.classifier.hidden_dim = 3;
  c.classifier.epochs = 1;
  c.use_gold_components = true;
  c.phq_threshold = 0.3;
  return c;
}

knowledge::Lexicon tiny_lexicon() { return knowledge::Lexicon{{{2, {{"feel", "down"}}}}}; }

corpus::Dialogue three_utterances() {
  corpus::Dialogue d;
  d.id = "t";
  d.utterances = {{0, Speaker::Therapist, "how are you ?", Component::PD},
                  {1, Speaker::Client, "feel down", Component::SH},
                  {2, Speaker::Therapist, "okay .", Component::DF}};
  d.gold_summary = "feel down";
  return d;
}

corpus::Corpus tiny_corpus() {
  corpus::Corpus c;
  c.dialogues.push_back(three_utterances());
  corpus::Dialogue d = three_utterances();
  d.id = "u";
  d.utterances[1].text = "i feel tired and down .";
  d.gold_summary = "i feel tired and down .";
  c.dialogues.push_back(d);
  return c;
}

bool same_tensors(PieceModel& a, PieceModel& b) {
  num::NamedParams pa, pb;
  a.collect_all(pa);
  b.collect_all(pb);
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i].first != pb[i].first || !(*pa[i].second == *pb[i].second)) return false;
  return true;
}

}  // namespace

TEST_CASE("config entries round-trip and hash") {
  PieceConfig c = tiny_config();
  c.training.learning_rate = 0.1;
  c.split = {0.8, 0.1, 0.1};
  const PieceConfig back = config_from_entries(config_entries(c));
  CHECK(config_entries(back) == config_entries(c));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
  PieceConfig d = c;
  set_config_entry(d, "lr", "0.2");
  CHECK(config_hash(d) != config_hash(c));
  CHECK(d.training.learning_rate == 0.2);
  set_config_entry(d, "same_speaker_edges", "true");
  CHECK(d.same_speaker_edges);
  CHECK_THROWS_AS(set_config_entry(d, "nope", "1"), UsageError);
  CHECK_THROWS_AS(set_config_entry(d, "width", "-3"), UsageError);
  CHECK_THROWS_AS(set_config_entry(d, "lr", "fast"), UsageError);
  d.phq_threshold = 1.5;
  CHECK_THROWS_AS(validate_config(d), UsageError);
  d = c;
  d.width = 0;
  CHECK_THROWS_AS(validate_config(d), UsageError);
  d = c;
  d.split = {0.5, 0.2, 0.2};
  CHECK_THROWS_AS(validate_config(d), UsageError);
}

TEST_CASE("prepared dialogue combines component and threshold masks") {
  const corpus::Corpus c = tiny_corpus();
  PieceModel m = build_model(c, tiny_config(), tiny_lexicon());
  const PreparedDialogue p = prepare_dialogue(m, c.dialogues[0]);
  CHECK(p.labels == std::vector<Component>{Component::PD, Component::SH, Component::DF});
  REQUIRE(p.filtered.scores.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(p.filtered.scores[i] >= 0.0);
    CHECK(p.filtered.scores[i] <= 1.0);
    CHECK(p.filtered.keep[i] == (corpus::is_relevant(p.labels[i]) && p.filtered.scores[i] >= 0.3));
  }
  CHECK(p.filtered.keep[1]);
  CHECK_FALSE(p.filtered.keep[2]);
  CHECK(p.graph.edges.size() == 2);
  CHECK(p.has_summary);
  CHECK(p.summary == m.vocab.encode("feel down"));
}

TEST_CASE("full pipeline gradients match finite differences") {
  const corpus::Corpus c = tiny_corpus();
  // Unit-scale parameters keep attention off its flat default regime, where
  // planner gradients fall below central-difference resolution.
  for (std::uint64_t seed : {2, 3, 4}) {
    PieceConfig cfg = tiny_config();
    cfg.seed = seed;
    cfg.sheaf.diagonal_maps = seed % 2 == 1;
    PieceModel m = build_model(c, cfg, tiny_lexicon());
    const PreparedDialogue p = prepare_dialogue(m, c.dialogues[0]);
    REQUIRE(p.filtered.keep[1]);
    num::NamedParams params;
    m.collect_trainable(params);
    num::Rng rng(seed);
    for (auto& [name, t] : params)
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = rng.uniform(-1.0, 1.0);
    auto res = num::check_gradients([&](num::Tape& t) { return summary_loss(t, m, p); }, params);
    CHECK_MESSAGE(res.max_relative_error < 1e-4, "seed ", seed, " worst ", res.worst_param, " err ",
                  res.max_relative_error);
  }
}

TEST_CASE("training with zero epochs keeps the initialization") {
  const corpus::Corpus c = tiny_corpus();
  PieceConfig cfg = tiny_config();
  cfg.training.epochs = 0;
  PieceModel trained = build_model(c, cfg, tiny_lexicon());
  CHECK(train_end_to_end(trained, c).empty());
  PieceModel fresh = PieceModel::init(cfg, trained.vocab, tiny_lexicon());
  CHECK(same_tensors(trained, fresh));
}

TEST_CASE("training is deterministic and lowers the loss") {
  const corpus::Corpus c = tiny_corpus();
  PieceConfig cfg = tiny_config();
  cfg.training = {6, 2, 0.5, 1.0};
  PieceModel a = build_model(c, cfg, tiny_lexicon());
  PieceModel b = build_model(c, cfg, tiny_lexicon());
  const double before = summary_loss_value(a, prepare_dialogue(a, c.dialogues[0]));
  const auto la = train_end_to_end(a, c);
  const auto lb = train_end_to_end(b, c);
  CHECK(la.size() == 6);
  CHECK(la == lb);
  CHECK(same_tensors(a, b));
  CHECK(la.back() < la.front());
  CHECK(summary_loss_value(a, prepare_dialogue(a, c.dialogues[0])) < before);
}

TEST_CASE("training requires gold summaries") {
  corpus::Corpus c = tiny_corpus();
  for (auto& d : c.dialogues) d.gold_summary.reset();
  PieceModel m = build_model(tiny_corpus(), tiny_config(), tiny_lexicon());
  CHECK_THROWS_AS(train_end_to_end(m, c), DataError);
  CHECK_THROWS_AS(summary_loss_value(m, prepare_dialogue(m, c.dialogues[0])), DataError);
}

TEST_CASE("classifier predictions drive the masks outside gold mode") {
  corpus::GeneratorSpec spec = corpus::default_generator_spec();
  spec.dialogues = 6;
  const corpus::Corpus c = corpus::generate_synthetic(spec, 3);
  PieceConfig cfg = tiny_config();
  cfg.use_gold_components = false;
  PieceModel m = build_model(c, cfg, knowledge::default_lexicon());
  const PreparedDialogue p = prepare_dialogue(m, c.dialogues[0]);
  const auto enc = corpus::encode_dialogue(c.dialogues[0], m.vocab);
  const auto preds = classifier::classify_dialogue(m.classifier, enc, cfg.classifier.window);
  for (std::size_t i = 0; i < preds.size(); ++i) CHECK(p.labels[i] == preds[i].label);
}

TEST_CASE("generation is deterministic and beam width 1 matches greedy") {
  const corpus::Corpus c = tiny_corpus();
  PieceModel m = build_model(c, tiny_config(), tiny_lexicon());
  GenerationConfig greedy;
  greedy.max_length = 8;
  GenerationConfig beam = greedy;
  beam.mode = GenerationConfig::Mode::Beam;
  beam.beam_width = 1;
  for (const auto& d : c.dialogues) {
    const std::string g = generate_summary(m, d, greedy);
    CHECK(g == generate_summary(m, d, greedy));
    CHECK(g == generate_summary(m, d, beam));
  }
  GenerationConfig too_long = greedy;
  too_long.max_length = 9;
  CHECK_THROWS_AS(generate_summary(m, c.dialogues[0], too_long), UsageError);
}

TEST_CASE("checkpoint round trip") {
  const corpus::Corpus c = tiny_corpus();
  PieceConfig cfg = tiny_config();
  cfg.training = {2, 2, 0.3, 1.0};
  PieceModel m = build_model(c, cfg, tiny_lexicon());
  train_end_to_end(m, c);
  const auto path = piece::testing::temp_path("model");
  save_model(path, m);
  CHECK(std::filesystem::exists(manifest_path(path)));
  CHECK_FALSE(std::filesystem::exists(std::filesystem::path(path.string() + ".tmp")));
  PieceModel back = load_model(path);
  CHECK(same_tensors(m, back));
  CHECK(back.vocab.hash() == m.vocab.hash());
  CHECK(config_hash(back.config) == config_hash(m.config));
  GenerationConfig g;
  g.max_length = 8;
  CHECK(generate_summary(back, c.dialogues[1], g) == generate_summary(m, c.dialogues[1], g));

  // Same model saved twice gives identical bytes.
  const auto again = piece::testing::temp_path("model");
  save_model(again, back);
  auto bytes = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  CHECK(bytes(path) == bytes(again));
  CHECK(bytes(manifest_path(path)) == bytes(manifest_path(again)));

  std::filesystem::remove(again);
  CHECK_THROWS_AS(load_model(again), DataError);
  std::ofstream(manifest_path(again)) << "{\"format\": \"other\"}";
  CHECK_THROWS_AS(load_model(again), DataError);
}

TEST_CASE("plan inspection diagnostics") {
  const corpus::Corpus c = tiny_corpus();
  PieceModel m = build_model(c, tiny_config(), tiny_lexicon());
  GenerationConfig g;
  g.max_length = 8;
  const PlanInspection ins = inspect_plan(m, c.dialogues[1], g);
  CHECK(ins.spectrum.min >= -1e-10);
  CHECK(ins.spectrum.max <= 2 + 1e-10);
  CHECK(ins.knowledge_norms.size() == 3);
  CHECK(ins.structure_norms.size() == 3);
  CHECK(ins.attention.size() == 1);
  CHECK(ins.summary == generate_summary(m, c.dialogues[1], g));

  corpus::Dialogue fillers = c.dialogues[0];
  for (auto& u : fillers.utterances) u.component = Component::DF;
  const PlanInspection none = inspect_plan(m, fillers, g);
  for (bool k : none.prepared.filtered.keep) CHECK_FALSE(k);
  CHECK(none.attention[0].knowledge_entropy == 0.0);
  CHECK(none.attention[0].structure_entropy > 0.0);
}
