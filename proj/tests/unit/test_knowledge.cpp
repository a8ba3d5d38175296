#include <cmath>
#include <sstream>

#include "doctest.h"
#include "piece/corpus/synthetic.hpp"
#include "piece/error.hpp"
#include "piece/knowledge/knowledge.hpp"
#include "piece/numerics/gradcheck.hpp"
#include "test_util.hpp"

using namespace piece;
using namespace piece::knowledge;
using corpus::Utterance;
using corpus::Vocabulary;
using num::Tape;
using num::Tensor;
using num::Var;
using piece::testing::random_tensor;

namespace {

// Vocabulary {x, y, z} with a 2-d table: x = [1,0], y = [0,1], z = [1,1].
struct Toy {
  Vocabulary vocab{{"x", "y", "z"}};
  StaticTable table{Tensor({8, 2}, {0, 0, 0.3, 0.3, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 1, 1})};
};

Lexicon lexicon_of(std::vector<std::vector<std::string>> phrases) {
  Lexicon lex;
  lex.entries.push_back({2, std::move(phrases)});
  return lex;
}

Utterance utt(const std::string& text) { return {0, corpus::Speaker::Client, text, std::nullopt}; }

corpus::Dialogue dialogue_of(const std::vector<std::string>& texts) {
  corpus::Dialogue d;
  d.id = "d";
  for (std::size_t i = 0; i < texts.size(); ++i) d.utterances.push_back({i, corpus::Speaker::Client, texts[i], {}});
  return d;
}

}  // namespace

TEST_CASE("score examples") {
  Toy toy;
  CHECK(score_utterance(utt("x x"), lexicon_of({{"x"}}), toy.table, toy.vocab) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(score_utterance(utt("x"), lexicon_of({{"y"}}), toy.table, toy.vocab) == 0.0);
  CHECK(score_utterance(utt("z"), lexicon_of({{"x"}}), toy.table, toy.vocab) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(score_utterance(utt("x y"), lexicon_of({{"y"}, {"x"}}), toy.table, toy.vocab) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(score_utterance(utt("unknown words"), lexicon_of({{"x"}}), toy.table, toy.vocab) == 0.0);
  CHECK(score_utterance(utt("x"), lexicon_of({{"unknown"}}), toy.table, toy.vocab) == 0.0);
}

TEST_CASE("negative cosine clamps to zero") {
  Vocabulary v({"p", "n"});
  StaticTable t(Tensor({7, 2}, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, -1, 0}));
  CHECK(score_utterance(utt("p"), lexicon_of({{"n"}}), t, v) == 0.0);
}

TEST_CASE("scores stay within [0, 1] on random tables") {
  auto c = corpus::generate_synthetic(corpus::default_generator_spec(), 4);
  Vocabulary v = corpus::build_vocab(c, 1);
  StaticTable t = StaticTable::random(v, 16, 9);
  Lexicon lex = default_lexicon();
  for (const auto& d : c.dialogues)
    for (const auto& u : d.utterances) {
      double s = score_utterance(u, lex, t, v);
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
}

TEST_CASE("threshold rule and monotonicity") {
  CHECK(apply_threshold({0.6, 0.4}, 0.5) == std::vector<bool>{true, false});
  CHECK(apply_threshold({0.0, 0.4, 1.0}, 0.0) == std::vector<bool>{true, true, true});
  CHECK(apply_threshold({0.5}, 0.5) == std::vector<bool>{true});
  CHECK_THROWS_AS(apply_threshold({0.5}, 1.5), UsageError);
  num::Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(12);
    for (double& x : s) x = rng.uniform01();
    double lo = rng.uniform01(), hi = rng.uniform01();
    if (lo > hi) std::swap(lo, hi);
    auto a = apply_threshold(s, lo), b = apply_threshold(s, hi);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK((!b[i] || a[i]));
  }
}

TEST_CASE("filter keeps the conjunction") {
  Toy toy;
  auto d = dialogue_of({"x", "x", "y", "y"});
  auto f = filter_dialogue(d, {true, false, true, false}, lexicon_of({{"x"}}), toy.table, toy.vocab, 0.5);
  CHECK(f.keep == std::vector<bool>{true, false, false, false});
  CHECK(f.scores.size() == 4);
  CHECK(f.scores[2] == 0.0);
  auto none = filter_dialogue(d, {false, false, false, false}, lexicon_of({{"x"}}), toy.table, toy.vocab, 0.0);
  CHECK(none.keep == std::vector<bool>(4, false));
  CHECK_THROWS_AS(filter_dialogue(d, {true}, lexicon_of({{"x"}}), toy.table, toy.vocab, 0.5), ShapeError);
}

TEST_CASE("static embeddings") {
  Toy toy;
  CHECK(embed_static(toy.table, {6, 5}) == Tensor::matrix({{0.5, 0.5}}));
  CHECK(embed_static(toy.table, {5, 5}) == embed_static(toy.table, {5}));
  auto enc = encode_dialogue(dialogue_of({"qq rr"}), toy.vocab);
  CHECK(enc[0] == std::vector<std::size_t>{1, 1});
  CHECK(embed_static(toy.table, enc[0]) == Tensor::matrix({{0.3, 0.3}}));
}

TEST_CASE("random static table is keyed by token text") {
  Vocabulary a({"alpha", "beta"}), b({"beta", "gamma", "alpha"});
  StaticTable ta = StaticTable::random(a, 4, 3), tb = StaticTable::random(b, 4, 3);
  CHECK(ta.table().row_copy(5) == tb.table().row_copy(7));
  CHECK(ta.table().row_copy(0) == Tensor::zeros({1, 4}));
}

TEST_CASE("lexicon parsing and validation") {
  Lexicon lex = default_lexicon();
  CHECK(lex.entries.size() == 9);
  CHECK(lex.entries[1].phrases[0] == std::vector<std::string>{"feeling", "down", "and", "depressed"});
  CHECK(default_lexicon_phrases().size() == 18);
  std::istringstream bad_item(R"({"item":10,"phrases":["a"]})");
  CHECK_THROWS_AS(read_lexicon(bad_item), DataError);
  std::istringstream empty_phrase(R"({"item":1,"phrases":["  "]})");
  CHECK_THROWS_AS(read_lexicon(empty_phrase), DataError);
  std::istringstream no_phrases(R"({"item":1,"phrases":[]})");
  CHECK_THROWS_AS(read_lexicon(no_phrases), DataError);
}

TEST_CASE("contextual encoder") {
  ContextEncoder enc = ContextEncoder::init(num::Initializer(3), "enc", 8, 4);
  Tape tape;
  Var one = enc.encode(tape, {6});
  Tensor row = enc.embedding.row_copy(6);
  Tensor expected({1, 4}, std::vector<double>(4));
  for (std::size_t j = 0; j < 4; ++j) {
    double v = 0.0;
    for (std::size_t k = 0; k < 4; ++k) v += row[k] * enc.value.at(k, j);
    expected[j] = row[j] + v;
  }
  CHECK(num::max_abs_diff(one.value(), expected) < 1e-15);
  CHECK(enc.encode(tape, {5, 7, 6}).value() == enc.encode(tape, {5, 7, 6}).value());
  EncodedDialogue d{{5, 6}, {5, 6}};
  Var all = enc.encode_all(tape, d);
  CHECK(all.value().row_copy(0) == all.value().row_copy(1));
  CHECK(embed_contextual(tape, enc, d, 1).value() == all.value().row_copy(1));
}

TEST_CASE("contextual encoder gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ContextEncoder enc = ContextEncoder::init(num::Initializer(seed), "enc", 7, 3);
    num::Rng rng(seed + 100);
    Tensor w = random_tensor(rng, 1, 3);
    num::NamedParams params;
    enc.collect("enc.", params);
    auto loss = [&](Tape& t) { return num::weighted_sum(enc.encode(t, {5, 6, 5, 2}), w); };
    auto res = num::check_gradients(loss, params);
    CHECK_MESSAGE(res.max_relative_error < 1e-5, "seed ", seed, " worst ", res.worst_param);
  }
}

TEST_CASE("scaffold single row and shape") {
  ScaffoldParams p = ScaffoldParams::init(num::Initializer(2), "s", 5, 3);
  Tape tape;
  num::Rng rng(5);
  Tensor c = random_tensor(rng, 1, 3), s = random_tensor(rng, 1, 2);
  Var rk = scaffold(p, tape.constant(c), tape.constant(s), {true});
  REQUIRE(rk.rows() == 1);
  REQUIRE(rk.cols() == 6);
  Var h = num::bilstm(num::concat_cols({tape.constant(c), tape.constant(s)}), p.lstm);
  CHECK(rk.value() == h.value());
  CHECK_THROWS_AS(scaffold(p, tape.constant(c), tape.constant(random_tensor(rng, 1, 3)), {true}), ShapeError);
}

TEST_CASE("scaffold ignores the text of filtered-out utterances") {
  Vocabulary vocab({"a", "b", "c", "d"});
  ContextEncoder enc = ContextEncoder::init(num::Initializer(4), "enc", vocab.size(), 4);
  StaticTable table = StaticTable::random(vocab, 3, 1);
  ScaffoldParams p = ScaffoldParams::init(num::Initializer(4), "s", 7, 3);
  auto run = [&](const corpus::Dialogue& d, const std::vector<bool>& keep) {
    Tape tape;
    EncodedDialogue e = encode_dialogue(d, vocab);
    return scaffold(p, enc.encode_all(tape, e), tape.constant(embed_static_all(table, e)), keep).value();
  };
  std::vector<bool> keep{true, false, true};
  Tensor base = run(dialogue_of({"a b", "c", "d a"}), keep);
  CHECK(run(dialogue_of({"a b", "d d b a", "d a"}), keep) == base);
  CHECK_FALSE(run(dialogue_of({"a b", "d d b a", "d a"}), {true, true, true}) == base);
}

TEST_CASE("scaffold gradients match finite differences") {
  Vocabulary vocab({"a", "b", "c"});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ContextEncoder enc = ContextEncoder::init(num::Initializer(seed), "enc", vocab.size(), 3);
    StaticTable table = StaticTable::random(vocab, 2, seed);
    ScaffoldParams p = ScaffoldParams::init(num::Initializer(seed), "s", 5, 2);
    EncodedDialogue e = encode_dialogue(dialogue_of({"a b", "c", "b b a"}), vocab);
    num::Rng rng(seed);
    Tensor w = random_tensor(rng, 3, 4);
    num::NamedParams params;
    enc.collect("enc.", params);
    p.collect("s.", params);
    auto loss = [&](Tape& t) {
      return num::weighted_sum(scaffold(p, enc.encode_all(t, e), t.constant(embed_static_all(table, e)),
                                        {true, false, true}),
                               w);
    };
    auto res = num::check_gradients(loss, params);
    CHECK_MESSAGE(res.max_relative_error < 1e-5, "seed ", seed, " worst ", res.worst_param);
  }
}
