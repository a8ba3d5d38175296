#include <fstream>
#include <sstream>

#include "doctest.h"
#include "piece/app/cli.hpp"
#include "piece/error.hpp"
#include "piece/planner/pipeline.hpp"
#include "test_util.hpp"

using namespace piece;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = app::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::filesystem::path small_config() {
  const auto path = piece::testing::temp_path("cfg");
  std::ofstream(path) << "# small model\n"
                         "embed_dim = 4\nstatic_dim = 4\nscaffold_hidden = 3\nstalk_dim = 2\nsheaf_out = 3\n"
                         "width = 8\nblocks = 1\nff_width = 8\nd_k = 4\nd_v = 4\nmax_len = 24\n"
                         "clf.embed_dim = 4\nclf.hidden_dim = 4\nclf.require_all_classes = false\n"
                         "epochs = 2\nbatch = 4\nlr = 0.05\n";
  return path;
}

// One corpus and one trained checkpoint shared by the cases below.
struct Fixture {
  std::filesystem::path corpus = piece::testing::temp_path("corpus");
  std::filesystem::path config = small_config();
  std::filesystem::path ckpt = piece::testing::temp_path("ckpt");
  Fixture() {
    REQUIRE(call({"gen-synthetic", "--dialogues", "10", "--seed", "4", "--out", corpus.string()}).code == 0);
    REQUIRE(call({"train", "--corpus", corpus.string(), "--config", config.string(), "--out", ckpt.string()}).code ==
            0);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("gen-synthetic is byte-deterministic and rejects an empty request") {
  const auto a = piece::testing::temp_path("syn"), b = piece::testing::temp_path("syn");
  const Result ra = call({"gen-synthetic", "--dialogues", "5", "--seed", "11", "--out", a.string()});
  REQUIRE(ra.code == 0);
  REQUIRE(call({"gen-synthetic", "--dialogues", "5", "--seed", "11", "--out", b.string()}).code == 0);
  CHECK(bytes(a) == bytes(b));
  CHECK(ra.out.find("dialogues") != std::string::npos);

  const auto c = piece::testing::temp_path("syn");
  REQUIRE(call({"gen-synthetic", "--dialogues", "5", "--seed", "12", "--out", c.string()}).code == 0);
  CHECK(bytes(a) != bytes(c));

  const auto none = piece::testing::temp_path("syn");
  CHECK(call({"gen-synthetic", "--dialogues", "0", "--out", none.string()}).code == app::kExitUsage);
  CHECK_FALSE(std::filesystem::exists(none));
}

TEST_CASE("argument errors map to the usage exit code") {
  CHECK(call({}).code == app::kExitUsage);
  CHECK(call({"frobnicate"}).code == app::kExitUsage);
  CHECK(call({"train"}).code == app::kExitUsage);
  CHECK(call({"--help"}).code == app::kExitOk);
  const auto& f = fixture();
  const auto out = piece::testing::temp_path("ckpt");
  CHECK(call({"train", "--corpus", f.corpus.string(), "--set", "nope=1", "--out", out.string()}).code ==
        app::kExitUsage);
  CHECK(call({"train", "--corpus", f.corpus.string(), "--phq-threshold", "2", "--out", out.string()}).code ==
        app::kExitUsage);
  CHECK(call({"train", "--corpus", "/nonexistent/corpus.jsonl", "--out", out.string()}).code == app::kExitData);
}

TEST_CASE("config files parse key=value lines") {
  const auto path = piece::testing::temp_path("cfg");
  std::ofstream(path) << "# comment\n\nwidth = 12\nlr=0.25  # trailing\n";
  const auto entries = app::read_config_file(path);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0] == std::pair<std::string, std::string>{"width", "12"});
  CHECK(entries[1] == std::pair<std::string, std::string>{"lr", "0.25"});
  std::ofstream(path) << "width 12\n";
  CHECK_THROWS_AS(app::read_config_file(path), UsageError);
  CHECK_THROWS_AS(app::read_config_file("/nonexistent/cfg"), DataError);
}

TEST_CASE("train writes one loss line per epoch") {
  const auto& f = fixture();
  const std::string log = bytes(f.ckpt.string() + ".loss");
  CHECK(count_lines(log) == 2);
  CHECK(log.rfind("1\t", 0) == 0);
  CHECK(std::filesystem::exists(planner::manifest_path(f.ckpt)));
}

TEST_CASE("train with zero epochs stores the initialization") {
  const auto& f = fixture();
  const auto out = piece::testing::temp_path("ckpt");
  REQUIRE(call({"train", "--corpus", f.corpus.string(), "--config", f.config.string(), "--epochs", "0", "--set",
                "use_gold_components=true", "--out", out.string()})
              .code == 0);
  planner::PieceModel stored = planner::load_model(out);
  planner::PieceModel fresh = planner::PieceModel::init(stored.config, stored.vocab, stored.lexicon);
  num::NamedParams a, b;
  stored.collect_all(a);
  fresh.collect_all(b);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
  CHECK(bytes(out.string() + ".loss").empty());
}

TEST_CASE("summarize and evaluate") {
  const auto& f = fixture();
  const auto greedy = piece::testing::temp_path("sum"), beam = piece::testing::temp_path("sum");
  REQUIRE(call({"summarize", "--checkpoint", f.ckpt.string(), "--corpus", f.corpus.string(), "--out",
                greedy.string()})
              .code == 0);
  REQUIRE(call({"summarize", "--checkpoint", f.ckpt.string(), "--corpus", f.corpus.string(), "--beam", "1", "--out",
                beam.string()})
              .code == 0);
  const std::string text = bytes(greedy);
  CHECK(text == bytes(beam));
  CHECK(count_lines(text) == 10);
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    CHECK(line.find("\"id\"") != std::string::npos);
    CHECK(line.find("\"summary\":\"\"") == std::string::npos);
  }

  const Result report = call({"evaluate", "--checkpoint", f.ckpt.string(), "--corpus", f.corpus.string()});
  REQUIRE(report.code == 0);
  CHECK(report.out.find("split\ttest\n") != std::string::npos);
  CHECK(report.out.find("metric\tmean\tstd\n") != std::string::npos);
  CHECK(report.out.find("rouge1_f1\t") != std::string::npos);
  CHECK(report.out.find("mhic\t") != std::string::npos);
  const Result again = call({"evaluate", "--checkpoint", f.ckpt.string(), "--corpus", f.corpus.string()});
  CHECK(again.out == report.out);
  const Result struct_off = call({"evaluate", "--checkpoint", f.ckpt.string(), "--corpus", f.corpus.string(),
                                  "--ablate", "no-struct"});
  CHECK(struct_off.code == 0);
  CHECK(struct_off.out.find("ablation\tno-struct\n") != std::string::npos);

  CHECK(call({"evaluate", "--checkpoint", f.ckpt.string(), "--corpus", f.corpus.string(), "--ablate", "bogus"}).code ==
        app::kExitUsage);
  CHECK(call({"evaluate", "--checkpoint", f.ckpt.string(), "--corpus", f.corpus.string(), "--split", "dev"}).code ==
        app::kExitUsage);
  CHECK(call({"summarize", "--checkpoint", f.ckpt.string(), "--corpus", f.corpus.string(), "--max-len", "999",
              "--out", greedy.string()})
            .code == app::kExitUsage);
}

TEST_CASE("a corpus with a different vocabulary is rejected") {
  const auto& f = fixture();
  const auto other = piece::testing::temp_path("corpus");
  REQUIRE(call({"gen-synthetic", "--dialogues", "10", "--seed", "5", "--out", other.string()}).code == 0);
  const auto out = piece::testing::temp_path("sum");
  CHECK(call({"summarize", "--checkpoint", f.ckpt.string(), "--corpus", other.string(), "--out", out.string()}).code ==
        app::kExitData);
  CHECK(call({"summarize", "--checkpoint", "/nonexistent/ckpt", "--corpus", f.corpus.string(), "--out",
              out.string()})
            .code == app::kExitData);
}

TEST_CASE("inspect-plan reports diagnostics for a known dialogue") {
  const auto& f = fixture();
  const std::string first = bytes(f.corpus).substr(0, bytes(f.corpus).find('\n'));
  const auto at = first.find("\"id\":\"") + 6;
  const std::string id = first.substr(at, first.find('"', at) - at);
  const Result r = call({"inspect-plan", "--checkpoint", f.ckpt.string(), "--corpus", f.corpus.string(), "--dialogue",
                         id});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("laplacian") != std::string::npos);
  CHECK(r.out.find("summary") != std::string::npos);
  CHECK(call({"inspect-plan", "--checkpoint", f.ckpt.string(), "--corpus", f.corpus.string(), "--dialogue",
              "missing"})
            .code == app::kExitData);
}
