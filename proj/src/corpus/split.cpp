#include "piece/corpus/split.hpp"

#include <cmath>
#include <numeric>

#include "piece/error.hpp"
#include "piece/numerics/rng.hpp"

namespace piece::corpus {

namespace {

// Guards floor() against products such as 10 * 0.7 = 6.9999999999999991.
constexpr double kFloorSlack = 1e-9;

std::size_t floor_share(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + kFloorSlack));
}

}  // namespace

SplitSizes split_sizes(std::size_t n, const SplitRatios& r) {
  for (double x : {r.train, r.val, r.test}) {
    if (!(x >= 0.0 && x <= 1.0)) throw UsageError("split ratios must lie in [0, 1]");
  }
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");
  if (n < 3) throw DataError("splitting needs at least 3 dialogues");
  SplitSizes s;
  s.val = floor_share(n, r.val);
  s.test = floor_share(n, r.test);
  s.train = n - s.val - s.test;
  return s;
}

Corpus split_corpus(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed) {
  const SplitSizes sizes = split_sizes(corpus.dialogues.size(), ratios);
  std::vector<std::size_t> order(corpus.dialogues.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  num::Rng rng(num::Rng::derive(seed, "corpus.split"));
  rng.shuffle(order);

  Corpus out = corpus;
  out.split.clear();
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Split s = k < sizes.train ? Split::Train : (k < sizes.train + sizes.val ? Split::Val : Split::Test);
    out.split[corpus.dialogues[order[k]].id] = s;
  }
  return out;
}

}  // namespace piece::corpus
