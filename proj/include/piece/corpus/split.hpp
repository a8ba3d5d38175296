#pragma once

#include <array>
#include <cstdint>

#include "piece/corpus/types.hpp"

namespace piece::corpus {

struct SplitRatios {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

// val = floor(N * r_val), test = floor(N * r_test), train takes the rest.
SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios);

// Copy of `corpus` whose split map assigns every dialogue. Dialogues are
// shuffled with `seed`; the first block goes to Train, then Val, then Test.
Corpus split_corpus(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace piece::corpus
