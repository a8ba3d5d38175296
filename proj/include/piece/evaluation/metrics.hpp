#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "piece/corpus/types.hpp"

namespace piece::evaluation {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  // Zero whenever a side has no units; f1 = 2PR / (P + R), or 0 when P + R = 0.
  static RougeScore from_counts(std::size_t matched, std::size_t candidate_total, std::size_t reference_total);
  bool operator==(const RougeScore&) const = default;
};

// Clipped n-gram overlap over tokenize() output. Throws UsageError when n = 0.
RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n);
// Token-level longest common subsequence.
RougeScore rouge_l(std::string_view candidate, std::string_view reference);
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Space-joined texts of the utterances labeled SH, PD or RT, in dialogue order.
std::string relevant_reference(const corpus::Dialogue& dialogue, const std::vector<corpus::Component>& labels);
// ROUGE-1 recall of the relevant reference by the summary; 0 without relevant
// utterances. Throws UsageError when labels and utterances differ in count.
double mhic(const corpus::Dialogue& dialogue, const std::vector<corpus::Component>& labels, std::string_view summary);

}  // namespace piece::evaluation
