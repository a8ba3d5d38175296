#include "piece/evaluation/metrics.hpp"

#include <algorithm>
#include <map>

#include "piece/corpus/vocab.hpp"
#include "piece/error.hpp"

namespace piece::evaluation {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

std::size_t ngram_total(const std::vector<std::string>& tokens, std::size_t n) {
  return tokens.size() >= n ? tokens.size() - n + 1 : 0;
}

}  // namespace

RougeScore RougeScore::from_counts(std::size_t matched, std::size_t candidate_total, std::size_t reference_total) {
  RougeScore s;
  if (candidate_total == 0 || reference_total == 0) return s;
  s.precision = static_cast<double>(matched) / static_cast<double>(candidate_total);
  s.recall = static_cast<double>(matched) / static_cast<double>(reference_total);
  if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
  if (n == 0) throw UsageError("rouge_n: n must be at least 1");
  const auto cand = corpus::tokenize(candidate), ref = corpus::tokenize(reference);
  const auto cand_counts = ngram_counts(cand, n), ref_counts = ngram_counts(ref, n);
  std::size_t matched = 0;
  for (const auto& [gram, count] : cand_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) matched += std::min(count, it->second);
  }
  return RougeScore::from_counts(matched, ngram_total(cand, n), ngram_total(ref, n));
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = corpus::tokenize(candidate), ref = corpus::tokenize(reference);
  return RougeScore::from_counts(lcs_length(cand, ref), cand.size(), ref.size());
}

std::string relevant_reference(const corpus::Dialogue& dialogue, const std::vector<corpus::Component>& labels) {
  if (labels.size() != dialogue.size()) {
    throw UsageError("dialogue " + dialogue.id + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(dialogue.size()) + " utterances");
  }
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!corpus::is_relevant(labels[i])) continue;
    if (!out.empty()) out.push_back(' ');
    out += dialogue.utterances[i].text;
  }
  return out;
}

double mhic(const corpus::Dialogue& dialogue, const std::vector<corpus::Component>& labels, std::string_view summary) {
  return rouge_n(summary, relevant_reference(dialogue, labels), 1).recall;
}

}  // namespace piece::evaluation
