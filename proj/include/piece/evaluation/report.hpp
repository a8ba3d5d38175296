#pragma once

#include <functional>
#include <string>
#include <vector>

#include "piece/corpus/types.hpp"

namespace piece::evaluation {

struct Annotation {
  std::string summary;
  std::vector<corpus::Component> labels;  // predicted components used for MHIC
};
using Annotator = std::function<Annotation(const corpus::Dialogue&)>;

struct DialogueScores {
  std::string id;
  double rouge1 = 0.0;  // F1
  double rouge2 = 0.0;  // F1
  double rouge_l = 0.0; // F1
  double mhic = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct ReportHeader {
  std::string config_hash;
  std::string checkpoint;
  std::string split;
  std::string ablation = "none";
};

struct EvaluationReport {
  ReportHeader header;
  std::vector<DialogueScores> rows;
  MeanStd rouge1, rouge2, rouge_l, mhic;

  // Tab-separated text: header lines, one row per dialogue, aggregate block.
  std::string to_text() const;
};

MeanStd mean_std(const std::vector<double>& values);

// Scores `annotate` against each gold summary, in input order. Throws DataError
// on an empty list or a dialogue without a gold summary.
EvaluationReport evaluate_dialogues(const std::vector<const corpus::Dialogue*>& dialogues, const Annotator& annotate,
                                    ReportHeader header);

}  // namespace piece::evaluation
