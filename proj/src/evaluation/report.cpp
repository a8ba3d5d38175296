#include "piece/evaluation/report.hpp"

#include <cmath>
#include <cstdio>

#include "piece/error.hpp"
#include "piece/evaluation/metrics.hpp"

namespace piece::evaluation {

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

EvaluationReport evaluate_dialogues(const std::vector<const corpus::Dialogue*>& dialogues, const Annotator& annotate,
                                    ReportHeader header) {
  if (dialogues.empty()) throw DataError("evaluation: empty split");
  EvaluationReport report;
  report.header = std::move(header);
  std::vector<double> r1, r2, rl, mh;
  for (const corpus::Dialogue* d : dialogues) {
    if (!d->gold_summary) throw DataError("evaluation: dialogue " + d->id + " has no gold summary");
    const Annotation a = annotate(*d);
    DialogueScores row{d->id, rouge_n(a.summary, *d->gold_summary, 1).f1, rouge_n(a.summary, *d->gold_summary, 2).f1,
                       rouge_l(a.summary, *d->gold_summary).f1, mhic(*d, a.labels, a.summary)};
    r1.push_back(row.rouge1);
    r2.push_back(row.rouge2);
    rl.push_back(row.rouge_l);
    mh.push_back(row.mhic);
    report.rows.push_back(std::move(row));
  }
  report.rouge1 = mean_std(r1);
  report.rouge2 = mean_std(r2);
  report.rouge_l = mean_std(rl);
  report.mhic = mean_std(mh);
  return report;
}

std::string EvaluationReport::to_text() const {
  std::string out;
  out += "config_hash\t" + header.config_hash + "\n";
  out += "checkpoint\t" + header.checkpoint + "\n";
  out += "split\t" + header.split + "\n";
  out += "ablation\t" + header.ablation + "\n";
  out += "dialogues\t" + std::to_string(rows.size()) + "\n\n";
  out += "id\trouge1_f1\trouge2_f1\trougeL_f1\tmhic\n";
  for (const DialogueScores& r : rows) {
    out += r.id + "\t" + fixed(r.rouge1) + "\t" + fixed(r.rouge2) + "\t" + fixed(r.rouge_l) + "\t" + fixed(r.mhic) +
           "\n";
  }
  out += "\nmetric\tmean\tstd\n";
  const std::pair<const char*, const MeanStd*> agg[] = {
      {"rouge1_f1", &rouge1}, {"rouge2_f1", &rouge2}, {"rougeL_f1", &rouge_l}, {"mhic", &mhic}};
  for (const auto& [name, m] : agg) out += std::string(name) + "\t" + fixed(m->mean) + "\t" + fixed(m->std) + "\n";
  return out;
}

}  // namespace piece::evaluation
