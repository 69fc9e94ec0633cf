#include "artifact/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <tuple>

namespace artifact {
namespace {

void check_lengths(std::span<const LabelSet> preds, std::span<const LabelSet> golds) {
  if (preds.size() != golds.size()) {
    throw DomainError("prediction/gold length mismatch (" + std::to_string(preds.size()) + " vs " +
                      std::to_string(golds.size()) + ")");
  }
  if (preds.empty()) throw DomainError("metrics need at least one example");
}

// Label ids with NO_ARTIFACTS mapped to the sentinel singleton.
std::vector<int> keys(const LabelSet& labels) {
  if (labels.is_no_artifacts()) return {kNoArtifactsCategory};
  return labels.ids();
}

int intersection_size(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return static_cast<int>(out.size());
}

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

bool has_label(const LabelSet& labels, int category) {
  return category == kNoArtifactsCategory ? labels.is_no_artifacts() : labels.contains(category);
}

}  // namespace

double exact_match_accuracy(std::span<const LabelSet> preds, std::span<const LabelSet> golds) {
  check_lengths(preds, golds);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

PrfScores example_based_prf(std::span<const LabelSet> preds, std::span<const LabelSet> golds) {
  check_lengths(preds, golds);
  PrfScores sum;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = keys(preds[i]);
    const auto g = keys(golds[i]);
    const double common = intersection_size(p, g);
    const double precision = p.empty() ? (g.empty() ? 1.0 : 0.0) : common / static_cast<double>(p.size());
    const double recall = g.empty() ? (p.empty() ? 1.0 : 0.0) : common / static_cast<double>(g.size());
    sum.precision += precision;
    sum.recall += recall;
    sum.f1 += harmonic(precision, recall);
  }
  const double n = static_cast<double>(preds.size());
  return {sum.precision / n, sum.recall / n, sum.f1 / n};
}

PrfScores micro_prf(std::span<const LabelSet> preds, std::span<const LabelSet> golds) {
  check_lengths(preds, golds);
  double tp = 0, n_pred = 0, n_gold = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = keys(preds[i]);
    const auto g = keys(golds[i]);
    tp += intersection_size(p, g);
    n_pred += static_cast<double>(p.size());
    n_gold += static_cast<double>(g.size());
  }
  const double precision = n_pred > 0 ? tp / n_pred : 0.0;
  const double recall = n_gold > 0 ? tp / n_gold : 0.0;
  return {precision, recall, harmonic(precision, recall)};
}

BinaryScores per_category_metrics(std::span<const LabelSet> preds, std::span<const LabelSet> golds, int category,
                                  int n_categories) {
  check_lengths(preds, golds);
  if (category != kNoArtifactsCategory && (category < 0 || category >= n_categories)) {
    throw DomainError("invalid category " + std::to_string(category));
  }
  BinaryScores s;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = has_label(preds[i], category);
    const bool g = has_label(golds[i], category);
    if (p && g) ++s.tp;
    else if (p) ++s.fp;
    else if (g) ++s.fn;
    else ++s.tn;
  }
  s.accuracy = static_cast<double>(s.tp + s.tn) / static_cast<double>(preds.size());
  s.precision_undefined = s.tp + s.fp == 0;
  s.precision = s.precision_undefined ? 0.0 : static_cast<double>(s.tp) / (s.tp + s.fp);
  s.recall = s.tp + s.fn == 0 ? 0.0 : static_cast<double>(s.tp) / (s.tp + s.fn);
  s.f1 = harmonic(s.precision, s.recall);
  return s;
}

ClassificationReport classification_report(std::span<const LabelSet> preds, std::span<const LabelSet> golds,
                                           const Taxonomy& taxonomy, Averaging averaging) {
  check_lengths(preds, golds);
  ClassificationReport report;
  report.averaging = averaging;
  report.n_examples = static_cast<int>(preds.size());
  report.overall.exact_match_accuracy = exact_match_accuracy(preds, golds);
  double jaccard = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = keys(preds[i]);
    const auto g = keys(golds[i]);
    const int common = intersection_size(p, g);
    jaccard += static_cast<double>(common) / static_cast<double>(p.size() + g.size() - common);
  }
  report.overall.jaccard_accuracy = jaccard / static_cast<double>(preds.size());
  const PrfScores prf = averaging == Averaging::Micro ? micro_prf(preds, golds) : example_based_prf(preds, golds);
  report.overall.precision = prf.precision;
  report.overall.recall = prf.recall;
  report.overall.f1 = prf.f1;
  for (const auto& category : taxonomy.categories()) {
    report.per_category[category.id] = per_category_metrics(preds, golds, category.id, taxonomy.size());
  }
  report.per_category[kNoArtifactsCategory] =
      per_category_metrics(preds, golds, kNoArtifactsCategory, taxonomy.size());
  return report;
}

std::string report_csv(const ClassificationReport& report, const Taxonomy& taxonomy) {
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v * 100.0);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "Categories,Accuracy,Precision,Recall,F1 Score,Jaccard Accuracy,Precision Undefined\n";
  const auto& o = report.overall;
  out << "All," << num(o.exact_match_accuracy) << "," << num(o.precision) << "," << num(o.recall) << ","
      << num(o.f1) << "," << num(o.jaccard_accuracy) << ",0\n";
  const auto row = [&](const std::string& name, const BinaryScores& s) {
    std::string label = name.find(',') == std::string::npos ? name : "\"" + name + "\"";
    out << label << "," << num(s.accuracy) << "," << num(s.precision) << "," << num(s.recall) << ","
        << num(s.f1) << "," << num(s.accuracy) << "," << (s.precision_undefined ? 1 : 0) << "\n";
  };
  for (const auto& category : taxonomy.categories()) row(category.name, report.per_category.at(category.id));
  row("No artifacts", report.per_category.at(kNoArtifactsCategory));
  return out.str();
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (a.degenerate() || b.degenerate()) throw DomainError("iou of a degenerate box");
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

DetectionScore detection_score(std::span<const Detection> preds, std::span<const Detection> gts) {
  DetectionScore score;
  score.matches.resize(gts.size());
  for (std::size_t g = 0; g < gts.size(); ++g) {
    score.matches[g] = {static_cast<int>(g), -1, gts[g].category_id, 0.0};
  }
  if (gts.empty()) {
    score.mean_iou = preds.empty() ? 1.0 : 0.0;
    return score;
  }

  struct Candidate {
    double iou;
    std::size_t gt, pred;
  };
  std::vector<Candidate> candidates;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    for (std::size_t p = 0; p < preds.size(); ++p) {
      if (preds[p].category_id != gts[g].category_id) continue;
      const double value = iou(gts[g].box, preds[p].box);
      if (value > 0) candidates.push_back({value, g, p});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(b.iou, a.gt, a.pred) < std::tie(a.iou, b.gt, b.pred);
  });
  std::vector<bool> pred_used(preds.size(), false);
  for (const auto& c : candidates) {
    auto& match = score.matches[c.gt];
    if (match.pred_index >= 0 || pred_used[c.pred]) continue;
    match.pred_index = static_cast<int>(c.pred);
    match.iou = c.iou;
    pred_used[c.pred] = true;
  }
  double total = 0;
  for (const auto& m : score.matches) total += m.iou;
  score.mean_iou = total / static_cast<double>(gts.size());
  return score;
}

}  // namespace artifact
