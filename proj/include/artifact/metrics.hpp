#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "artifact/instructions.hpp"
#include "artifact/taxonomy.hpp"

namespace artifact {

/// Pseudo-category id for the "No artifacts" row of a report.
inline constexpr int kNoArtifactsCategory = -1;

struct PrfScores {
  double precision = 0, recall = 0, f1 = 0;
};

struct BinaryScores {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  /// No positives were predicted, so precision is reported as 0.
  bool precision_undefined = false;
  int tp = 0, fp = 0, fn = 0, tn = 0;
};

enum class Averaging { ExampleBased, Micro };

struct ClassificationReport {
  struct Overall {
    double exact_match_accuracy = 0;
    double jaccard_accuracy = 0;  // mean |P∩G| / |P∪G|
    double precision = 0, recall = 0, f1 = 0;
  } overall;
  Averaging averaging = Averaging::ExampleBased;
  std::map<int, BinaryScores> per_category;  // taxonomy ids plus kNoArtifactsCategory
  int n_examples = 0;
};

double exact_match_accuracy(std::span<const LabelSet> preds, std::span<const LabelSet> golds);

/// Mean over examples of per-example precision/recall/F1. NO_ARTIFACTS counts
/// as a singleton label. Empty/empty gives P = R = 1.
PrfScores example_based_prf(std::span<const LabelSet> preds, std::span<const LabelSet> golds);

/// Pooled TP/FP/FN over all labels (NO_ARTIFACTS included as a label).
PrfScores micro_prf(std::span<const LabelSet> preds, std::span<const LabelSet> golds);

/// Binary metrics for membership of `category` (a taxonomy id or
/// kNoArtifactsCategory). `n_categories` bounds the valid ids.
BinaryScores per_category_metrics(std::span<const LabelSet> preds, std::span<const LabelSet> golds, int category,
                                  int n_categories);

ClassificationReport classification_report(std::span<const LabelSet> preds, std::span<const LabelSet> golds,
                                           const Taxonomy& taxonomy, Averaging averaging = Averaging::ExampleBased);

/// Rows "All", one per category, then "No artifacts"; columns follow the
/// Accuracy, Precision, Recall, F1 Score order.
std::string report_csv(const ClassificationReport& report, const Taxonomy& taxonomy);

double iou(const BoundingBox& a, const BoundingBox& b);

struct Detection {
  int category_id = 0;
  BoundingBox box;
};

struct DetectionMatch {
  int gt_index = 0;
  int pred_index = -1;  // -1 when the ground truth stayed unmatched
  int category_id = 0;
  double iou = 0;
};

struct DetectionScore {
  double mean_iou = 0;
  std::vector<DetectionMatch> matches;  // one per ground-truth box, in gt order
};

/// Greedy one-to-one matching of same-category boxes by descending IOU; the
/// score is the mean matched IOU over ground-truth boxes (0 for unmatched).
DetectionScore detection_score(std::span<const Detection> preds, std::span<const Detection> gts);

}  // namespace artifact
