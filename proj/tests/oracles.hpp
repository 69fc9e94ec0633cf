#pragma once

// Brute-force reference implementations. They share no code with the library
// beyond its plain data types.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "artifact/metrics.hpp"
#include "artifact/textsim.hpp"

namespace oracle {

using artifact::BoundingBox;
using artifact::Detection;
using artifact::LabelSet;

inline std::set<int> as_set(const LabelSet& l) {
  if (l.is_no_artifacts()) return {-1};
  return {l.ids().begin(), l.ids().end()};
}

inline double exact_match(const std::vector<LabelSet>& p, const std::vector<LabelSet>& g) {
  int hits = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto a = as_set(p[i]), b = as_set(g[i]);
    hits += a == b ? 1 : 0;
  }
  return double(hits) / double(p.size());
}

struct Prf {
  double p, r, f;
};

inline Prf example_prf(const std::vector<LabelSet>& p, const std::vector<LabelSet>& g) {
  double sp = 0, sr = 0, sf = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto a = as_set(p[i]), b = as_set(g[i]);
    int common = 0;
    for (int x : a) common += b.count(x) ? 1 : 0;
    const double prec = double(common) / double(a.size());
    const double rec = double(common) / double(b.size());
    sp += prec;
    sr += rec;
    sf += common == 0 ? 0.0 : 2 * prec * rec / (prec + rec);
  }
  const double n = double(p.size());
  return {sp / n, sr / n, sf / n};
}

struct Confusion {
  int tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy, precision, recall, f1;
};

inline Confusion per_category(const std::vector<LabelSet>& p, const std::vector<LabelSet>& g, int category) {
  Confusion c;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = as_set(p[i]).count(category) > 0;
    const bool b = as_set(g[i]).count(category) > 0;
    c.tp += a && b;
    c.fp += a && !b;
    c.fn += !a && b;
    c.tn += !a && !b;
  }
  c.accuracy = double(c.tp + c.tn) / double(p.size());
  c.precision = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
  c.recall = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
  c.f1 = c.precision + c.recall > 0 ? 2 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
  return c;
}

// Inclusion-exclusion on the clipped intersection rectangle.
inline double box_iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  const double inter = ix2 > ix1 && iy2 > iy1 ? (ix2 - ix1) * (iy2 - iy1) : 0.0;
  const double ua = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return inter / ua;
}

// Repeatedly takes the best remaining same-category pair; ties go to the
// lowest ground-truth index, then the lowest prediction index.
inline double greedy_detection(const std::vector<Detection>& pred, const std::vector<Detection>& gt) {
  if (gt.empty()) return pred.empty() ? 1.0 : 0.0;
  std::vector<bool> gt_done(gt.size()), pred_done(pred.size());
  double total = 0;
  while (true) {
    double best = 0;
    int bg = -1, bp = -1;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt_done[g]) continue;
      for (std::size_t p = 0; p < pred.size(); ++p) {
        if (pred_done[p] || pred[p].category_id != gt[g].category_id) continue;
        const double v = box_iou(gt[g].box, pred[p].box);
        if (v > best) {
          best = v;
          bg = int(g);
          bp = int(p);
        }
      }
    }
    if (bg < 0) break;
    gt_done[bg] = pred_done[bp] = true;
    total += best;
  }
  return total / double(gt.size());
}

// Best achievable mean IOU over every one-to-one assignment.
inline double best_assignment(const std::vector<Detection>& pred, const std::vector<Detection>& gt) {
  std::vector<int> slots(std::max(pred.size(), gt.size()));
  std::iota(slots.begin(), slots.end(), 0);
  double best = 0;
  do {
    double total = 0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const int p = slots[g];
      if (p < int(pred.size()) && pred[p].category_id == gt[g].category_id) total += box_iou(gt[g].box, pred[p].box);
    }
    best = std::max(best, total);
  } while (std::next_permutation(slots.begin(), slots.end()));
  return best / double(gt.size());
}

struct Score {
  double p, r, f;
};

// Greedy matching with explicit loops over token pairs.
inline Score greedy_bertscore(const std::string& cand, const std::string& ref, const artifact::EmbeddingModel& model) {
  const auto ct = artifact::tokenize(cand), rt = artifact::tokenize(ref);
  std::vector<Eigen::VectorXd> cv, rv;
  for (const auto& t : ct) cv.push_back(model.token_vector(t));
  for (const auto& t : rt) rv.push_back(model.token_vector(t));
  const auto cosine = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double s = 0;
    for (Eigen::Index k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
  };
  double p = 0, r = 0;
  for (const auto& a : cv) {
    double m = -2;
    for (const auto& b : rv) m = std::max(m, cosine(a, b));
    p += m;
  }
  for (const auto& b : rv) {
    double m = -2;
    for (const auto& a : cv) m = std::max(m, cosine(a, b));
    r += m;
  }
  p /= double(cv.size());
  r /= double(rv.size());
  return {p, r, p > 0 && r > 0 ? 2 * p * r / (p + r) : 0.0};
}

}  // namespace oracle
