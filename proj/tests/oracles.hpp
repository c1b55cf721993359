#pragma once

#include <algorithm>
#include <vector>

#include "awada/attention.hpp"
#include "awada/geometry.hpp"
#include "awada/rng.hpp"

namespace oracles {

using namespace awada;

inline std::vector<Proposal> random_proposals(Rng& rng, int n, int w, int h) {
  std::vector<Proposal> p;
  for (int i = 0; i < n; ++i) {
    const double x1 = rng.uniform(-3, w), y1 = rng.uniform(-3, h);
    p.push_back({{x1, y1, x1 + rng.uniform(0.5, w / 2.0), y1 + rng.uniform(0.5, h / 2.0)}, rng.uniform()});
  }
  return p;
}

// Per-pixel scan over the pixel index grid, independent of the span logic.
inline AttentionMap brute_force(const std::vector<Proposal>& props, double c, int w, int h, Accumulation fn) {
  AttentionMap m(w, h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      std::vector<double> s;
      for (const auto& p : props) {
        if (p.confidence >= c && p.box.contains(u, v)) s.push_back(p.confidence);
      }
      if (s.empty()) continue;
      double val = 0;
      switch (fn) {
        case Accumulation::hard: val = 1; break;
        case Accumulation::max: val = *std::max_element(s.begin(), s.end()); break;
        case Accumulation::mean: {
          for (double x : s) val += x;
          val /= s.size();
          break;
        }
        case Accumulation::median: {
          std::sort(s.begin(), s.end());
          const std::size_t k = s.size();
          val = k % 2 ? s[k / 2] : 0.5 * (s[k / 2 - 1] + s[k / 2]);
          break;
        }
      }
      m.at(u, v) = std::clamp(val, 0.0, 1.0);
    }
  }
  return m;
}

struct ApScene {
  std::vector<std::vector<Proposal>> predictions;
  std::vector<std::vector<Box>> gt;
};

// Up to five ground-truth boxes over a few images; predictions are jittered
// copies of some boxes plus distractors, with distinct confidences.
inline ApScene random_ap_scene(Rng& rng) {
  ApScene s;
  const int images = rng.uniform_int(1, 3);
  int budget = rng.uniform_int(1, 5);
  for (int i = 0; i < images; ++i) {
    std::vector<Box> boxes;
    const int n = i + 1 == images ? budget : rng.uniform_int(0, budget);
    budget -= n;
    for (int k = 0; k < n; ++k) {
      const double x = rng.uniform_int(0, 40), y = rng.uniform_int(0, 40);
      boxes.push_back({x, y, x + rng.uniform_int(4, 20), y + rng.uniform_int(4, 20)});
    }
    std::vector<Proposal> preds;
    for (const Box& b : boxes) {
      const int copies = rng.uniform_int(0, 2);
      for (int c = 0; c < copies; ++c) {
        const double dx = rng.uniform(-3, 3), dy = rng.uniform(-3, 3);
        preds.push_back({{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy}, rng.uniform()});
      }
    }
    const int extra = rng.uniform_int(0, 3);
    for (int k = 0; k < extra; ++k) {
      const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
      preds.push_back({{x, y, x + rng.uniform(2, 15), y + rng.uniform(2, 15)}, rng.uniform()});
    }
    s.gt.push_back(boxes);
    s.predictions.push_back(preds);
  }
  return s;
}

// Sweeps every confidence threshold, matching the kept predictions from
// scratch each time, then integrates the upper envelope of precision over
// the distinct recall levels. Assumes distinct confidences.
inline double brute_force_ap(const std::vector<std::vector<Proposal>>& preds, const std::vector<std::vector<Box>>& gt,
                             double iou_thresh = 0.5) {
  std::size_t n_gt = 0;
  for (const auto& g : gt) n_gt += g.size();
  std::vector<double> thresholds;
  for (const auto& p : preds) {
    for (const auto& q : p) thresholds.push_back(q.confidence);
  }
  if (n_gt == 0) return thresholds.empty() ? 1.0 : 0.0;
  std::vector<std::pair<double, double>> pr;  // (recall, precision)
  for (double t : thresholds) {
    std::size_t tp = 0, kept = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      std::vector<Proposal> mine;
      for (const auto& q : preds[i]) {
        if (q.confidence >= t) mine.push_back(q);
      }
      kept += mine.size();
      std::sort(mine.begin(), mine.end(), [](const Proposal& a, const Proposal& b) { return a.confidence > b.confidence; });
      std::vector<bool> used(gt[i].size(), false);
      for (const auto& q : mine) {
        int best = -1;
        double best_iou = 0;
        for (std::size_t j = 0; j < gt[i].size(); ++j) {
          const double o = iou(q.box, gt[i][j]);
          if (!used[j] && o >= iou_thresh && o >= best_iou) {
            best_iou = o;
            best = static_cast<int>(j);
          }
        }
        if (best >= 0) {
          used[best] = true;
          ++tp;
        }
      }
    }
    pr.push_back({double(tp) / n_gt, double(tp) / kept});
  }
  std::vector<double> levels;
  for (const auto& [r, p] : pr) {
    if (r > 0) levels.push_back(r);
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double ap = 0, prev = 0;
  for (double r : levels) {
    double best = 0;
    for (const auto& [rr, p] : pr) {
      if (rr >= r) best = std::max(best, p);
    }
    ap += (r - prev) * best;
    prev = r;
  }
  return ap;
}

}  // namespace oracles
