#pragma once

// Deliberately naive reference implementations used to cross-check the
// optimized library code.

#include <algorithm>
#include <cmath>
#include <vector>

#include "tfpdet/anchorkit.hpp"
#include "tfpdet/evalkit.hpp"
#include "tfpdet/rng.hpp"

namespace tfpdet::testing {

// Half-frame grid so that ties and exact threshold hits occur often.
inline anchorkit::Segment random_segment(Rng& rng, double span) {
  const double a = std::round(rng.uniform(0.0, span) * 2.0) / 2.0;
  double b = std::round(rng.uniform(0.0, span) * 2.0) / 2.0;
  if (b == a) b = a + 1.0;
  return {std::min(a, b), std::max(a, b)};
}

inline double tiou_oracle(const anchorkit::Segment& a, const anchorkit::Segment& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline anchorkit::MatchResult apn_match_oracle(const anchorkit::AnchorGrid& grid,
                                               const std::vector<anchorkit::Segment>& gts) {
  using anchorkit::AnchorLabel;
  const std::size_t n = grid.size();
  std::vector<std::vector<double>> iou(n, std::vector<double>(gts.size()));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t g = 0; g < gts.size(); ++g) iou[a][g] = tiou_oracle(grid.anchors[a].segment, gts[g]);

  anchorkit::MatchResult m;
  m.labels.assign(n, AnchorLabel::kNegative);
  m.matched_gt.assign(n, -1);
  m.targets.assign(n, {});
  for (std::size_t a = 0; a < n; ++a) {
    double best = 0.0;
    for (double v : iou[a]) best = std::max(best, v);
    if (best > 0.7) m.labels[a] = AnchorLabel::kPositive;
    else if (best >= 0.3) m.labels[a] = AnchorLabel::kIgnore;
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    double best = 0.0;
    for (std::size_t a = 0; a < n; ++a) best = std::max(best, iou[a][g]);
    if (best <= 0.0) continue;
    for (std::size_t a = 0; a < n; ++a) {
      if (iou[a][g] == best) {
        m.labels[a] = AnchorLabel::kPositive;
        break;
      }
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (m.labels[a] != AnchorLabel::kPositive) continue;
    std::size_t arg = 0;
    for (std::size_t g = 1; g < gts.size(); ++g)
      if (iou[a][g] > iou[a][arg]) arg = g;
    m.matched_gt[a] = static_cast<int>(arg);
    m.targets[a] = anchorkit::encode(grid.anchors[a].segment, gts[arg]);
  }
  return m;
}

inline anchorkit::ProposalMatch acn_match_oracle(const std::vector<anchorkit::Segment>& props,
                                                 const std::vector<anchorkit::Segment>& gts,
                                                 const std::vector<int>& labels) {
  anchorkit::ProposalMatch m;
  for (const auto& p : props) {
    int arg = -1;
    double best = 0.5;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = tiou_oracle(p, gts[g]);
      if (v > best) {
        best = v;
        arg = static_cast<int>(g);
      }
    }
    m.labels.push_back(arg < 0 ? 0 : labels[static_cast<std::size_t>(arg)]);
    m.matched_gt.push_back(arg);
    m.targets.push_back(arg < 0 ? anchorkit::Offsets{} : anchorkit::encode(p, gts[static_cast<std::size_t>(arg)]));
  }
  return m;
}

inline std::vector<std::size_t> nms_oracle(const std::vector<anchorkit::Segment>& segs,
                                           const std::vector<double>& scores, double thresh,
                                           std::size_t max_keep) {
  std::vector<bool> alive(segs.size(), true);
  std::vector<std::size_t> keep;
  while (max_keep == 0 || keep.size() < max_keep) {
    std::size_t pick = segs.size();
    for (std::size_t i = 0; i < segs.size(); ++i)
      if (alive[i] && (pick == segs.size() || scores[i] > scores[pick])) pick = i;
    if (pick == segs.size()) break;
    keep.push_back(pick);
    for (std::size_t i = 0; i < segs.size(); ++i)
      if (alive[i] && tiou_oracle(segs[i], segs[pick]) >= thresh) alive[i] = false;
  }
  return keep;
}

// AP from its definition: for every distinct recall level reached, the best
// precision attained at any rank with at least that recall, weighted by the
// recall increment. Matching follows the greedy score-order rule.
inline double ap_oracle(std::vector<evalkit::Detection> dets, const std::vector<evalkit::GroundTruth>& gts,
                        double thresh) {
  if (gts.empty()) return 0.0;
  for (std::size_t i = 0; i < dets.size(); ++i)
    for (std::size_t j = i + 1; j < dets.size(); ++j) {
      const bool later = dets[j].score > dets[i].score ||
                         (dets[j].score == dets[i].score && dets[j].segment.start < dets[i].segment.start);
      if (later) std::rotate(dets.begin() + static_cast<std::ptrdiff_t>(i), dets.begin() + static_cast<std::ptrdiff_t>(j),
                             dets.begin() + static_cast<std::ptrdiff_t>(j) + 1);
    }
  std::vector<bool> used(gts.size(), false);
  std::vector<double> prec, rec;
  int hits = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    int arg = -1;
    double best = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].video_id != dets[i].video_id) continue;
      const double v = tiou_oracle(dets[i].segment, gts[g].segment);
      if (v >= thresh && (arg < 0 || v > best)) {
        best = v;
        arg = static_cast<int>(g);
      }
    }
    if (arg >= 0) {
      used[static_cast<std::size_t>(arg)] = true;
      ++hits;
    }
    prec.push_back(static_cast<double>(hits) / static_cast<double>(i + 1));
    rec.push_back(static_cast<double>(hits) / static_cast<double>(gts.size()));
  }
  double ap = 0.0, prev = 0.0;
  for (int k = 1; k <= static_cast<int>(gts.size()); ++k) {
    const double r = static_cast<double>(k) / static_cast<double>(gts.size());
    double p = -1.0;
    for (std::size_t i = 0; i < rec.size(); ++i)
      if (rec[i] >= r - 1e-15) p = std::max(p, prec[i]);
    if (p < 0.0) break;
    ap += p * (r - prev);
    prev = r;
  }
  return ap;
}

// Per-threshold recall with a fresh matching pass per video; no shared state
// with the library implementation beyond tIoU.
inline double ar_oracle(const std::vector<evalkit::ScoredProposal>& props, const std::vector<evalkit::GroundTruth>& gts,
                        std::size_t budget, const std::vector<double>& grid) {
  std::vector<std::string> videos;
  for (const auto& g : gts)
    if (std::find(videos.begin(), videos.end(), g.video_id) == videos.end()) videos.push_back(g.video_id);
  double total = 0.0;
  for (double theta : grid) {
    double found = 0.0;
    for (const auto& vid : videos) {
      std::vector<evalkit::ScoredProposal> mine;
      for (const auto& p : props)
        if (p.video_id == vid) mine.push_back(p);
      std::stable_sort(mine.begin(), mine.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
      if (mine.size() > budget) mine.resize(budget);
      std::vector<const evalkit::GroundTruth*> open;
      for (const auto& g : gts)
        if (g.video_id == vid) open.push_back(&g);
      for (const auto& p : mine) {
        auto best = open.end();
        double bv = theta;
        for (auto it = open.begin(); it != open.end(); ++it) {
          const double v = tiou_oracle(p.segment, (*it)->segment);
          if (v >= bv && (best == open.end() || v > bv)) {
            bv = v;
            best = it;
          }
        }
        if (best != open.end()) {
          open.erase(best);
          found += 1.0;
        }
      }
    }
    total += found / static_cast<double>(gts.size());
  }
  return total / static_cast<double>(grid.size());
}

}  // namespace tfpdet::testing
