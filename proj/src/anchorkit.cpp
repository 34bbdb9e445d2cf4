#include "tfpdet/anchorkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfpdet/error.hpp"

namespace tfpdet::anchorkit {

namespace {

// exp() stays finite for any decoded length below ~e^20 anchor lengths.
constexpr double kMaxLogLength = 20.0;

}  // namespace

double tiou(const Segment& a, const Segment& b) {
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  return uni > 0.0 ? inter / uni : 0.0;
}

Offsets encode(const Segment& reference, const Segment& target) {
  const double len = reference.length();
  return {(target.center() - reference.center()) / len, std::log(target.length() / len)};
}

Segment apply_offsets(const Segment& reference, const Offsets& offsets) {
  const double len = reference.length();
  const double center = reference.center() + offsets.center * len;
  const double length = len * std::exp(std::clamp(offsets.log_length, -kMaxLogLength, kMaxLogLength));
  return {center - 0.5 * length, center + 0.5 * length};
}

Decoded decode(const Segment& reference, const Offsets& offsets, double clip_len) {
  const Segment raw = apply_offsets(reference, offsets);
  Decoded d;
  d.segment = {std::clamp(raw.start, 0.0, clip_len), std::clamp(raw.end, 0.0, clip_len)};
  d.degenerate = !(d.segment.length() >= 1.0);
  return d;
}

std::vector<int> default_strides() { return {8, 16, 32}; }

std::vector<std::vector<double>> default_scales() {
  std::vector<std::vector<double>> s(3);
  for (int j = 1; j <= 7; ++j) s[0].push_back(j);
  for (int j = 4; j <= 10; ++j) s[1].push_back(j);
  for (int j = 6; j <= 16; ++j) s[2].push_back(j);
  return s;
}

std::vector<std::vector<double>> single_level_scales() {
  const auto strides = default_strides();
  const auto scales = default_scales();
  std::vector<double> merged;
  for (std::size_t k = 0; k < scales.size(); ++k) {
    for (double s : scales[k]) merged.push_back(s * strides[k] / strides[0]);
  }
  return {merged};
}

AnchorGrid build_anchor_grid(int buffer_len, const std::vector<int>& strides,
                             const std::vector<std::vector<double>>& scales) {
  if (strides.empty() || strides.size() != scales.size()) {
    throw ConfigError("anchor grid: need one scale list per stride");
  }
  AnchorGrid grid;
  grid.strides = strides;
  grid.scales = scales;
  grid.buffer_len = buffer_len;
  grid.offsets.push_back(0);
  for (std::size_t k = 0; k < strides.size(); ++k) {
    const int s = strides[k];
    if (s <= 0 || buffer_len <= 0 || buffer_len % s != 0) {
      throw ConfigError("anchor grid: buffer length " + std::to_string(buffer_len) +
                        " is not divisible by stride " + std::to_string(s));
    }
    if (scales[k].empty()) throw ConfigError("anchor grid: level " + std::to_string(k) + " has no scales");
    const int positions = buffer_len / s;
    for (int p = 0; p < positions; ++p) {
      const double center = (p + 0.5) * s;
      for (std::size_t j = 0; j < scales[k].size(); ++j) {
        const double len = scales[k][j] * s;
        grid.anchors.push_back({{center - 0.5 * len, center + 0.5 * len},
                                static_cast<int>(k), p, static_cast<int>(j)});
      }
    }
    grid.offsets.push_back(grid.anchors.size());
  }
  return grid;
}

std::size_t MatchResult::num_positive() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), AnchorLabel::kPositive));
}

std::size_t MatchResult::num_negative() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), AnchorLabel::kNegative));
}

MatchResult match_anchors_apn(const AnchorGrid& grid, std::span<const Segment> gts, const ApnMatchThresholds& th) {
  const std::size_t n = grid.size();
  MatchResult m;
  m.labels.assign(n, AnchorLabel::kNegative);
  m.matched_gt.assign(n, -1);
  m.targets.assign(n, Offsets{});
  if (gts.empty()) return m;

  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, 0);
  std::vector<double> gt_best(gts.size(), 0.0);
  std::vector<std::size_t> gt_best_anchor(gts.size(), 0);
  for (std::size_t a = 0; a < n; ++a) {
    const Segment& seg = grid.anchors[a].segment;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double iou = tiou(seg, gts[g]);
      if (iou > best_iou[a]) {
        best_iou[a] = iou;
        best_gt[a] = static_cast<int>(g);
      }
      if (iou > gt_best[g]) {
        gt_best[g] = iou;
        gt_best_anchor[g] = a;
      }
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (best_iou[a] > th.positive) {
      m.labels[a] = AnchorLabel::kPositive;
    } else if (best_iou[a] < th.negative) {
      m.labels[a] = AnchorLabel::kNegative;
    } else {
      m.labels[a] = AnchorLabel::kIgnore;
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gt_best[g] > 0.0) m.labels[gt_best_anchor[g]] = AnchorLabel::kPositive;
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (m.labels[a] != AnchorLabel::kPositive) continue;
    m.matched_gt[a] = best_gt[a];
    m.targets[a] = encode(grid.anchors[a].segment, gts[static_cast<std::size_t>(best_gt[a])]);
  }
  return m;
}

ProposalMatch match_proposals_acn(std::span<const Segment> proposals, std::span<const Segment> gts,
                                  std::span<const int> gt_labels, double fg_thresh) {
  if (gts.size() != gt_labels.size()) throw DimensionError("match_proposals_acn: labels/gts size mismatch");
  ProposalMatch m;
  m.labels.assign(proposals.size(), 0);
  m.matched_gt.assign(proposals.size(), -1);
  m.targets.assign(proposals.size(), Offsets{});
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    double best = 0.0;
    int arg = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double iou = tiou(proposals[p], gts[g]);
      if (iou > best) {
        best = iou;
        arg = static_cast<int>(g);
      }
    }
    if (arg >= 0 && best > fg_thresh) {
      m.labels[p] = gt_labels[static_cast<std::size_t>(arg)];
      m.matched_gt[p] = arg;
      m.targets[p] = encode(proposals[p], gts[static_cast<std::size_t>(arg)]);
    }
  }
  return m;
}

std::vector<std::size_t> sample_minibatch(std::span<const AnchorLabel> labels, std::size_t batch,
                                          double pos_fraction, Rng& rng) {
  if (batch == 0) throw ContractError("sample_minibatch: batch must be positive");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == AnchorLabel::kPositive) pos.push_back(i);
    if (labels[i] == AnchorLabel::kNegative) neg.push_back(i);
  }
  if (pos.empty() && neg.empty()) throw ContractError("sample_minibatch: no positives and no negatives");
  const auto want_pos = static_cast<std::size_t>(std::floor(static_cast<double>(batch) * pos_fraction + 1e-9));
  const std::size_t n_pos = std::min(want_pos, pos.size());
  const std::size_t n_neg = std::min(batch - n_pos, neg.size());
  std::vector<std::size_t> out;
  out.reserve(n_pos + n_neg);
  for (std::size_t i : rng.choose(pos.size(), n_pos)) out.push_back(pos[i]);
  for (std::size_t i : rng.choose(neg.size(), n_neg)) out.push_back(neg[i]);
  return out;
}

std::vector<std::size_t> nms(std::span<const Segment> segments, std::span<const double> scores,
                             double tiou_thresh, std::size_t max_keep) {
  if (segments.size() != scores.size()) throw DimensionError("nms: segments/scores size mismatch");
  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> keep;
  for (std::size_t idx : order) {
    if (max_keep > 0 && keep.size() >= max_keep) break;
    bool suppressed = false;
    for (std::size_t k : keep) {
      if (tiou(segments[idx], segments[k]) >= tiou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) keep.push_back(idx);
  }
  return keep;
}

}  // namespace tfpdet::anchorkit
