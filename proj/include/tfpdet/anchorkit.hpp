#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tfpdet/rng.hpp"

namespace tfpdet::anchorkit {

/// Temporal interval in frames.
struct Segment {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
  bool operator==(const Segment&) const = default;
};

/// Intersection over union of two intervals; 0 when either is empty.
double tiou(const Segment& a, const Segment& b);

/// Center/log-length regression offsets relative to a reference segment.
struct Offsets {
  double center = 0.0;      // (c_gt - c_ref) / len_ref
  double log_length = 0.0;  // ln(len_gt / len_ref)
};

Offsets encode(const Segment& reference, const Segment& target);

/// Unclipped inverse of encode.
Segment apply_offsets(const Segment& reference, const Offsets& offsets);

struct Decoded {
  Segment segment;
  bool degenerate = false;  // shorter than one frame after clipping
};

/// apply_offsets followed by intersection with [0, clip_len].
Decoded decode(const Segment& reference, const Offsets& offsets, double clip_len);

struct Anchor {
  Segment segment;
  int level = 0;
  int position = 0;
  int scale_index = 0;
};

/// Anchors of all levels flattened level-major, then position, then scale:
/// flat index = level_offset(k) + position * A_k + scale_index.
struct AnchorGrid {
  std::vector<int> strides;
  std::vector<std::vector<double>> scales;  // per level, in units of the level stride
  int buffer_len = 0;
  std::vector<Anchor> anchors;
  std::vector<std::size_t> offsets;  // level start indices, plus a final total

  std::size_t size() const { return anchors.size(); }
  std::size_t num_levels() const { return strides.size(); }
  std::size_t level_offset(std::size_t k) const { return offsets[k]; }
  std::size_t level_size(std::size_t k) const { return offsets[k + 1] - offsets[k]; }
  std::size_t anchors_per_position(std::size_t k) const { return scales[k].size(); }
  std::size_t positions(std::size_t k) const { return static_cast<std::size_t>(buffer_len / strides[k]); }
};

/// Stride-8/16/32 levels with 7, 7 and 11 scales.
std::vector<int> default_strides();
std::vector<std::vector<double>> default_scales();

/// Single stride-8 level carrying every length of the default grid.
std::vector<std::vector<double>> single_level_scales();

AnchorGrid build_anchor_grid(int buffer_len, const std::vector<int>& strides = default_strides(),
                             const std::vector<std::vector<double>>& scales = default_scales());

enum class AnchorLabel { kNegative, kPositive, kIgnore };

struct MatchResult {
  std::vector<AnchorLabel> labels;
  std::vector<int> matched_gt;   // -1 unless positive
  std::vector<Offsets> targets;  // meaningful for positives only

  std::size_t num_positive() const;
  std::size_t num_negative() const;
};

struct ApnMatchThresholds {
  double positive = 0.7;  // strictly above
  double negative = 0.3;  // strictly below
};

/// Jointly over all levels: an anchor is positive when it is the best match
/// of some ground truth or exceeds the positive threshold, negative when
/// below the negative threshold for every ground truth, ignored otherwise.
MatchResult match_anchors_apn(const AnchorGrid& grid, std::span<const Segment> gts,
                              const ApnMatchThresholds& th = {});

struct ProposalMatch {
  std::vector<int> labels;       // class id, 0 = background
  std::vector<int> matched_gt;   // -1 for background
  std::vector<Offsets> targets;  // meaningful for foreground only
};

/// Foreground iff the best tIoU strictly exceeds fg_thresh.
ProposalMatch match_proposals_acn(std::span<const Segment> proposals, std::span<const Segment> gts,
                                  std::span<const int> gt_labels, double fg_thresh = 0.5);

/// Indices of up to `batch` items: floor(batch * pos_fraction) positives when
/// available, the remainder filled with negatives. Ignored items are never
/// drawn. Positives precede negatives in the result.
std::vector<std::size_t> sample_minibatch(std::span<const AnchorLabel> labels, std::size_t batch,
                                          double pos_fraction, Rng& rng);

/// Greedy suppression in descending score order (ties by lower index);
/// returns kept indices in that order. max_keep == 0 keeps everything.
std::vector<std::size_t> nms(std::span<const Segment> segments, std::span<const double> scores,
                             double tiou_thresh, std::size_t max_keep = 0);

}  // namespace tfpdet::anchorkit
