#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tfpdet/anchorkit.hpp"
#include "tfpdet/numcore.hpp"
#include "tfpdet/pyramid.hpp"

namespace tfpdet::heads {

using anchorkit::Segment;
using numcore::ParameterStore;
using numcore::Tensor;

// ---------------------------------------------------------------------------
// Activity proposal network

struct ApnConfig {
  std::vector<std::vector<double>> scales = anchorkit::default_scales();  // per pyramid level
  double nms_tiou = 0.7;
  std::size_t top_k = 100;
  std::size_t batch = 64;  // per level
  double pos_fraction = 0.5;
  double pos_iou = 0.7;
  double neg_iou = 0.3;

  void validate(std::size_t num_levels) const;
};

/// Per level: cls rows (2j, 2j+1) = (background, activity) logits of anchor
/// j; reg rows (2j, 2j+1) = (t_c, t_l). Columns are temporal positions.
struct ApnLevelOutput {
  Tensor cls;  // [2A_k×T_k]
  Tensor reg;  // [2A_k×T_k]
};

void add_apn_params(ParameterStore& params, const ApnConfig& cfg, std::size_t channels);

std::vector<ApnLevelOutput> apn_forward(const pyramid::PyramidFeatures& pyr, const ParameterStore& params);

/// Flat positions of anchor `a` inside its level's cls/reg maps:
/// first = row 2j, second = row 2j+1.
std::pair<std::size_t, std::size_t> anchor_slots(const anchorkit::AnchorGrid& grid, std::size_t a);

/// Softmax(activity) of every anchor in grid order.
std::vector<double> anchor_objectness(std::span<const ApnLevelOutput> out, const anchorkit::AnchorGrid& grid);

struct Proposal {
  Segment segment;
  double objectness = 0.0;
  int source_level = 0;
};

/// Decodes every anchor, clips to [0, clip_len], drops degenerates, pools
/// all levels, then greedy NMS and top-k. Output is sorted by objectness.
std::vector<Proposal> generate_proposals(std::span<const ApnLevelOutput> out, const anchorkit::AnchorGrid& grid,
                                         double clip_len, double nms_tiou = 0.7, std::size_t top_k = 100);

// ---------------------------------------------------------------------------
// RoI pooling and context

/// Source cell for every (channel, bin) of each segment, flattened as
/// [N×D×P] indices into a [D×T] map. Cell i covers [i, i+1) and belongs to
/// bin b when its center i+0.5 lies in the b-th of P equal sub-intervals
/// (half-open) of the segment in feature coordinates. A bin without cells
/// borrows cell floor(sub-interval center). Throws ContractError when a
/// segment misses the map entirely.
std::vector<std::size_t> roi_pool_indices(std::span<const double> feat, std::size_t channels, std::size_t length,
                                          std::span<const Segment> segments, int stride, std::size_t bins);

/// [D×T] → [N×D×P] max pooling; gradients flow to the selected cells.
Tensor roi_pool(const Tensor& feat, std::span<const Segment> segments, int stride, std::size_t bins);

/// Twice as long about the same center, clipped to [0, clip_len].
Segment context_window(const Segment& s, double clip_len);

enum class Strategy { kS1, kS2, kS3 };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);  // "S1" | "S2" | "S3"

struct AcnConfig {
  Strategy strategy = Strategy::kS3;
  bool use_context = true;
  std::size_t roi_bins = 4;
  std::size_t fc_dim = 256;
  std::size_t num_classes = 3;
  std::size_t batch = 64;  // per classifier
  double fg_fraction = 0.25;
  double fg_iou = 0.5;
  double score_thresh = 0.05;
  double nms_tiou = 0.4;

  void validate() const;
  /// One classifier under S1, one per level otherwise.
  std::size_t num_classifiers(std::size_t num_levels) const;
};

void add_acn_params(ParameterStore& params, const AcnConfig& cfg, std::size_t channels, std::size_t num_levels);

/// Pooled input to classifier `k`: [N×D×P]. With context, roi and context
/// pools are each reduced to D/2 channels and concatenated.
Tensor context_features(const Tensor& level_feat, std::span<const Segment> segments, int stride, double clip_len,
                        std::size_t classifier, const AcnConfig& cfg, const ParameterStore& params);

struct AcnLevelOutput {
  int level = 0;                        // pyramid level pooled from
  std::size_t classifier = 0;           // parameter set used
  std::vector<std::size_t> proposals;   // indices into the proposal list
  Tensor cls;                           // [N×(C+1)]
  Tensor reg;                           // [N×2C], class c at columns 2(c-1), 2(c-1)+1
};

/// Proposal indices routed to each pyramid level.
std::vector<std::vector<std::size_t>> assign_levels(std::span<const Proposal> proposals, Strategy strategy,
                                                    std::size_t num_levels);

/// Classifier output for the given segments pooled from `level`.
AcnLevelOutput acn_level_forward(const pyramid::PyramidFeatures& pyr, std::size_t level,
                                 std::span<const Segment> segments, double clip_len, const AcnConfig& cfg,
                                 const ParameterStore& params);

std::vector<AcnLevelOutput> acn_forward(const pyramid::PyramidFeatures& pyr, std::span<const Proposal> proposals,
                                        double clip_len, const AcnConfig& cfg, const ParameterStore& params);

// ---------------------------------------------------------------------------
// Detections

struct Detection {
  std::string video_id;
  Segment segment;  // frames
  int label = 0;    // >= 1
  double score = 0.0;
};

/// Greedy NMS within each class; result ordered by descending score.
std::vector<Detection> classwise_nms(std::vector<Detection> dets, double tiou_thresh);

/// Scores every (proposal, level, class) candidate, refines it with the
/// class regression, drops background and low scores, runs class-wise NMS,
/// then shifts by frame_offset into video coordinates.
std::vector<Detection> finalize_detections(std::span<const AcnLevelOutput> acn, std::span<const Proposal> proposals,
                                           const AcnConfig& cfg, double clip_len, std::int64_t frame_offset = 0,
                                           const std::string& video_id = {});

}  // namespace tfpdet::heads
