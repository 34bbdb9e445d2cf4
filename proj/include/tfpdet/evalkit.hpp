#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfpdet/anchorkit.hpp"
#include "tfpdet/datakit.hpp"
#include "tfpdet/heads.hpp"

namespace tfpdet::evalkit {

using anchorkit::Segment;
using heads::Detection;

struct GroundTruth {
  std::string video_id;
  Segment segment;
  int label = 0;
};

struct ScoredProposal {
  std::string video_id;
  Segment segment;
  double score = 0.0;
};

/// 0.5, 0.55, ..., 0.95.
std::vector<double> default_tiou_grid();

struct EvalConfig {
  std::string preset = "activitynet";
  std::vector<double> tiou_thresholds{0.5, 0.75, 0.95};  // reported columns
  std::vector<double> average_grid = default_tiou_grid();
  std::size_t proposal_budget = 100;
  std::vector<double> ar_tiou_grid = default_tiou_grid();

  static EvalConfig activitynet();
  static EvalConfig thumos();  // columns 0.1 .. 0.5
  static EvalConfig from_preset(const std::string& name);
  void validate() const;
};

/// Detections of one class, ranked by score (ties: earlier start first), each
/// greedily matched to the unused same-video ground truth of highest tIoU at
/// or above the threshold. AP integrates the monotone precision envelope over
/// recall steps. Returns 0 when gts is empty.
double average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts, double tiou_thresh);

/// Top-`budget` proposals per video by score; recall at each threshold uses
/// one-to-one greedy matching in score order; AR is the mean over the grid.
double average_recall(std::span<const ScoredProposal> proposals, std::span<const GroundTruth> gts,
                      std::size_t budget, std::span<const double> tiou_grid);

struct EvalCounts {
  std::size_t gt = 0;
  std::size_t detections = 0;
  std::size_t matched = 0;  // true positives at the first reported threshold
};

struct EvalReport {
  std::string preset;
  std::vector<double> thresholds;                             // every threshold evaluated
  std::map<int, std::map<double, double>> per_class_ap;       // class id → threshold → AP
  std::map<double, double> map;                               // threshold → mAP
  double average_map = 0.0;                                   // mean over the average grid
  std::optional<double> ar_at_n;
  std::size_t proposal_budget = 0;
  EvalCounts counts;

  nlohmann::json to_json(const datakit::LabelIndex& labels) const;
};

/// mAP averages over classes that have ground truth. Throws ContractError
/// when there is no ground truth at all.
EvalReport evaluate_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts, const EvalConfig& cfg);

/// Threshold label as printed in tables: shortest form, e.g. "0.5", "0.75".
std::string threshold_label(double t);

/// Fixed-width table: one row labelled `row_name` with the configured
/// threshold columns, then "Average" for grid-averaging presets.
std::string format_table(const std::vector<std::pair<std::string, const EvalReport*>>& rows, const EvalConfig& cfg);

}  // namespace tfpdet::evalkit
