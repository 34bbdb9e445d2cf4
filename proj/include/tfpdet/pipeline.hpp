#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfpdet/anchorkit.hpp"
#include "tfpdet/datakit.hpp"
#include "tfpdet/heads.hpp"
#include "tfpdet/numcore.hpp"
#include "tfpdet/pyramid.hpp"

namespace tfpdet::pipeline {

using heads::Detection;
using numcore::Tensor;

/// Per-level weights; an empty list means 1 for every level.
struct LossWeights {
  std::vector<double> gamma;
  std::vector<double> lambda;

  void validate(std::size_t num_levels) const;
};

struct TrainConfig {
  numcore::SgdConfig sgd;  // desk defaults: lr 1e-3, ÷10 every 1k steps
  std::int64_t max_steps = 3000;
  std::int64_t buffer_len = 768;
  std::int64_t checkpoint_every = 1000;  // 0 disables intermediate checkpoints
  bool gt_as_proposals = true;           // append ground truth to ACN training proposals
  LossWeights loss_weights;

  /// lr 1e-4, ÷10 every 100k, 150k steps.
  static TrainConfig paper_preset();
  void validate(std::size_t num_levels) const;
};

struct ModelConfig {
  pyramid::EncoderConfig encoder;
  pyramid::PyramidConfig pyramid;
  heads::ApnConfig apn;
  heads::AcnConfig acn;
  std::int64_t buffer_len = 768;

  void validate() const;
};

/// Parameters plus the static anchor grid for one buffer length.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  struct Forward {
    pyramid::PyramidFeatures pyr;
    std::vector<heads::ApnLevelOutput> apn;
  };

  void initialize(Rng& rng) { params_.initialize(rng); }
  Forward forward(const Tensor& features) const;

  const ModelConfig& config() const { return cfg_; }
  const anchorkit::AnchorGrid& grid() const { return grid_; }
  numcore::ParameterStore& params() { return params_; }
  const numcore::ParameterStore& params() const { return params_; }
  std::size_t num_levels() const { return cfg_.pyramid.num_levels; }

 private:
  ModelConfig cfg_;
  numcore::ParameterStore params_;
  anchorkit::AnchorGrid grid_;
};

// ---------------------------------------------------------------------------
// Objective

/// Per-level loss pieces of one network; an undefined tensor means the
/// level had no sampled items (cls) or no positives (loc).
struct BranchTerms {
  std::vector<Tensor> cls;
  std::vector<Tensor> loc;
};

struct JointLoss {
  Tensor total;
  std::vector<double> apn_level;  // gamma_k * (cls + lambda_k * loc)
  std::vector<double> acn_level;
};

/// Sum over levels and both networks of gamma_k * (cls_k + lambda_k * loc_k).
/// Throws ContractError when no term is present at all.
JointLoss joint_loss(const BranchTerms& apn, const BranchTerms& acn, const LossWeights& w);

struct StepReport {
  std::int64_t step = 0;  // 0-based index of the step just taken
  double lr = 0.0;
  double total = 0.0;
  std::vector<double> apn_cls, apn_loc, acn_cls, acn_loc;  // unweighted, per level
  std::vector<std::size_t> apn_pos, apn_neg, acn_fg, acn_bg;

  nlohmann::json to_json() const;
  bool operator==(const StepReport&) const = default;
};

/// Owns the mutable training state: model, momentum, sampling stream, step.
class Trainer {
 public:
  Trainer(ModelConfig model_cfg, TrainConfig train_cfg, std::uint64_t seed);

  /// Builds the loss for one buffer without touching parameters.
  struct Evaluated {
    JointLoss loss;
    StepReport report;
  };
  Evaluated evaluate(const datakit::Buffer& buffer);

  /// One optimization step on one buffer.
  StepReport train_step(const datakit::Buffer& buffer);

  /// Draws a video uniformly, then one of its buffers, and steps.
  StepReport train_step(const std::vector<std::vector<datakit::Buffer>>& buffers_per_video);

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const TrainConfig& config() const { return train_cfg_; }
  std::int64_t step() const { return step_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }
  numcore::SgdState& sgd_state() { return sgd_; }
  const numcore::SgdState& sgd_state() const { return sgd_; }
  void set_step(std::int64_t s) { step_ = s; }

 private:
  Model model_;
  TrainConfig train_cfg_;
  numcore::SgdState sgd_;
  Rng rng_;
  std::int64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Inference

struct ScoredSegment {
  anchorkit::Segment segment;
  double score = 0.0;
};

struct VideoResult {
  std::string video_id;
  std::vector<Detection> detections;    // video frames
  std::vector<ScoredSegment> proposals;  // video frames, descending objectness
};

/// Proposals and detections for one buffer, in video coordinates. Padding
/// frames are excluded by clipping at the buffer's valid length.
VideoResult infer_buffer(const datakit::Buffer& buffer, const Model& model);

/// Concatenates per-buffer results in order, applies class-wise NMS across
/// all of them and sorts proposals by objectness.
VideoResult merge_buffer_results(const std::string& video_id, const std::vector<VideoResult>& parts, double nms_tiou);

/// Forward-direction buffers, per-buffer two-stage inference, then a
/// video-global class-wise NMS.
VideoResult infer_video(const datakit::VideoRecord& record, const Model& model);

/// infer_video over many videos on up to `threads` workers; output order
/// follows the input.
std::vector<VideoResult> infer_videos(const std::vector<const datakit::VideoRecord*>& records, const Model& model,
                                      unsigned threads);

/// Worker count: TFPDET_THREADS when set and positive, else hardware
/// concurrency, never below 1.
unsigned worker_threads();

// ---------------------------------------------------------------------------
// Checkpoints

/// "TFPM", u32 version, u64 header length, JSON header (config, step, rng
/// state, parameter manifest), then f64 payloads in manifest order:
/// parameters followed by momentum buffers. Little-endian throughout.
struct Checkpoint {
  nlohmann::json config;
  std::int64_t step = 0;
  std::string rng_state;
  std::vector<std::string> names;
  std::vector<numcore::Shape> shapes;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> velocity;  // empty or one per parameter
};

constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(const Trainer& trainer, const nlohmann::json& config);
/// Copies parameters (and momentum, step, rng) into the trainer; throws
/// VersionError when the manifest disagrees with the trainer's model.
void restore(Trainer& trainer, const Checkpoint& ckpt);
void load_parameters(Model& model, const Checkpoint& ckpt);

// ---------------------------------------------------------------------------
// Results JSON

struct ResultEntry {
  double start_sec = 0.0;
  double end_sec = 0.0;
  std::string label;
  double score = 0.0;
};

struct ResultsFile {
  std::map<std::string, std::vector<ResultEntry>> results;
};

ResultsFile make_results(const std::vector<VideoResult>& videos, const std::vector<const datakit::VideoRecord*>& records,
                         const datakit::LabelIndex& labels);
std::string dump_results(const ResultsFile& r);
ResultsFile parse_results(const std::string& text);
void save_results(const std::filesystem::path& path, const ResultsFile& r);
ResultsFile load_results(const std::filesystem::path& path);

}  // namespace tfpdet::pipeline
