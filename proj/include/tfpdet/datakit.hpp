#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tfpdet/numcore.hpp"

namespace tfpdet::datakit {

/// One annotated activity instance, in frames.
struct Activity {
  double t_start = 0.0;
  double t_end = 0.0;
  int label = 0;  // class id in [1, C]

  double length() const { return t_end - t_start; }
  bool operator==(const Activity&) const = default;
};

/// Sorted label names; class id = 1-based position, 0 is background.
class LabelIndex {
 public:
  LabelIndex() = default;
  explicit LabelIndex(std::vector<std::string> names);

  int id(const std::string& name) const;  // throws SchemaError for unknown labels
  bool contains(const std::string& name) const;
  const std::string& name(int id) const;
  int num_classes() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

struct VideoMeta {
  std::string video_id;
  double fps = 1.0;
  std::int64_t num_frames = 0;
  std::string subset;
  std::vector<Activity> annotations;
};

struct AnnotationSet {
  std::map<std::string, VideoMeta> videos;
  LabelIndex labels;
};

struct VideoRecord {
  std::string video_id;
  numcore::Tensor features;  // [D×L]
  std::vector<Activity> annotations;
  std::int64_t num_frames = 0;
  double fps = 1.0;
  std::string subset;
};

enum class Direction { kForward, kBackward };

struct Buffer {
  std::string video_id;
  std::int64_t frame_offset = 0;
  Direction direction = Direction::kForward;
  std::int64_t valid_len = 0;  // frames of real content; the rest is zero padding
  numcore::Tensor features;    // [D×buf_len]
  std::vector<Activity> annotations;
};

/// Reads the annotation JSON. With `fixed` set, labels must come from that
/// index (evaluation-only files); otherwise the index is built from the
/// sorted set of labels present.
AnnotationSet load_annotations(const std::filesystem::path& path, const LabelIndex* fixed = nullptr);
AnnotationSet parse_annotations(const std::string& text, const LabelIndex* fixed = nullptr);
void save_annotations(const std::filesystem::path& path, const AnnotationSet& set);
std::string dump_annotations(const AnnotationSet& set);

LabelIndex load_label_index(const std::filesystem::path& path);
void save_label_index(const std::filesystem::path& path, const LabelIndex& index);

/// TFPV container: "TFPV", u32 version, u32 D, u32 L, L×D f32 frame-major.
numcore::Tensor load_features(const std::filesystem::path& path);
numcore::Tensor decode_features(const std::string& bytes);
void save_features(const std::filesystem::path& path, const numcore::Tensor& features);
std::string encode_features(const numcore::Tensor& features);

/// Forward windows from frame 0 and backward windows ending at L; short
/// windows are zero padded. Instances keeping under half their length after
/// clipping are dropped.
std::vector<Buffer> make_buffers(const VideoRecord& record, std::int64_t buf_len,
                                 bool include_backward = true);

constexpr double kClipRetention = 0.5;

struct DurationBand {
  double min_len = 0.0;
  double max_len = 0.0;
  double weight = 1.0;
};

struct SynthConfig {
  int num_videos = 80;
  int num_val = 20;  // the last num_val videos form the "val" subset
  std::int64_t video_length = 768;
  int feature_dim = 32;
  int num_classes = 3;
  double noise_sigma = 0.3;
  double signal_amplitude = 1.0;
  double fps = 8.0;
  std::vector<DurationBand> duration_bands{{8, 56, 0.5}, {64, 160, 0.3}, {192, 512, 0.2}};
  std::pair<int, int> instances_per_video{1, 3};
  std::uint64_t seed = 0;

  void validate() const;
};

constexpr std::int64_t kMinGap = 8;
constexpr int kMaxRejections = 1000;

struct SyntheticDataset {
  std::vector<VideoRecord> videos;
  LabelIndex labels;
  std::vector<std::vector<double>> signatures;  // unit vector per class, index = id-1
};

/// Draws an integer instance length: band by weight, then uniform within it.
std::int64_t sample_duration(const std::vector<DurationBand>& bands, Rng& rng, std::size_t* band_out = nullptr);

SyntheticDataset generate_synthetic(const SynthConfig& cfg);

/// On-disk layout: annotations.json, labels.json, features/<video_id>.tfpv.
void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data);

struct Dataset {
  std::vector<VideoRecord> videos;
  LabelIndex labels;

  std::vector<const VideoRecord*> subset(const std::string& name) const;
  AnnotationSet annotations() const;
};

Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace tfpdet::datakit
