#include "tfpdet/datakit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tfpdet/error.hpp"
#include "tfpdet/io.hpp"

namespace tfpdet::datakit {

using nlohmann::json;
using numcore::Tensor;
using io::get_u32;
using io::parse_strict;
using io::put_u32;
using io::read_file;
using io::write_file;

namespace {

const json& field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) throw SchemaError(path + ": missing field '" + key + "'");
  return obj.at(key);
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path + ": expected a number");
  return j.get<double>();
}

double round_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

// ---------------------------------------------------------------------------

LabelIndex::LabelIndex(std::vector<std::string> names) : names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
}

int LabelIndex::id(const std::string& name) const {
  auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) throw SchemaError("unknown label '" + name + "'");
  return static_cast<int>(it - names_.begin()) + 1;
}

bool LabelIndex::contains(const std::string& name) const {
  return std::binary_search(names_.begin(), names_.end(), name);
}

const std::string& LabelIndex::name(int id) const {
  if (id < 1 || id > num_classes()) throw LookupError("class id " + std::to_string(id) + " out of range");
  return names_[static_cast<std::size_t>(id - 1)];
}

AnnotationSet parse_annotations(const std::string& text, const LabelIndex* fixed) {
  const json root = parse_strict(text, "annotations");
  const json& version = field(root, "version", "$");
  if (!version.is_number_integer() || version.get<int>() != 1) throw SchemaError("$.version: expected 1");
  const json& db = field(root, "database", "$");
  if (!db.is_object()) throw SchemaError("$.database: expected an object");

  // First pass collects label names so ids are stable regardless of order.
  std::vector<std::string> names;
  for (const auto& [vid, rec] : db.items()) {
    const std::string path = "$.database." + vid;
    const json& anns = field(rec, "annotations", path);
    if (!anns.is_array()) throw SchemaError(path + ".annotations: expected an array");
    for (std::size_t i = 0; i < anns.size(); ++i) {
      const json& lab = field(anns[i], "label", path + ".annotations[" + std::to_string(i) + "]");
      if (!lab.is_string()) throw SchemaError(path + ".annotations[" + std::to_string(i) + "].label: expected a string");
      names.push_back(lab.get<std::string>());
    }
  }
  AnnotationSet set;
  set.labels = fixed ? *fixed : LabelIndex(names);

  for (const auto& [vid, rec] : db.items()) {
    const std::string path = "$.database." + vid;
    VideoMeta meta;
    meta.video_id = vid;
    meta.fps = number(field(rec, "fps", path), path + ".fps");
    if (!(meta.fps > 0.0)) throw SchemaError(path + ".fps: must be positive");
    const json& nf = field(rec, "num_frames", path);
    if (!nf.is_number_integer() || nf.get<std::int64_t>() < 0) {
      throw SchemaError(path + ".num_frames: expected a nonnegative integer");
    }
    meta.num_frames = nf.get<std::int64_t>();
    const json& subset = field(rec, "subset", path);
    meta.subset = subset.is_string() ? subset.get<std::string>() : "";
    if (meta.subset != "train" && meta.subset != "val" && meta.subset != "test") {
      throw SchemaError(path + ".subset: expected train, val or test");
    }
    const json& anns = rec.at("annotations");
    for (std::size_t i = 0; i < anns.size(); ++i) {
      const std::string apath = path + ".annotations[" + std::to_string(i) + "]";
      const json& seg = field(anns[i], "segment", apath);
      if (!seg.is_array() || seg.size() != 2) throw SchemaError(apath + ".segment: expected [start, end]");
      const double s = number(seg[0], apath + ".segment[0]") * meta.fps;
      const double e = number(seg[1], apath + ".segment[1]") * meta.fps;
      if (!(e > s)) throw SchemaError(apath + ".segment: non-increasing segment");
      if (s < 0.0 || e > static_cast<double>(meta.num_frames)) {
        throw SchemaError(apath + ".segment: outside [0, num_frames]");
      }
      const std::string label = anns[i].at("label").get<std::string>();
      if (!set.labels.contains(label)) throw SchemaError(apath + ".label: unknown label '" + label + "'");
      meta.annotations.push_back({s, e, set.labels.id(label)});
    }
    set.videos.emplace(vid, std::move(meta));
  }
  return set;
}

AnnotationSet load_annotations(const std::filesystem::path& path, const LabelIndex* fixed) {
  return parse_annotations(read_file(path), fixed);
}

std::string dump_annotations(const AnnotationSet& set) {
  json db = json::object();
  for (const auto& [vid, meta] : set.videos) {
    json anns = json::array();
    for (const auto& a : meta.annotations) {
      anns.push_back({{"segment", {a.t_start / meta.fps, a.t_end / meta.fps}},
                      {"label", set.labels.name(a.label)}});
    }
    db[vid] = {{"fps", meta.fps},
               {"num_frames", meta.num_frames},
               {"subset", meta.subset},
               {"annotations", std::move(anns)}};
  }
  json root = {{"version", 1}, {"database", std::move(db)}};
  return root.dump(2) + "\n";
}

void save_annotations(const std::filesystem::path& path, const AnnotationSet& set) {
  write_file(path, dump_annotations(set));
}

LabelIndex load_label_index(const std::filesystem::path& path) {
  const json root = parse_strict(read_file(path), path.string());
  const json& labels = field(root, "labels", "$");
  if (!labels.is_array()) throw SchemaError("$.labels: expected an array");
  std::vector<std::string> names;
  for (const auto& l : labels) {
    if (!l.is_string()) throw SchemaError("$.labels: expected strings");
    names.push_back(l.get<std::string>());
  }
  LabelIndex index(names);
  if (index.names() != names) throw SchemaError("$.labels: must be sorted and unique");
  return index;
}

void save_label_index(const std::filesystem::path& path, const LabelIndex& index) {
  write_file(path, json{{"labels", index.names()}}.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

Tensor decode_features(const std::string& bytes) {
  constexpr std::size_t kHeader = 16;
  if (bytes.size() < kHeader || bytes.compare(0, 4, "TFPV") != 0) throw FormatError("TFPV: bad magic");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != 1) throw FormatError("TFPV: unsupported version " + std::to_string(version));
  const std::size_t d = get_u32(bytes, 8);
  const std::size_t l = get_u32(bytes, 12);
  if (d == 0 || l == 0) throw FormatError("TFPV: degenerate extent D=" + std::to_string(d) + " L=" + std::to_string(l));
  if (bytes.size() != kHeader + 4 * d * l) {
    throw FormatError("TFPV: payload size " + std::to_string(bytes.size() - kHeader) + " != " +
                      std::to_string(4 * d * l));
  }
  std::vector<double> values(d * l);
  for (std::size_t frame = 0; frame < l; ++frame) {
    for (std::size_t c = 0; c < d; ++c) {
      const std::uint32_t raw = get_u32(bytes, kHeader + 4 * (frame * d + c));
      values[c * l + frame] = static_cast<double>(std::bit_cast<float>(raw));
    }
  }
  return Tensor::from({d, l}, std::move(values));
}

std::string encode_features(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("TFPV: features must be [D×L]");
  const std::size_t d = features.dim(0), l = features.dim(1);
  std::string out = "TFPV";
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(d));
  put_u32(out, static_cast<std::uint32_t>(l));
  out.reserve(16 + 4 * d * l);
  for (std::size_t frame = 0; frame < l; ++frame) {
    for (std::size_t c = 0; c < d; ++c) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(features[c * l + frame])));
    }
  }
  return out;
}

Tensor load_features(const std::filesystem::path& path) { return decode_features(read_file(path)); }

void save_features(const std::filesystem::path& path, const Tensor& features) {
  write_file(path, encode_features(features));
}

// ---------------------------------------------------------------------------

namespace {

Buffer cut_buffer(const VideoRecord& record, std::int64_t start, std::int64_t valid, std::int64_t buf_len,
                  Direction dir) {
  Buffer b;
  b.video_id = record.video_id;
  b.frame_offset = start;
  b.direction = dir;
  b.valid_len = valid;
  const std::size_t d = record.features.defined() ? record.features.dim(0) : 0;
  const std::size_t l = static_cast<std::size_t>(record.num_frames);
  std::vector<double> values(d * static_cast<std::size_t>(buf_len), 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::int64_t t = 0; t < valid; ++t) {
      values[c * static_cast<std::size_t>(buf_len) + static_cast<std::size_t>(t)] =
          record.features[c * l + static_cast<std::size_t>(start + t)];
    }
  }
  b.features = Tensor::from({d, static_cast<std::size_t>(buf_len)}, std::move(values));
  const double lo = static_cast<double>(start), hi = static_cast<double>(start + valid);
  for (const auto& a : record.annotations) {
    const double s = std::max(a.t_start, lo), e = std::min(a.t_end, hi);
    if (!(e > s)) continue;
    if ((e - s) < kClipRetention * a.length()) continue;
    b.annotations.push_back({s - lo, e - lo, a.label});
  }
  return b;
}

}  // namespace

std::vector<Buffer> make_buffers(const VideoRecord& record, std::int64_t buf_len, bool include_backward) {
  if (buf_len <= 0 || buf_len % 32 != 0) {
    throw ConfigError("buffer length " + std::to_string(buf_len) + " must be a positive multiple of 32");
  }
  const std::int64_t len = record.num_frames;
  std::vector<Buffer> out;
  if (len == 0) {
    out.push_back(cut_buffer(record, 0, 0, buf_len, Direction::kForward));
    return out;
  }
  for (std::int64_t off = 0; off < len; off += buf_len) {
    out.push_back(cut_buffer(record, off, std::min(buf_len, len - off), buf_len, Direction::kForward));
  }
  if (include_backward) {
    for (std::int64_t end = len; end > 0; end -= buf_len) {
      const std::int64_t start = std::max<std::int64_t>(0, end - buf_len);
      out.push_back(cut_buffer(record, start, end - start, buf_len, Direction::kBackward));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  if (num_videos < 0 || num_val < 0 || num_val > num_videos) throw ConfigError("data: invalid num_videos/num_val");
  if (video_length < 0) throw ConfigError("data.video_length must be nonnegative");
  if (feature_dim <= 0) throw ConfigError("data.feature_dim must be positive");
  if (num_classes <= 0 || num_classes > 99) throw ConfigError("data.num_classes must lie in [1, 99]");
  if (noise_sigma < 0.0) throw ConfigError("data.noise_sigma must be nonnegative");
  if (!(fps > 0.0)) throw ConfigError("data.fps must be positive");
  if (duration_bands.empty()) throw ConfigError("data.duration_bands must not be empty");
  double total = 0.0;
  for (std::size_t i = 0; i < duration_bands.size(); ++i) {
    const auto& b = duration_bands[i];
    if (!(b.min_len >= 1.0 && b.max_len >= b.min_len && b.weight >= 0.0)) {
      throw ConfigError("data.duration_bands[" + std::to_string(i) + "] is invalid");
    }
    for (std::size_t j = 0; j < i; ++j) {
      const auto& o = duration_bands[j];
      if (b.min_len <= o.max_len && o.min_len <= b.max_len) throw ConfigError("data.duration_bands overlap");
    }
    total += b.weight;
  }
  if (!(total > 0.0)) throw ConfigError("data.duration_bands weights sum to zero");
  if (instances_per_video.first < 0 || instances_per_video.second < instances_per_video.first) {
    throw ConfigError("data.instances_per_video must be an increasing [min, max] pair");
  }
}

std::int64_t sample_duration(const std::vector<DurationBand>& bands, Rng& rng, std::size_t* band_out) {
  double total = 0.0;
  for (const auto& b : bands) total += b.weight;
  double u = rng.uniform() * total;
  std::size_t k = 0;
  for (; k + 1 < bands.size(); ++k) {
    if (u < bands[k].weight) break;
    u -= bands[k].weight;
  }
  if (band_out) *band_out = k;
  const auto lo = static_cast<std::int64_t>(std::ceil(bands[k].min_len));
  const auto hi = static_cast<std::int64_t>(std::floor(bands[k].max_len));
  return rng.integer(lo, hi);
}

SyntheticDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticDataset out;
  std::vector<std::string> names;
  for (int c = 1; c <= cfg.num_classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%02d", c);
    names.emplace_back(buf);
  }
  out.labels = LabelIndex(names);

  const std::size_t dim = static_cast<std::size_t>(cfg.feature_dim);
  for (int c = 0; c < cfg.num_classes; ++c) {
    std::vector<double> u(dim);
    double norm = 0.0;
    for (double& x : u) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : u) x /= norm;
    out.signatures.push_back(std::move(u));
  }

  const std::int64_t len = cfg.video_length;
  for (int v = 0; v < cfg.num_videos; ++v) {
    char vid[32];
    std::snprintf(vid, sizeof vid, "video_%04d", v);
    VideoRecord rec;
    rec.video_id = vid;
    rec.num_frames = len;
    rec.fps = cfg.fps;
    rec.subset = v < cfg.num_videos - cfg.num_val ? "train" : "val";

    const int count = static_cast<int>(rng.integer(cfg.instances_per_video.first, cfg.instances_per_video.second));
    std::vector<std::size_t> bands(static_cast<std::size_t>(count));
    for (auto& b : bands) sample_duration(cfg.duration_bands, rng, &b);
    // Longest bands first so that crowded videos still pack.
    std::sort(bands.begin(), bands.end(), std::greater<>());

    // A crowded layout redraws the instance's band after kRedrawAfter
    // consecutive collisions; kMaxRejections per video is a hard limit.
    constexpr int kRedrawAfter = 100;
    std::vector<Activity> placed;
    int rejections = 0;
    for (std::size_t band : bands) {
      int streak = 0;
      while (true) {
        const auto& db = cfg.duration_bands[band];
        const std::int64_t l = rng.integer(static_cast<std::int64_t>(std::ceil(db.min_len)),
                                           static_cast<std::int64_t>(std::floor(db.max_len)));
        bool ok = l <= len;
        std::int64_t s = 0;
        if (ok) {
          s = rng.integer(0, len - l);
          for (const auto& p : placed) {
            if (!(static_cast<double>(s) >= p.t_end + kMinGap || static_cast<double>(s + l) + kMinGap <= p.t_start)) {
              ok = false;
              break;
            }
          }
        }
        if (ok) {
          placed.push_back({static_cast<double>(s), static_cast<double>(s + l), 0});
          break;
        }
        if (++rejections >= kMaxRejections) {
          throw ConfigError("synthetic placement failed for " + rec.video_id + " after " +
                            std::to_string(kMaxRejections) +
                            " rejections; request fewer instances_per_video or longer videos");
        }
        if (++streak == kRedrawAfter) {
          sample_duration(cfg.duration_bands, rng, &band);
          streak = 0;
        }
      }
    }
    std::sort(placed.begin(), placed.end(), [](const Activity& a, const Activity& b) { return a.t_start < b.t_start; });
    for (auto& a : placed) a.label = static_cast<int>(rng.integer(1, cfg.num_classes));

    std::vector<double> values(dim * static_cast<std::size_t>(len));
    for (double& x : values) x = cfg.noise_sigma > 0.0 ? rng.normal(0.0, cfg.noise_sigma) : 0.0;
    for (const auto& a : placed) {
      const auto& u = out.signatures[static_cast<std::size_t>(a.label - 1)];
      for (auto t = static_cast<std::size_t>(a.t_start); t < static_cast<std::size_t>(a.t_end); ++t) {
        for (std::size_t c = 0; c < dim; ++c) values[c * static_cast<std::size_t>(len) + t] += cfg.signal_amplitude * u[c];
      }
    }
    for (double& x : values) x = round_f32(x);
    rec.features = Tensor::from({dim, static_cast<std::size_t>(len)}, std::move(values));
    rec.annotations = std::move(placed);
    out.videos.push_back(std::move(rec));
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data) {
  std::filesystem::create_directories(dir / "features");
  AnnotationSet set;
  set.labels = data.labels;
  for (const auto& rec : data.videos) {
    set.videos[rec.video_id] = {rec.video_id, rec.fps, rec.num_frames, rec.subset, rec.annotations};
    save_features(dir / "features" / (rec.video_id + ".tfpv"), rec.features);
  }
  save_annotations(dir / "annotations.json", set);
  save_label_index(dir / "labels.json", data.labels);
}

std::vector<const VideoRecord*> Dataset::subset(const std::string& name) const {
  std::vector<const VideoRecord*> out;
  for (const auto& v : videos) {
    if (v.subset == name) out.push_back(&v);
  }
  return out;
}

AnnotationSet Dataset::annotations() const {
  AnnotationSet set;
  set.labels = labels;
  for (const auto& rec : videos) {
    set.videos[rec.video_id] = {rec.video_id, rec.fps, rec.num_frames, rec.subset, rec.annotations};
  }
  return set;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.labels = load_label_index(dir / "labels.json");
  const AnnotationSet set = load_annotations(dir / "annotations.json", &ds.labels);
  std::size_t dim = 0;
  for (const auto& [vid, meta] : set.videos) {
    VideoRecord rec;
    rec.video_id = vid;
    rec.num_frames = meta.num_frames;
    rec.fps = meta.fps;
    rec.subset = meta.subset;
    rec.annotations = meta.annotations;
    rec.features = load_features(dir / "features" / (vid + ".tfpv"));
    if (static_cast<std::int64_t>(rec.features.dim(1)) != rec.num_frames) {
      throw FormatError(vid + ": feature length " + std::to_string(rec.features.dim(1)) +
                        " != num_frames " + std::to_string(rec.num_frames));
    }
    if (dim == 0) dim = rec.features.dim(0);
    if (rec.features.dim(0) != dim) throw FormatError(vid + ": inconsistent feature dimension");
    ds.videos.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace tfpdet::datakit
