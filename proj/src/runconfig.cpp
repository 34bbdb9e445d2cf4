#include "tfpdet/runconfig.hpp"

#include <regex>
#include <set>

#include "tfpdet/error.hpp"
#include "tfpdet/io.hpp"

namespace tfpdet::cli {

using nlohmann::json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed parsing assumes a 64-bit size_t");

namespace {

// Walks one JSON object, tracking which keys were consumed so that leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return doc_.contains(key); }
  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (const json* v = raw(key)) convert(*v, key_path(key), out);
  }

  void finish() const {
    for (const auto& [k, v] : doc_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + key_path(k) + "'");
    }
  }

 private:
  static void convert(const json& v, const std::string& p, double& out) {
    if (!v.is_number()) throw ConfigError(p + ": expected a number");
    out = v.get<double>();
  }
  static void convert(const json& v, const std::string& p, bool& out) {
    if (!v.is_boolean()) throw ConfigError(p + ": expected true or false");
    out = v.get<bool>();
  }
  static void convert(const json& v, const std::string& p, std::string& out) {
    if (!v.is_string()) throw ConfigError(p + ": expected a string");
    out = v.get<std::string>();
  }
  static void convert(const json& v, const std::string& p, std::size_t& out) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(p + ": expected a nonnegative integer");
    out = v.get<std::size_t>();
  }
  static void convert(const json& v, const std::string& p, std::int64_t& out) {
    if (!v.is_number_integer()) throw ConfigError(p + ": expected an integer");
    out = v.get<std::int64_t>();
  }
  static void convert(const json& v, const std::string& p, int& out) {
    if (!v.is_number_integer()) throw ConfigError(p + ": expected an integer");
    out = v.get<int>();
  }
  template <class T>
  static void convert(const json& v, const std::string& p, std::vector<T>& out) {
    if (!v.is_array()) throw ConfigError(p + ": expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T item{};
      convert(v[i], p + "[" + std::to_string(i) + "]", item);
      out.push_back(std::move(item));
    }
  }

  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Fn>
void with_section(Section& root, const std::string& name, Fn fn) {
  const json* v = root.raw(name);
  if (!v) return;
  Section s(*v, name);
  fn(s);
  s.finish();
}

void read_data(Section& s, datakit::SynthConfig& d) {
  s.read("num_videos", d.num_videos);
  s.read("num_val", d.num_val);
  s.read("video_length", d.video_length);
  s.read("feature_dim", d.feature_dim);
  s.read("num_classes", d.num_classes);
  s.read("noise_sigma", d.noise_sigma);
  s.read("signal_amplitude", d.signal_amplitude);
  s.read("fps", d.fps);
  s.read("seed", d.seed);
  std::vector<std::vector<double>> bands;
  if (s.has("duration_bands")) {
    s.read("duration_bands", bands);
    d.duration_bands.clear();
    for (std::size_t i = 0; i < bands.size(); ++i) {
      if (bands[i].size() != 3) throw ConfigError("data.duration_bands[" + std::to_string(i) + "]: expected [min, max, weight]");
      d.duration_bands.push_back({bands[i][0], bands[i][1], bands[i][2]});
    }
  }
  if (s.has("instances_per_video")) {
    std::vector<int> pair;
    s.read("instances_per_video", pair);
    if (pair.size() != 2) throw ConfigError("data.instances_per_video: expected [min, max]");
    d.instances_per_video = {pair[0], pair[1]};
  }
}

}  // namespace

std::vector<std::vector<double>> scales_for_levels(std::size_t num_levels) {
  if (num_levels == 1) return {anchorkit::single_level_scales()};
  auto all = anchorkit::default_scales();
  if (num_levels < all.size()) all.resize(num_levels);
  return all;
}

pipeline::ModelConfig RunConfig::model() const {
  pipeline::ModelConfig m;
  m.encoder = encoder;
  m.pyramid = pyramid;
  m.apn = apn;
  m.acn = acn;
  m.buffer_len = train.buffer_len;
  return m;
}

void RunConfig::validate() const {
  data.validate();
  model().validate();
  train.validate(pyramid.num_levels);
  eval.metrics.validate();
  if (eval.subset.empty()) throw ConfigError("eval.subset must not be empty");
  if (ablate.max_steps < 0) throw ConfigError("ablate.max_steps must be nonnegative");
  for (const auto& v : ablate.variants) {
    RunConfig probe = *this;
    apply_variant(probe, v);
  }
}

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  Section root(doc, "");
  bool explicit_input_dim = false, explicit_classes = false, explicit_scales = false;

  with_section(root, "data", [&](Section& s) { read_data(s, cfg.data); });
  with_section(root, "encoder", [&](Section& s) {
    explicit_input_dim = s.has("input_dim");
    s.read("input_dim", cfg.encoder.input_dim);
    s.read("hidden_dim", cfg.encoder.hidden_dim);
    s.read("num_blocks", cfg.encoder.num_blocks);
  });
  with_section(root, "pyramid", [&](Section& s) {
    std::string variant = pyramid::to_string(cfg.pyramid.variant);
    s.read("variant", variant);
    cfg.pyramid.variant = pyramid::downsample_from_string(variant);
    s.read("num_levels", cfg.pyramid.num_levels);
  });
  with_section(root, "apn", [&](Section& s) {
    explicit_scales = s.has("scales");
    s.read("scales", cfg.apn.scales);
    s.read("nms_tiou", cfg.apn.nms_tiou);
    s.read("top_k", cfg.apn.top_k);
    s.read("batch", cfg.apn.batch);
    s.read("pos_fraction", cfg.apn.pos_fraction);
    s.read("pos_iou", cfg.apn.pos_iou);
    s.read("neg_iou", cfg.apn.neg_iou);
  });
  with_section(root, "acn", [&](Section& s) {
    std::string strategy = heads::to_string(cfg.acn.strategy);
    s.read("strategy", strategy);
    cfg.acn.strategy = heads::strategy_from_string(strategy);
    s.read("use_context", cfg.acn.use_context);
    s.read("roi_bins", cfg.acn.roi_bins);
    s.read("fc_dim", cfg.acn.fc_dim);
    explicit_classes = s.has("num_classes");
    s.read("num_classes", cfg.acn.num_classes);
    s.read("batch", cfg.acn.batch);
    s.read("fg_fraction", cfg.acn.fg_fraction);
    s.read("fg_iou", cfg.acn.fg_iou);
    s.read("score_thresh", cfg.acn.score_thresh);
    s.read("nms_tiou", cfg.acn.nms_tiou);
  });
  with_section(root, "train", [&](Section& s) {
    auto& t = cfg.train;
    s.read("learning_rate", t.sgd.learning_rate);
    s.read("momentum", t.sgd.momentum);
    s.read("weight_decay", t.sgd.weight_decay);
    s.read("lr_decay_factor", t.sgd.lr_decay_factor);
    s.read("lr_decay_every", t.sgd.lr_decay_every);
    s.read("max_steps", t.max_steps);
    s.read("buffer_len", t.buffer_len);
    s.read("checkpoint_every", t.checkpoint_every);
    s.read("gt_as_proposals", t.gt_as_proposals);
    if (const json* lw = s.raw("loss_weights")) {
      Section w(*lw, "train.loss_weights");
      w.read("gamma", t.loss_weights.gamma);
      w.read("lambda", t.loss_weights.lambda);
      w.finish();
    }
  });
  with_section(root, "eval", [&](Section& s) {
    std::string preset = cfg.eval.metrics.preset;
    s.read("preset", preset);
    cfg.eval.metrics = evalkit::EvalConfig::from_preset(preset);
    s.read("tiou_thresholds", cfg.eval.metrics.tiou_thresholds);
    s.read("average_grid", cfg.eval.metrics.average_grid);
    s.read("proposal_budget", cfg.eval.metrics.proposal_budget);
    s.read("ar_tiou_grid", cfg.eval.metrics.ar_tiou_grid);
    s.read("subset", cfg.eval.subset);
  });
  with_section(root, "ablate", [&](Section& s) {
    s.read("variants", cfg.ablate.variants);
    s.read("max_steps", cfg.ablate.max_steps);
  });
  root.read("seed", cfg.seed);
  root.finish();

  if (!explicit_input_dim) cfg.encoder.input_dim = static_cast<std::size_t>(cfg.data.feature_dim);
  if (!explicit_classes) cfg.acn.num_classes = static_cast<std::size_t>(cfg.data.num_classes);
  if (!explicit_scales) cfg.apn.scales = scales_for_levels(cfg.pyramid.num_levels);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (path.empty()) return parse_run_config(json::object());
  try {
    return parse_run_config(io::parse_strict(io::read_file(path), path.string()));
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

json to_json(const RunConfig& c) {
  json bands = json::array();
  for (const auto& b : c.data.duration_bands) bands.push_back({b.min_len, b.max_len, b.weight});
  const auto& t = c.train;
  const auto& m = c.eval.metrics;
  return json{
      {"data",
       {{"num_videos", c.data.num_videos},
        {"num_val", c.data.num_val},
        {"video_length", c.data.video_length},
        {"feature_dim", c.data.feature_dim},
        {"num_classes", c.data.num_classes},
        {"noise_sigma", c.data.noise_sigma},
        {"signal_amplitude", c.data.signal_amplitude},
        {"fps", c.data.fps},
        {"seed", c.data.seed},
        {"duration_bands", bands},
        {"instances_per_video", {c.data.instances_per_video.first, c.data.instances_per_video.second}}}},
      {"encoder",
       {{"input_dim", c.encoder.input_dim}, {"hidden_dim", c.encoder.hidden_dim}, {"num_blocks", c.encoder.num_blocks}}},
      {"pyramid", {{"variant", pyramid::to_string(c.pyramid.variant)}, {"num_levels", c.pyramid.num_levels}}},
      {"apn",
       {{"scales", c.apn.scales},
        {"nms_tiou", c.apn.nms_tiou},
        {"top_k", c.apn.top_k},
        {"batch", c.apn.batch},
        {"pos_fraction", c.apn.pos_fraction},
        {"pos_iou", c.apn.pos_iou},
        {"neg_iou", c.apn.neg_iou}}},
      {"acn",
       {{"strategy", heads::to_string(c.acn.strategy)},
        {"use_context", c.acn.use_context},
        {"roi_bins", c.acn.roi_bins},
        {"fc_dim", c.acn.fc_dim},
        {"num_classes", c.acn.num_classes},
        {"batch", c.acn.batch},
        {"fg_fraction", c.acn.fg_fraction},
        {"fg_iou", c.acn.fg_iou},
        {"score_thresh", c.acn.score_thresh},
        {"nms_tiou", c.acn.nms_tiou}}},
      {"train",
       {{"learning_rate", t.sgd.learning_rate},
        {"momentum", t.sgd.momentum},
        {"weight_decay", t.sgd.weight_decay},
        {"lr_decay_factor", t.sgd.lr_decay_factor},
        {"lr_decay_every", t.sgd.lr_decay_every},
        {"max_steps", t.max_steps},
        {"buffer_len", t.buffer_len},
        {"checkpoint_every", t.checkpoint_every},
        {"gt_as_proposals", t.gt_as_proposals},
        {"loss_weights", {{"gamma", t.loss_weights.gamma}, {"lambda", t.loss_weights.lambda}}}}},
      {"eval",
       {{"preset", m.preset},
        {"tiou_thresholds", m.tiou_thresholds},
        {"average_grid", m.average_grid},
        {"proposal_budget", m.proposal_budget},
        {"ar_tiou_grid", m.ar_tiou_grid},
        {"subset", c.eval.subset}}},
      {"ablate", {{"variants", c.ablate.variants}, {"max_steps", c.ablate.max_steps}}},
      {"seed", c.seed}};
}

void apply_variant(RunConfig& cfg, const std::string& name) {
  if (name == "RC3D") {
    cfg.pyramid.num_levels = 1;
    cfg.apn.scales = scales_for_levels(1);
    cfg.acn.strategy = heads::Strategy::kS1;
    cfg.acn.use_context = false;
    cfg.train.loss_weights.gamma.resize(cfg.train.loss_weights.gamma.empty() ? 0 : 1);
    cfg.train.loss_weights.lambda.resize(cfg.train.loss_weights.lambda.empty() ? 0 : 1);
    return;
  }
  static const std::regex pattern(R"(MS\((MAX|CONV)\)\((S1|S2|S3)\)(\(CTX\))?)");
  std::smatch m;
  if (!std::regex_match(name, m, pattern)) {
    throw ConfigError("unknown ablation variant '" + name + "' (expected RC3D or MS(MAX|CONV)(S1|S2|S3)[(CTX)])");
  }
  cfg.pyramid.variant = pyramid::downsample_from_string(m[1].str());
  cfg.acn.strategy = heads::strategy_from_string(m[2].str());
  cfg.acn.use_context = m[3].matched;
  if (cfg.pyramid.num_levels < 2) {
    cfg.pyramid.num_levels = 3;
    cfg.apn.scales = scales_for_levels(3);
  }
}

}  // namespace tfpdet::cli
