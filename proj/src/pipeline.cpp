#include "tfpdet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "tfpdet/error.hpp"
#include "tfpdet/io.hpp"

namespace tfpdet::pipeline {

using anchorkit::AnchorLabel;
using anchorkit::Segment;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void LossWeights::validate(std::size_t num_levels) const {
  for (const auto* v : {&gamma, &lambda}) {
    if (!v->empty() && v->size() != num_levels) {
      throw ConfigError("train.loss_weights: expected " + std::to_string(num_levels) + " per-level weights, got " +
                        std::to_string(v->size()));
    }
  }
  for (double g : gamma)
    if (!(g > 0.0)) throw ConfigError("train.loss_weights.gamma must be positive");
  for (double l : lambda)
    if (!(l >= 0.0)) throw ConfigError("train.loss_weights.lambda must be nonnegative");
}

TrainConfig TrainConfig::paper_preset() {
  TrainConfig t;
  t.sgd.learning_rate = 1e-4;
  t.sgd.lr_decay_every = 100000;
  t.max_steps = 150000;
  t.checkpoint_every = 10000;
  return t;
}

void TrainConfig::validate(std::size_t num_levels) const {
  sgd.validate();
  if (max_steps < 0) throw ConfigError("train.max_steps must be nonnegative");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be nonnegative");
  if (buffer_len <= 0 || buffer_len % 32 != 0) throw ConfigError("train.buffer_len must be a positive multiple of 32");
  loss_weights.validate(num_levels);
}

void ModelConfig::validate() const {
  encoder.validate();
  pyramid.validate();
  apn.validate(pyramid.num_levels);
  acn.validate();
  if (buffer_len <= 0 || buffer_len % 32 != 0) throw ConfigError("buffer length must be a positive multiple of 32");
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  pyramid::add_encoder_params(params_, cfg_.encoder);
  pyramid::add_pyramid_params(params_, cfg_.pyramid, cfg_.encoder.hidden_dim);
  heads::add_apn_params(params_, cfg_.apn, cfg_.encoder.hidden_dim);
  heads::add_acn_params(params_, cfg_.acn, cfg_.encoder.hidden_dim, cfg_.pyramid.num_levels);
  grid_ = anchorkit::build_anchor_grid(static_cast<int>(cfg_.buffer_len),
                                       pyramid::level_strides(cfg_.encoder, cfg_.pyramid), cfg_.apn.scales);
}

Model::Forward Model::forward(const Tensor& features) const {
  Forward f;
  const Tensor base = pyramid::encode(features, cfg_.encoder, params_);
  f.pyr = pyramid::build_pyramid(base, cfg_.pyramid, static_cast<int>(cfg_.encoder.stride()), params_);
  f.apn = heads::apn_forward(f.pyr, params_);
  return f;
}

// ---------------------------------------------------------------------------
// Objective

namespace {

double weight_at(const std::vector<double>& w, std::size_t k) { return w.empty() ? 1.0 : w[k]; }

void accumulate(const BranchTerms& terms, const LossWeights& w, Tensor& total, bool& any, std::vector<double>& level) {
  level.assign(std::max(terms.cls.size(), terms.loc.size()), 0.0);
  for (std::size_t k = 0; k < level.size(); ++k) {
    const bool has_cls = k < terms.cls.size() && terms.cls[k].defined();
    const bool has_loc = k < terms.loc.size() && terms.loc[k].defined();
    if (!has_cls && !has_loc) continue;
    Tensor inner;
    if (has_cls) inner = terms.cls[k];
    if (has_loc) {
      const Tensor loc = numcore::scale(terms.loc[k], weight_at(w.lambda, k));
      inner = inner.defined() ? numcore::add(inner, loc) : loc;
    }
    const Tensor term = numcore::scale(inner, weight_at(w.gamma, k));
    level[k] = term.item();
    total = any ? numcore::add(total, term) : term;
    any = true;
  }
}

}  // namespace

JointLoss joint_loss(const BranchTerms& apn, const BranchTerms& acn, const LossWeights& w) {
  JointLoss out;
  bool any = false;
  accumulate(apn, w, out.total, any, out.apn_level);
  accumulate(acn, w, out.total, any, out.acn_level);
  if (!any) throw ContractError("joint_loss: no sampled items on either network");
  return out;
}

json StepReport::to_json() const {
  return json{{"step", step},       {"lr", lr},           {"loss", total},      {"apn_cls", apn_cls},
              {"apn_loc", apn_loc}, {"acn_cls", acn_cls}, {"acn_loc", acn_loc}, {"apn_pos", apn_pos},
              {"apn_neg", apn_neg}, {"acn_fg", acn_fg},   {"acn_bg", acn_bg}};
}

// ---------------------------------------------------------------------------
// Training

Trainer::Trainer(ModelConfig model_cfg, TrainConfig train_cfg, std::uint64_t seed)
    : model_(std::move(model_cfg)), train_cfg_(std::move(train_cfg)), rng_(seed) {
  train_cfg_.validate(model_.num_levels());
  if (train_cfg_.buffer_len != model_.config().buffer_len) {
    throw ConfigError("train.buffer_len disagrees with the model buffer length");
  }
  model_.initialize(rng_);
}

namespace {

double item_or_zero(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

// Pyramid level whose anchors fit a segment best.
int best_level(const anchorkit::AnchorGrid& grid, const Segment& s) {
  double best = -1.0;
  int level = 0;
  for (const auto& a : grid.anchors) {
    const double v = anchorkit::tiou(a.segment, s);
    if (v > best) {
      best = v;
      level = a.level;
    }
  }
  return level;
}

}  // namespace

Trainer::Evaluated Trainer::evaluate(const datakit::Buffer& buffer) {
  if (!buffer.features.defined() || buffer.features.numel() == 0) {
    throw ContractError("train_step: buffer of " + buffer.video_id + " has no features");
  }
  const ModelConfig& mc = model_.config();
  const auto& grid = model_.grid();
  const std::size_t levels = model_.num_levels();
  const Model::Forward fwd = model_.forward(buffer.features);

  std::vector<Segment> gts;
  std::vector<int> gt_labels;
  for (const auto& a : buffer.annotations) {
    gts.push_back({a.t_start, a.t_end});
    gt_labels.push_back(a.label);
  }

  StepReport rep;
  for (auto* v : {&rep.apn_cls, &rep.apn_loc, &rep.acn_cls, &rep.acn_loc}) v->assign(levels, 0.0);
  for (auto* v : {&rep.apn_pos, &rep.apn_neg, &rep.acn_fg, &rep.acn_bg}) v->assign(levels, 0);
  BranchTerms apn{std::vector<Tensor>(levels), std::vector<Tensor>(levels)};
  BranchTerms acn{std::vector<Tensor>(levels), std::vector<Tensor>(levels)};

  // Proposal network: joint matching, per-level sampling.
  const auto match = anchorkit::match_anchors_apn(grid, gts, {mc.apn.pos_iou, mc.apn.neg_iou});
  for (std::size_t k = 0; k < levels; ++k) {
    const std::size_t off = grid.level_offset(k);
    const std::span<const AnchorLabel> labels(match.labels.data() + off, grid.level_size(k));
    if (std::none_of(labels.begin(), labels.end(), [](AnchorLabel l) { return l != AnchorLabel::kIgnore; })) continue;
    const auto pick = anchorkit::sample_minibatch(labels, mc.apn.batch, mc.apn.pos_fraction, rng_);
    std::vector<std::size_t> cls_idx, reg_idx;
    std::vector<int> y;
    std::vector<double> targets;
    for (std::size_t i : pick) {
      const std::size_t a = off + i;
      const auto [s0, s1] = heads::anchor_slots(grid, a);
      cls_idx.insert(cls_idx.end(), {s0, s1});
      const bool pos = labels[i] == AnchorLabel::kPositive;
      y.push_back(pos ? 1 : 0);
      if (pos) {
        reg_idx.insert(reg_idx.end(), {s0, s1});
        targets.insert(targets.end(), {match.targets[a].center, match.targets[a].log_length});
      }
    }
    const std::size_t n_pos = reg_idx.size() / 2;
    rep.apn_pos[k] = n_pos;
    rep.apn_neg[k] = pick.size() - n_pos;
    apn.cls[k] = numcore::softmax_cross_entropy(numcore::gather(fwd.apn[k].cls, cls_idx, {pick.size(), 2}), y);
    if (n_pos > 0) {
      apn.loc[k] = numcore::smooth_l1(numcore::gather(fwd.apn[k].reg, reg_idx, {n_pos, 2}),
                                      Tensor::from({n_pos, 2}, std::move(targets)));
    }
    rep.apn_cls[k] = item_or_zero(apn.cls[k]);
    rep.apn_loc[k] = item_or_zero(apn.loc[k]);
  }

  // Classification network on detached proposal geometry.
  const double buf_len = static_cast<double>(mc.buffer_len);
  const double clip = buffer.valid_len > 0 ? static_cast<double>(buffer.valid_len) : buf_len;
  auto props = heads::generate_proposals(fwd.apn, grid, clip, mc.apn.nms_tiou, mc.apn.top_k);
  if (train_cfg_.gt_as_proposals) {
    for (const auto& g : gts) props.push_back({g, 1.0, best_level(grid, g)});
  }
  const auto routes = heads::assign_levels(props, mc.acn.strategy, levels);
  const std::size_t c = mc.acn.num_classes;
  for (std::size_t k = 0; k < levels; ++k) {
    if (routes[k].empty()) continue;
    std::vector<Segment> segs;
    for (std::size_t i : routes[k]) segs.push_back(props[i].segment);
    const auto pm = anchorkit::match_proposals_acn(segs, gts, gt_labels, mc.acn.fg_iou);
    std::vector<AnchorLabel> labels;
    for (int l : pm.labels) labels.push_back(l > 0 ? AnchorLabel::kPositive : AnchorLabel::kNegative);
    const auto pick = anchorkit::sample_minibatch(labels, mc.acn.batch, mc.acn.fg_fraction, rng_);
    std::vector<Segment> chosen;
    std::vector<int> y;
    for (std::size_t i : pick) {
      chosen.push_back(segs[i]);
      y.push_back(pm.labels[i]);
    }
    const auto out = heads::acn_level_forward(fwd.pyr, k, chosen, buf_len, mc.acn, model_.params());
    acn.cls[k] = numcore::softmax_cross_entropy(out.cls, y);
    std::vector<std::size_t> reg_idx;
    std::vector<double> targets;
    for (std::size_t r = 0; r < pick.size(); ++r) {
      if (y[r] <= 0) continue;
      const std::size_t col = 2 * static_cast<std::size_t>(y[r] - 1);
      reg_idx.insert(reg_idx.end(), {r * 2 * c + col, r * 2 * c + col + 1});
      const auto& t = pm.targets[pick[r]];
      targets.insert(targets.end(), {t.center, t.log_length});
    }
    const std::size_t n_fg = reg_idx.size() / 2;
    rep.acn_fg[k] = n_fg;
    rep.acn_bg[k] = pick.size() - n_fg;
    if (n_fg > 0) {
      acn.loc[k] = numcore::smooth_l1(numcore::gather(out.reg, reg_idx, {n_fg, 2}),
                                      Tensor::from({n_fg, 2}, std::move(targets)));
    }
    rep.acn_cls[k] = item_or_zero(acn.cls[k]);
    rep.acn_loc[k] = item_or_zero(acn.loc[k]);
  }

  Evaluated ev{joint_loss(apn, acn, train_cfg_.loss_weights), std::move(rep)};
  ev.report.total = ev.loss.total.item();
  ev.report.step = step_;
  ev.report.lr = train_cfg_.sgd.lr_at(step_);
  return ev;
}

StepReport Trainer::train_step(const datakit::Buffer& buffer) {
  model_.params().zero_grad();
  Evaluated ev = evaluate(buffer);
  numcore::backward(ev.loss.total);
  numcore::sgd_step(model_.params(), train_cfg_.sgd, step_, sgd_);
  ++step_;
  return std::move(ev.report);
}

StepReport Trainer::train_step(const std::vector<std::vector<datakit::Buffer>>& buffers_per_video) {
  if (buffers_per_video.empty()) throw ContractError("train_step: no training videos");
  const auto& bufs = buffers_per_video[rng_.index(buffers_per_video.size())];
  if (bufs.empty()) throw ContractError("train_step: video without buffers");
  return train_step(bufs[rng_.index(bufs.size())]);
}

// ---------------------------------------------------------------------------
// Inference

VideoResult infer_buffer(const datakit::Buffer& buffer, const Model& model) {
  numcore::NoGradGuard no_grad;
  VideoResult res;
  res.video_id = buffer.video_id;
  if (buffer.valid_len <= 0) return res;
  const ModelConfig& mc = model.config();
  const double clip = static_cast<double>(buffer.valid_len);
  const double shift = static_cast<double>(buffer.frame_offset);
  const auto fwd = model.forward(buffer.features);
  const auto props = heads::generate_proposals(fwd.apn, model.grid(), clip, mc.apn.nms_tiou, mc.apn.top_k);
  for (const auto& p : props) res.proposals.push_back({{p.segment.start + shift, p.segment.end + shift}, p.objectness});
  if (props.empty()) return res;
  const auto acn = heads::acn_forward(fwd.pyr, props, static_cast<double>(mc.buffer_len), mc.acn, model.params());
  res.detections = heads::finalize_detections(acn, props, mc.acn, clip, buffer.frame_offset, buffer.video_id);
  return res;
}

VideoResult merge_buffer_results(const std::string& video_id, const std::vector<VideoResult>& parts, double nms_tiou) {
  VideoResult res;
  res.video_id = video_id;
  for (const auto& part : parts) {
    res.detections.insert(res.detections.end(), part.detections.begin(), part.detections.end());
    res.proposals.insert(res.proposals.end(), part.proposals.begin(), part.proposals.end());
  }
  res.detections = heads::classwise_nms(std::move(res.detections), nms_tiou);
  std::stable_sort(res.proposals.begin(), res.proposals.end(),
                   [](const ScoredSegment& a, const ScoredSegment& b) { return a.score > b.score; });
  return res;
}

VideoResult infer_video(const datakit::VideoRecord& record, const Model& model) {
  std::vector<VideoResult> parts;
  for (const auto& buf : datakit::make_buffers(record, model.config().buffer_len, false)) {
    parts.push_back(infer_buffer(buf, model));
  }
  return merge_buffer_results(record.video_id, parts, model.config().acn.nms_tiou);
}

unsigned worker_threads() {
  if (const char* env = std::getenv("TFPDET_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<VideoResult> infer_videos(const std::vector<const datakit::VideoRecord*>& records, const Model& model,
                                      unsigned threads) {
  std::vector<VideoResult> out(records.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) out[i] = infer_video(*records[i], model);
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(records.size())));
  if (n <= 1) {
    work();
    return out;
  }
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
  pool.clear();
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'T', 'F', 'P', 'M'};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.names.size() != ckpt.shapes.size() || ckpt.names.size() != ckpt.values.size()) {
    throw ContractError("checkpoint: manifest and payload counts differ");
  }
  if (!ckpt.velocity.empty() && ckpt.velocity.size() != ckpt.values.size()) {
    throw ContractError("checkpoint: momentum buffers do not match parameters");
  }
  json manifest = json::array();
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
    if (numcore::shape_numel(ckpt.shapes[i]) != ckpt.values[i].size()) {
      throw ContractError("checkpoint: payload of " + ckpt.names[i] + " does not match its shape");
    }
    manifest.push_back({{"name", ckpt.names[i]}, {"shape", ckpt.shapes[i]}});
  }
  const json header{{"config", ckpt.config},
                    {"step", ckpt.step},
                    {"rng_state", ckpt.rng_state},
                    {"params", manifest},
                    {"has_velocity", !ckpt.velocity.empty()}};
  const std::string text = header.dump();
  std::string out(kMagic, 4);
  io::put_u32(out, kCheckpointVersion);
  io::put_u64(out, text.size());
  out += text;
  for (const auto& v : ckpt.values)
    for (double x : v) io::put_f64(out, x);
  for (const auto& v : ckpt.velocity)
    for (double x : v) io::put_f64(out, x);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = io::get_u32(bytes, 4);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: version " + std::to_string(version) + " is not supported");
  }
  const std::uint64_t hlen = io::get_u64(bytes, 8);
  if (hlen > bytes.size() - 16) throw FormatError("checkpoint: truncated header");
  const json header = io::parse_strict(bytes.substr(16, hlen), "checkpoint header");
  Checkpoint ck;
  std::size_t at = 16 + hlen;
  std::size_t total = 0;
  try {
    ck.config = header.at("config");
    ck.step = header.at("step").get<std::int64_t>();
    ck.rng_state = header.at("rng_state").get<std::string>();
    for (const auto& p : header.at("params")) {
      ck.names.push_back(p.at("name").get<std::string>());
      ck.shapes.push_back(p.at("shape").get<numcore::Shape>());
      total += numcore::shape_numel(ck.shapes.back());
    }
    if (header.at("has_velocity").get<bool>()) total *= 2;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint header: ") + e.what());
  }
  if (bytes.size() - at != total * 8) throw FormatError("checkpoint: payload size does not match the manifest");
  auto read_block = [&](std::vector<std::vector<double>>& dst) {
    for (const auto& s : ck.shapes) {
      std::vector<double> v(numcore::shape_numel(s));
      for (double& x : v) {
        x = io::get_f64(bytes, at);
        at += 8;
      }
      dst.push_back(std::move(v));
    }
  };
  read_block(ck.values);
  if (header.at("has_velocity").get<bool>()) read_block(ck.velocity);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

Checkpoint snapshot(const Trainer& trainer, const json& config) {
  Checkpoint ck;
  ck.config = config;
  ck.step = trainer.step();
  ck.rng_state = trainer.rng().state();
  for (const auto& p : trainer.model().params().items()) {
    ck.names.push_back(p.name);
    ck.shapes.push_back(p.tensor.shape());
    ck.values.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  }
  const auto& vel = trainer.sgd_state().velocity;
  if (!vel.empty()) {
    for (std::size_t i = 0; i < ck.values.size(); ++i) {
      ck.velocity.push_back(i < vel.size() && !vel[i].empty() ? vel[i] : std::vector<double>(ck.values[i].size(), 0.0));
    }
  }
  return ck;
}

void load_parameters(Model& model, const Checkpoint& ckpt) {
  auto& items = model.params().items();
  if (items.size() != ckpt.names.size()) {
    throw VersionError("checkpoint holds " + std::to_string(ckpt.names.size()) + " parameters, model expects " +
                       std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].name != ckpt.names[i] || items[i].tensor.shape() != ckpt.shapes[i]) {
      throw VersionError("checkpoint parameter " + ckpt.names[i] + " " + numcore::shape_str(ckpt.shapes[i]) +
                         " does not match model parameter " + items[i].name + " " +
                         numcore::shape_str(items[i].tensor.shape()));
    }
    std::copy(ckpt.values[i].begin(), ckpt.values[i].end(), items[i].tensor.mutable_values().begin());
  }
}

void restore(Trainer& trainer, const Checkpoint& ckpt) {
  load_parameters(trainer.model(), ckpt);
  trainer.sgd_state().velocity = ckpt.velocity;
  trainer.set_step(ckpt.step);
  trainer.rng().set_state(ckpt.rng_state);
}

// ---------------------------------------------------------------------------
// Results JSON

ResultsFile make_results(const std::vector<VideoResult>& videos, const std::vector<const datakit::VideoRecord*>& records,
                         const datakit::LabelIndex& labels) {
  if (videos.size() != records.size()) throw ContractError("make_results: results/records size mismatch");
  ResultsFile r;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const double fps = records[i]->fps;
    auto& list = r.results[records[i]->video_id];
    for (const auto& d : videos[i].detections) {
      list.push_back({d.segment.start / fps, d.segment.end / fps, labels.name(d.label), d.score});
    }
  }
  return r;
}

std::string dump_results(const ResultsFile& r) {
  json res = json::object();
  for (const auto& [vid, list] : r.results) {
    json arr = json::array();
    for (const auto& e : list) arr.push_back({{"segment", {e.start_sec, e.end_sec}}, {"label", e.label}, {"score", e.score}});
    res[vid] = arr;
  }
  return json{{"version", 1}, {"results", res}}.dump(2) + "\n";
}

ResultsFile parse_results(const std::string& text) {
  const json root = io::parse_strict(text, "results");
  if (!root.is_object() || !root.contains("version") || !root.contains("results") || root.size() != 2) {
    throw SchemaError("$: results file needs exactly the keys 'version' and 'results'");
  }
  if (root["version"] != 1) throw VersionError("$.version: unsupported results version " + root["version"].dump());
  if (!root["results"].is_object()) throw SchemaError("$.results: expected an object");
  ResultsFile r;
  for (const auto& [vid, arr] : root["results"].items()) {
    const std::string path = "$.results." + vid;
    if (!arr.is_array()) throw SchemaError(path + ": expected an array");
    auto& list = r.results[vid];
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const json& e = arr[i];
      const std::string ep = path + "[" + std::to_string(i) + "]";
      if (!e.is_object() || e.size() != 3 || !e.contains("segment") || !e.contains("label") || !e.contains("score")) {
        throw SchemaError(ep + ": expected {segment, label, score}");
      }
      const json& seg = e["segment"];
      if (!seg.is_array() || seg.size() != 2 || !seg[0].is_number() || !seg[1].is_number()) {
        throw SchemaError(ep + ".segment: expected [start, end]");
      }
      if (!e["label"].is_string()) throw SchemaError(ep + ".label: expected a string");
      if (!e["score"].is_number()) throw SchemaError(ep + ".score: expected a number");
      ResultEntry entry{seg[0].get<double>(), seg[1].get<double>(), e["label"].get<std::string>(),
                        e["score"].get<double>()};
      if (!(entry.end_sec > entry.start_sec)) throw SchemaError(ep + ".segment: end must exceed start");
      list.push_back(std::move(entry));
    }
  }
  return r;
}

void save_results(const std::filesystem::path& path, const ResultsFile& r) { io::write_file(path, dump_results(r)); }

ResultsFile load_results(const std::filesystem::path& path) { return parse_results(io::read_file(path)); }

}  // namespace tfpdet::pipeline
