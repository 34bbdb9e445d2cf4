#include "tfpdet/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfpdet/error.hpp"

namespace tfpdet::heads {

using anchorkit::AnchorGrid;
using numcore::ConstantInit;
using numcore::GaussianInit;

namespace {

// Freshly added layers: N(0, 0.01) weights and 0.1 biases.
const GaussianInit kNewWeight{0.0, 0.01};
const ConstantInit kNewBias{0.1};

std::string apn_name(std::size_t k, const char* part) { return "apn.l" + std::to_string(k) + "." + part; }
std::string acn_name(std::size_t k, const char* part) { return "acn.c" + std::to_string(k) + "." + part; }

const Tensor& param(const ParameterStore& params, const std::string& name) { return params.get(name).tensor; }

Tensor conv(const Tensor& x, const ParameterStore& params, const std::string& prefix, std::size_t stride,
            std::size_t pad) {
  return numcore::temporal_conv(x, param(params, prefix + ".w"), param(params, prefix + ".b"), stride, pad);
}

Tensor dense(const Tensor& x, const ParameterStore& params, const std::string& prefix) {
  return numcore::linear(x, param(params, prefix + ".w"), param(params, prefix + ".b"));
}

}  // namespace

// ---------------------------------------------------------------------------

void ApnConfig::validate(std::size_t num_levels) const {
  if (scales.size() != num_levels) {
    throw ConfigError("apn.scales has " + std::to_string(scales.size()) + " levels but the pyramid has " +
                      std::to_string(num_levels));
  }
  for (const auto& lvl : scales) {
    if (lvl.empty()) throw ConfigError("apn.scales: empty level");
    for (double s : lvl)
      if (!(s > 0.0)) throw ConfigError("apn.scales must be positive");
  }
  if (!(nms_tiou > 0.0 && nms_tiou <= 1.0)) throw ConfigError("apn.nms_tiou must lie in (0, 1]");
  if (top_k == 0) throw ConfigError("apn.top_k must be positive");
  if (batch == 0) throw ConfigError("apn.batch must be positive");
  if (!(pos_fraction >= 0.0 && pos_fraction <= 1.0)) throw ConfigError("apn.pos_fraction must lie in [0, 1]");
  if (!(neg_iou <= pos_iou)) throw ConfigError("apn.neg_iou must not exceed apn.pos_iou");
}

void add_apn_params(ParameterStore& params, const ApnConfig& cfg, std::size_t channels) {
  for (std::size_t k = 0; k < cfg.scales.size(); ++k) {
    const std::size_t out = 2 * cfg.scales[k].size();
    params.add(apn_name(k, "conv.w"), {channels, channels, 3}, kNewWeight);
    params.add(apn_name(k, "conv.b"), {channels}, kNewBias);
    params.add(apn_name(k, "cls.w"), {out, channels, 1}, kNewWeight);
    params.add(apn_name(k, "cls.b"), {out}, kNewBias);
    params.add(apn_name(k, "reg.w"), {out, channels, 1}, kNewWeight);
    params.add(apn_name(k, "reg.b"), {out}, kNewBias);
  }
}

std::vector<ApnLevelOutput> apn_forward(const pyramid::PyramidFeatures& pyr, const ParameterStore& params) {
  std::vector<ApnLevelOutput> out;
  for (std::size_t k = 0; k < pyr.num_levels(); ++k) {
    const Tensor h = numcore::relu(conv(pyr.levels[k], params, apn_name(k, "conv"), 1, 1));
    out.push_back({conv(h, params, apn_name(k, "cls"), 1, 0), conv(h, params, apn_name(k, "reg"), 1, 0)});
  }
  return out;
}

std::pair<std::size_t, std::size_t> anchor_slots(const AnchorGrid& grid, std::size_t a) {
  const auto& anc = grid.anchors[a];
  const std::size_t t = grid.positions(static_cast<std::size_t>(anc.level));
  const std::size_t j = static_cast<std::size_t>(anc.scale_index);
  const std::size_t p = static_cast<std::size_t>(anc.position);
  return {2 * j * t + p, (2 * j + 1) * t + p};
}

namespace {

void check_apn_shapes(std::span<const ApnLevelOutput> out, const AnchorGrid& grid) {
  if (out.size() != grid.num_levels()) throw DimensionError("apn output levels do not match the anchor grid");
  for (std::size_t k = 0; k < out.size(); ++k) {
    const numcore::Shape want{2 * grid.anchors_per_position(k), grid.positions(k)};
    if (out[k].cls.shape() != want || out[k].reg.shape() != want) {
      throw DimensionError("apn level " + std::to_string(k) + ": expected " + numcore::shape_str(want) + ", got " +
                           numcore::shape_str(out[k].cls.shape()));
    }
  }
}

}  // namespace

std::vector<double> anchor_objectness(std::span<const ApnLevelOutput> out, const AnchorGrid& grid) {
  check_apn_shapes(out, grid);
  std::vector<double> obj(grid.size());
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const auto [bg, fg] = anchor_slots(grid, a);
    const auto cls = out[static_cast<std::size_t>(grid.anchors[a].level)].cls.values();
    obj[a] = 1.0 / (1.0 + std::exp(cls[bg] - cls[fg]));
  }
  return obj;
}

std::vector<Proposal> generate_proposals(std::span<const ApnLevelOutput> out, const AnchorGrid& grid,
                                         double clip_len, double nms_tiou, std::size_t top_k) {
  const std::vector<double> obj = anchor_objectness(out, grid);
  std::vector<Segment> segs;
  std::vector<double> scores;
  std::vector<int> levels;
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const auto& anc = grid.anchors[a];
    const auto [tc, tl] = anchor_slots(grid, a);
    const auto reg = out[static_cast<std::size_t>(anc.level)].reg.values();
    const auto d = anchorkit::decode(anc.segment, {reg[tc], reg[tl]}, clip_len);
    if (d.degenerate) continue;
    segs.push_back(d.segment);
    scores.push_back(obj[a]);
    levels.push_back(anc.level);
  }
  std::vector<Proposal> props;
  for (std::size_t i : anchorkit::nms(segs, scores, nms_tiou, top_k)) props.push_back({segs[i], scores[i], levels[i]});
  return props;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> roi_pool_indices(std::span<const double> feat, std::size_t channels, std::size_t length,
                                          std::span<const Segment> segments, int stride, std::size_t bins) {
  if (bins == 0 || length == 0) throw ContractError("roi_pool: empty map or zero bins");
  const double t = static_cast<double>(length);
  std::vector<std::size_t> idx;
  idx.reserve(segments.size() * channels * bins);
  std::vector<std::size_t> lo_cell(bins), hi_cell(bins);  // [lo, hi) cell range per bin
  for (const Segment& seg : segments) {
    const double lo = std::clamp(seg.start / stride, 0.0, t);
    const double hi = std::clamp(seg.end / stride, 0.0, t);
    if (!(hi > lo)) {
      throw ContractError("roi_pool: segment [" + std::to_string(seg.start) + ", " + std::to_string(seg.end) +
                          ") misses the feature map");
    }
    const double w = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
      const double a = lo + w * static_cast<double>(b);
      const double e = lo + w * static_cast<double>(b + 1);
      // Candidate range from the closed form, then the exact center test.
      auto first = static_cast<std::ptrdiff_t>(std::floor(a - 0.5)) - 1;
      auto last = static_cast<std::ptrdiff_t>(std::ceil(e - 0.5)) + 1;
      first = std::max<std::ptrdiff_t>(first, 0);
      last = std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(length));
      std::ptrdiff_t from = -1, to = -1;
      for (std::ptrdiff_t i = first; i < last; ++i) {
        const double c = static_cast<double>(i) + 0.5;
        if (c >= a && c < e) {
          if (from < 0) from = i;
          to = i + 1;
        }
      }
      if (from < 0) {
        const auto cell = static_cast<std::ptrdiff_t>(std::floor(0.5 * (a + e)));
        from = std::clamp<std::ptrdiff_t>(cell, 0, static_cast<std::ptrdiff_t>(length) - 1);
        to = from + 1;
      }
      lo_cell[b] = static_cast<std::size_t>(from);
      hi_cell[b] = static_cast<std::size_t>(to);
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const double* row = feat.data() + c * length;
      for (std::size_t b = 0; b < bins; ++b) {
        std::size_t best = lo_cell[b];
        for (std::size_t i = lo_cell[b] + 1; i < hi_cell[b]; ++i)
          if (row[i] > row[best]) best = i;
        idx.push_back(c * length + best);
      }
    }
  }
  return idx;
}

Tensor roi_pool(const Tensor& feat, std::span<const Segment> segments, int stride, std::size_t bins) {
  if (feat.rank() != 2) throw DimensionError("roi_pool: expected a [D×T] map, got " + numcore::shape_str(feat.shape()));
  const std::size_t d = feat.dim(0);
  const auto idx = roi_pool_indices(feat.values(), d, feat.dim(1), segments, stride, bins);
  return numcore::gather(feat, idx, {segments.size(), d, bins});
}

Segment context_window(const Segment& s, double clip_len) {
  const double c = s.center();
  const double len = s.length();
  return {std::clamp(c - len, 0.0, clip_len), std::clamp(c + len, 0.0, clip_len)};
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kS1: return "S1";
    case Strategy::kS2: return "S2";
    case Strategy::kS3: return "S3";
  }
  return "S3";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "S1") return Strategy::kS1;
  if (s == "S2") return Strategy::kS2;
  if (s == "S3") return Strategy::kS3;
  throw ConfigError("acn.strategy must be \"S1\", \"S2\" or \"S3\", got \"" + s + "\"");
}

void AcnConfig::validate() const {
  if (roi_bins == 0) throw ConfigError("acn.roi_bins must be positive");
  if (fc_dim == 0) throw ConfigError("acn.fc_dim must be positive");
  if (num_classes == 0) throw ConfigError("acn.num_classes must be positive");
  if (batch == 0) throw ConfigError("acn.batch must be positive");
  if (!(fg_fraction >= 0.0 && fg_fraction <= 1.0)) throw ConfigError("acn.fg_fraction must lie in [0, 1]");
  if (!(score_thresh >= 0.0 && score_thresh <= 1.0)) throw ConfigError("acn.score_thresh must lie in [0, 1]");
  if (!(nms_tiou > 0.0 && nms_tiou <= 1.0)) throw ConfigError("acn.nms_tiou must lie in (0, 1]");
}

std::size_t AcnConfig::num_classifiers(std::size_t num_levels) const {
  return strategy == Strategy::kS1 ? 1 : num_levels;
}

void add_acn_params(ParameterStore& params, const AcnConfig& cfg, std::size_t channels, std::size_t num_levels) {
  const std::size_t half = channels / 2;
  const std::size_t flat = channels * cfg.roi_bins;
  const std::size_t c = cfg.num_classes;
  for (std::size_t k = 0; k < cfg.num_classifiers(num_levels); ++k) {
    if (cfg.use_context) {
      params.add(acn_name(k, "reduce_roi.w"), {half, channels, 3}, kNewWeight);
      params.add(acn_name(k, "reduce_roi.b"), {half}, kNewBias);
      params.add(acn_name(k, "reduce_ctx.w"), {half, channels, 3}, kNewWeight);
      params.add(acn_name(k, "reduce_ctx.b"), {half}, kNewBias);
    }
    // fc6/fc7 stand in for pretrained layers, hence He scaling.
    params.add(acn_name(k, "fc6.w"), {flat, cfg.fc_dim}, GaussianInit{0.0, std::sqrt(2.0 / static_cast<double>(flat))});
    params.add(acn_name(k, "fc6.b"), {cfg.fc_dim}, ConstantInit{0.0});
    params.add(acn_name(k, "fc7.w"), {cfg.fc_dim, cfg.fc_dim},
               GaussianInit{0.0, std::sqrt(2.0 / static_cast<double>(cfg.fc_dim))});
    params.add(acn_name(k, "fc7.b"), {cfg.fc_dim}, ConstantInit{0.0});
    params.add(acn_name(k, "cls.w"), {cfg.fc_dim, c + 1}, kNewWeight);
    params.add(acn_name(k, "cls.b"), {c + 1}, kNewBias);
    params.add(acn_name(k, "reg.w"), {cfg.fc_dim, 2 * c}, kNewWeight);
    params.add(acn_name(k, "reg.b"), {2 * c}, kNewBias);
  }
}

Tensor context_features(const Tensor& level_feat, std::span<const Segment> segments, int stride, double clip_len,
                        std::size_t classifier, const AcnConfig& cfg, const ParameterStore& params) {
  const Tensor pooled = roi_pool(level_feat, segments, stride, cfg.roi_bins);
  if (!cfg.use_context) return pooled;
  std::vector<Segment> ctx;
  ctx.reserve(segments.size());
  for (const auto& s : segments) ctx.push_back(context_window(s, clip_len));
  const Tensor ctx_pooled = roi_pool(level_feat, ctx, stride, cfg.roi_bins);
  const Tensor a = numcore::relu(conv(pooled, params, acn_name(classifier, "reduce_roi"), 1, 1));
  const Tensor b = numcore::relu(conv(ctx_pooled, params, acn_name(classifier, "reduce_ctx"), 1, 1));
  return numcore::concat_channels(a, b);
}

std::vector<std::vector<std::size_t>> assign_levels(std::span<const Proposal> proposals, Strategy strategy,
                                                    std::size_t num_levels) {
  std::vector<std::vector<std::size_t>> out(num_levels);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    switch (strategy) {
      case Strategy::kS1:
        out[0].push_back(i);
        break;
      case Strategy::kS2: {
        const int lvl = proposals[i].source_level;
        if (lvl < 0 || static_cast<std::size_t>(lvl) >= num_levels) {
          throw IndexError("assign_levels: proposal source level " + std::to_string(lvl) + " out of range");
        }
        out[static_cast<std::size_t>(lvl)].push_back(i);
        break;
      }
      case Strategy::kS3:
        for (auto& lvl : out) lvl.push_back(i);
        break;
    }
  }
  return out;
}

AcnLevelOutput acn_level_forward(const pyramid::PyramidFeatures& pyr, std::size_t level,
                                 std::span<const Segment> segments, double clip_len, const AcnConfig& cfg,
                                 const ParameterStore& params) {
  AcnLevelOutput out;
  out.level = static_cast<int>(level);
  out.classifier = cfg.strategy == Strategy::kS1 ? 0 : level;
  const std::size_t k = out.classifier;
  const Tensor feats = context_features(pyr.levels[level], segments, pyr.strides[level], clip_len, k, cfg, params);
  const Tensor flat = numcore::reshape(feats, {segments.size(), feats.dim(1) * feats.dim(2)});
  const Tensor h6 = numcore::relu(dense(flat, params, acn_name(k, "fc6")));
  const Tensor h7 = numcore::relu(dense(h6, params, acn_name(k, "fc7")));
  out.cls = dense(h7, params, acn_name(k, "cls"));
  out.reg = dense(h7, params, acn_name(k, "reg"));
  return out;
}

std::vector<AcnLevelOutput> acn_forward(const pyramid::PyramidFeatures& pyr, std::span<const Proposal> proposals,
                                        double clip_len, const AcnConfig& cfg, const ParameterStore& params) {
  if (proposals.empty()) throw ContractError("acn_forward: no proposals");
  const auto routes = assign_levels(proposals, cfg.strategy, pyr.num_levels());
  std::vector<AcnLevelOutput> out;
  for (std::size_t k = 0; k < routes.size(); ++k) {
    if (routes[k].empty()) continue;
    std::vector<Segment> segs;
    for (std::size_t i : routes[k]) segs.push_back(proposals[i].segment);
    auto lvl = acn_level_forward(pyr, k, segs, clip_len, cfg, params);
    lvl.proposals = routes[k];
    out.push_back(std::move(lvl));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Detection> classwise_nms(std::vector<Detection> dets, double tiou_thresh) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.label == d.label && k.video_id == d.video_id && anchorkit::tiou(k.segment, d.segment) >= tiou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> finalize_detections(std::span<const AcnLevelOutput> acn, std::span<const Proposal> proposals,
                                           const AcnConfig& cfg, double clip_len, std::int64_t frame_offset,
                                           const std::string& video_id) {
  const std::size_t c = cfg.num_classes;
  std::vector<Detection> cands;
  for (const auto& lvl : acn) {
    if (lvl.cls.dim(1) != c + 1 || lvl.reg.dim(1) != 2 * c) throw DimensionError("finalize_detections: head width");
    const auto probs = numcore::softmax_rows(lvl.cls.values(), c + 1);
    const auto reg = lvl.reg.values();
    for (std::size_t r = 0; r < lvl.proposals.size(); ++r) {
      const Segment& ref = proposals[lvl.proposals[r]].segment;
      for (std::size_t cls = 1; cls <= c; ++cls) {
        const double score = probs[r * (c + 1) + cls];
        if (!(score > cfg.score_thresh)) continue;
        const std::size_t off = r * 2 * c + 2 * (cls - 1);
        const auto d = anchorkit::decode(ref, {reg[off], reg[off + 1]}, clip_len);
        if (d.degenerate) continue;
        cands.push_back({video_id, d.segment, static_cast<int>(cls), score});
      }
    }
  }
  auto kept = classwise_nms(std::move(cands), cfg.nms_tiou);
  const double shift = static_cast<double>(frame_offset);
  for (auto& d : kept) {
    d.segment.start += shift;
    d.segment.end += shift;
  }
  return kept;
}

}  // namespace tfpdet::heads
