#include "tfpdet/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

#include "tfpdet/error.hpp"

namespace tfpdet::evalkit {

using nlohmann::json;

std::vector<double> default_tiou_grid() {
  std::vector<double> g;
  for (int i = 50; i <= 95; i += 5) g.push_back(i / 100.0);
  return g;
}

EvalConfig EvalConfig::activitynet() { return EvalConfig{}; }

EvalConfig EvalConfig::thumos() {
  EvalConfig c;
  c.preset = "thumos";
  c.tiou_thresholds = {0.1, 0.2, 0.3, 0.4, 0.5};
  return c;
}

EvalConfig EvalConfig::from_preset(const std::string& name) {
  if (name == "activitynet") return activitynet();
  if (name == "thumos") return thumos();
  throw ConfigError("eval preset must be \"activitynet\" or \"thumos\", got \"" + name + "\"");
}

void EvalConfig::validate() const {
  for (const auto* list : {&tiou_thresholds, &average_grid, &ar_tiou_grid}) {
    if (list->empty()) throw ConfigError("eval: threshold lists must be non-empty");
    for (std::size_t i = 0; i < list->size(); ++i) {
      const double t = (*list)[i];
      if (!(t > 0.0 && t <= 1.0)) throw ConfigError("eval: thresholds must lie in (0, 1]");
      if (i > 0 && !(t > (*list)[i - 1])) throw ConfigError("eval: thresholds must be strictly increasing");
    }
  }
  if (proposal_budget == 0) throw ConfigError("eval.proposal_budget must be positive");
}

namespace {

// Detection order for AP: score descending, then earlier start.
std::vector<std::size_t> ranked(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].segment.start < dets[b].segment.start;
  });
  return order;
}

// True-positive flags in ranked order.
std::vector<bool> match_ranked(std::span<const Detection> dets, const std::vector<std::size_t>& order,
                               std::span<const GroundTruth> gts, double thresh) {
  std::vector<bool> used(gts.size(), false), tp;
  tp.reserve(order.size());
  for (std::size_t i : order) {
    double best = -1.0;
    std::size_t arg = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].video_id != dets[i].video_id) continue;
      const double v = anchorkit::tiou(dets[i].segment, gts[g].segment);
      if (v >= thresh && v > best) {
        best = v;
        arg = g;
      }
    }
    if (arg < gts.size()) used[arg] = true;
    tp.push_back(arg < gts.size());
  }
  return tp;
}

double ap_from_flags(const std::vector<bool>& tp, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> precision(tp.size()), recall(tp.size());
  double hits = 0.0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    hits += tp[i] ? 1.0 : 0.0;
    precision[i] = hits / static_cast<double>(i + 1);
    recall[i] = hits / static_cast<double>(num_gt);
  }
  for (std::size_t i = tp.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i]) continue;
    ap += precision[i] * (recall[i] - prev_recall);
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace

double average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts, double tiou_thresh) {
  const auto order = ranked(dets);
  return ap_from_flags(match_ranked(dets, order, gts, tiou_thresh), gts.size());
}

double average_recall(std::span<const ScoredProposal> proposals, std::span<const GroundTruth> gts, std::size_t budget,
                      std::span<const double> tiou_grid) {
  if (gts.empty()) throw ContractError("average_recall: no ground truth");
  if (tiou_grid.empty()) throw ConfigError("average_recall: empty threshold grid");
  std::map<std::string, std::vector<const ScoredProposal*>> by_video;
  for (const auto& p : proposals) by_video[p.video_id].push_back(&p);
  for (auto& [vid, list] : by_video) {
    std::stable_sort(list.begin(), list.end(), [](const auto* a, const auto* b) { return a->score > b->score; });
    if (list.size() > budget) list.resize(budget);
  }
  std::map<std::string, std::vector<std::size_t>> gts_by_video;
  for (std::size_t g = 0; g < gts.size(); ++g) gts_by_video[gts[g].video_id].push_back(g);

  double sum = 0.0;
  for (double theta : tiou_grid) {
    std::size_t matched = 0;
    for (const auto& [vid, gidx] : gts_by_video) {
      auto it = by_video.find(vid);
      if (it == by_video.end()) continue;
      std::vector<bool> used(gidx.size(), false);
      for (const auto* p : it->second) {
        double best = -1.0;
        std::size_t arg = gidx.size();
        for (std::size_t j = 0; j < gidx.size(); ++j) {
          if (used[j]) continue;
          const double v = anchorkit::tiou(p->segment, gts[gidx[j]].segment);
          if (v >= theta && v > best) {
            best = v;
            arg = j;
          }
        }
        if (arg < gidx.size()) {
          used[arg] = true;
          ++matched;
        }
      }
    }
    sum += static_cast<double>(matched) / static_cast<double>(gts.size());
  }
  return sum / static_cast<double>(tiou_grid.size());
}

EvalReport evaluate_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts, const EvalConfig& cfg) {
  cfg.validate();
  if (gts.empty()) throw ContractError("evaluate_detections: no ground truth");
  EvalReport rep;
  rep.preset = cfg.preset;
  rep.proposal_budget = cfg.proposal_budget;
  std::set<double> all(cfg.tiou_thresholds.begin(), cfg.tiou_thresholds.end());
  all.insert(cfg.average_grid.begin(), cfg.average_grid.end());
  rep.thresholds.assign(all.begin(), all.end());

  std::map<int, std::vector<GroundTruth>> gt_by_class;
  for (const auto& g : gts) gt_by_class[g.label].push_back(g);
  std::map<int, std::vector<Detection>> det_by_class;
  for (const auto& d : dets) det_by_class[d.label].push_back(d);

  for (double t : rep.thresholds) {
    double sum = 0.0;
    for (const auto& [cls, cg] : gt_by_class) {
      const auto& cd = det_by_class[cls];
      const double ap = average_precision(cd, cg, t);
      rep.per_class_ap[cls][t] = ap;
      sum += ap;
    }
    rep.map[t] = sum / static_cast<double>(gt_by_class.size());
  }
  double avg = 0.0;
  for (double t : cfg.average_grid) avg += rep.map.at(t);
  rep.average_map = avg / static_cast<double>(cfg.average_grid.size());

  rep.counts.gt = gts.size();
  rep.counts.detections = dets.size();
  const double first = cfg.tiou_thresholds.front();
  for (const auto& [cls, cd] : det_by_class) {
    auto it = gt_by_class.find(cls);
    if (it == gt_by_class.end()) continue;
    const auto flags = match_ranked(cd, ranked(cd), it->second, first);
    rep.counts.matched += static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
  }
  return rep;
}

std::string threshold_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

json EvalReport::to_json(const datakit::LabelIndex& labels) const {
  json per_class = json::object();
  for (const auto& [cls, by_t] : per_class_ap) {
    json row = json::object();
    for (const auto& [t, ap] : by_t) row[threshold_label(t)] = ap;
    per_class[cls >= 1 && cls <= labels.num_classes() ? labels.name(cls) : std::to_string(cls)] = row;
  }
  json m = json::object();
  for (const auto& [t, v] : map) m[threshold_label(t)] = v;
  return json{{"preset", preset},
              {"thresholds", thresholds},
              {"per_class_ap", per_class},
              {"map", m},
              {"average_map", average_map},
              {"ar_at_n", ar_at_n ? json(*ar_at_n) : json(nullptr)},
              {"proposal_budget", proposal_budget},
              {"counts", {{"gt", counts.gt}, {"detections", counts.detections}, {"matched", counts.matched}}}};
}

std::string format_table(const std::vector<std::pair<std::string, const EvalReport*>>& rows, const EvalConfig& cfg) {
  const bool with_average = cfg.preset != "thumos";
  std::size_t name_w = 6;
  for (const auto& [name, rep] : rows) name_w = std::max(name_w, name.size());
  auto pad = [](std::string s, std::size_t w, bool left) {
    if (s.size() >= w) return s;
    return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
  };
  std::string out = pad("Method", name_w, true);
  for (double t : cfg.tiou_thresholds) out += " " + pad(threshold_label(t), 8, false);
  if (with_average) out += " " + pad("Average", 8, false);
  out += "\n";
  for (const auto& [name, rep] : rows) {
    out += pad(name, name_w, true);
    char buf[32];
    for (double t : cfg.tiou_thresholds) {
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * rep->map.at(t));
      out += " " + pad(buf, 8, false);
    }
    if (with_average) {
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * rep->average_map);
      out += " " + pad(buf, 8, false);
    }
    out += "\n";
  }
  return out;
}

}  // namespace tfpdet::evalkit
