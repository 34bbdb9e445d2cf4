#include "tfpdet/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "tfpdet/error.hpp"
#include "tfpdet/io.hpp"

namespace tfpdet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Shared helpers

void check_dataset(const RunConfig& cfg, const datakit::Dataset& data) {
  if (!data.videos.empty()) {
    const std::size_t dim = data.videos.front().features.dim(0);
    if (dim != cfg.encoder.input_dim) {
      throw ConfigError("encoder.input_dim is " + std::to_string(cfg.encoder.input_dim) + " but the dataset has " +
                        std::to_string(dim) + "-dimensional features");
    }
  }
  if (static_cast<std::size_t>(data.labels.num_classes()) != cfg.acn.num_classes) {
    throw ConfigError("acn.num_classes is " + std::to_string(cfg.acn.num_classes) + " but the dataset has " +
                      std::to_string(data.labels.num_classes()) + " labels");
  }
}

void train_loop(pipeline::Trainer& trainer, const datakit::Dataset& data, std::int64_t max_steps,
                const std::function<void(const pipeline::StepReport&)>& on_step) {
  std::vector<std::vector<datakit::Buffer>> buffers;
  for (const auto* rec : data.subset("train")) {
    auto b = datakit::make_buffers(*rec, trainer.config().buffer_len);
    if (!b.empty()) buffers.push_back(std::move(b));
  }
  if (buffers.empty() && trainer.step() < max_steps) throw LookupError("dataset has no usable train videos");
  while (trainer.step() < max_steps) on_step(trainer.train_step(buffers));
}

std::vector<evalkit::GroundTruth> ground_truth_seconds(const std::vector<const datakit::VideoRecord*>& videos) {
  std::vector<evalkit::GroundTruth> gts;
  for (const auto* v : videos)
    for (const auto& a : v->annotations) gts.push_back({v->video_id, {a.t_start / v->fps, a.t_end / v->fps}, a.label});
  return gts;
}

evalkit::EvalReport evaluate_model(const pipeline::Model& model, const std::vector<const datakit::VideoRecord*>& videos,
                                   const evalkit::EvalConfig& cfg, unsigned threads,
                                   std::vector<pipeline::VideoResult>* results) {
  const auto res = pipeline::infer_videos(videos, model, threads);
  std::vector<evalkit::Detection> dets;
  std::vector<evalkit::ScoredProposal> props;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const double fps = videos[i]->fps;
    for (auto d : res[i].detections) {
      d.segment = {d.segment.start / fps, d.segment.end / fps};
      dets.push_back(d);
    }
    for (const auto& p : res[i].proposals)
      props.push_back({videos[i]->video_id, {p.segment.start / fps, p.segment.end / fps}, p.score});
  }
  const auto gts = ground_truth_seconds(videos);
  auto rep = evalkit::evaluate_detections(dets, gts, cfg);
  rep.ar_at_n = evalkit::average_recall(props, gts, cfg.proposal_budget, cfg.ar_tiou_grid);
  if (results) *results = res;
  return rep;
}

std::string variant_dir(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += c;
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

namespace {

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

void echo_config(const fs::path& dir, const RunConfig& cfg) { io::write_file(dir / "config.json", json_text(to_json(cfg))); }

void require_empty_or_force(const fs::path& dir, bool force) {
  if (!fs::exists(dir)) return;
  if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
  if (fs::is_empty(dir)) return;
  if (!force) throw ConfigError(dir.string() + " is not empty; pass --force to overwrite");
  fs::remove_all(dir);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Proposal lists travel next to the results file for AR evaluation.
json proposals_json(const std::vector<pipeline::VideoResult>& res, const std::vector<const datakit::VideoRecord*>& recs,
                    std::size_t budget) {
  json all = json::object();
  for (std::size_t i = 0; i < res.size(); ++i) {
    json arr = json::array();
    const double fps = recs[i]->fps;
    for (std::size_t k = 0; k < res[i].proposals.size() && k < budget; ++k) {
      const auto& p = res[i].proposals[k];
      arr.push_back({{"segment", {p.segment.start / fps, p.segment.end / fps}}, {"score", p.score}});
    }
    all[recs[i]->video_id] = arr;
  }
  return json{{"version", 1}, {"proposals", all}};
}

std::vector<evalkit::ScoredProposal> parse_proposals(const fs::path& path) {
  const json root = io::parse_strict(io::read_file(path), path.string());
  if (!root.is_object() || root.value("version", json()) != 1 || !root.contains("proposals") ||
      !root["proposals"].is_object()) {
    throw SchemaError(path.string() + ": expected {\"version\": 1, \"proposals\": {...}}");
  }
  std::vector<evalkit::ScoredProposal> out;
  for (const auto& [vid, arr] : root["proposals"].items()) {
    if (!arr.is_array()) throw SchemaError("$.proposals." + vid + ": expected an array");
    for (const auto& e : arr) {
      const json& seg = e.value("segment", json());
      if (!seg.is_array() || seg.size() != 2 || !seg[0].is_number() || !seg[1].is_number() ||
          !e.value("score", json()).is_number()) {
        throw SchemaError("$.proposals." + vid + ": expected {segment: [start, end], score}");
      }
      out.push_back({vid, {seg[0].get<double>(), seg[1].get<double>()}, e["score"].get<double>()});
    }
  }
  return out;
}

fs::path annotations_file(const fs::path& p) { return fs::is_directory(p) ? p / "annotations.json" : p; }

class Logger {
 public:
  explicit Logger(std::ostream& os) : os_(os) {}
  void line(const std::string& s) {
    std::lock_guard lock(mu_);
    os_ << s << '\n' << std::flush;
  }

 private:
  std::ostream& os_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// gen

void cmd_gen(const std::string& config, const fs::path& out_dir, bool force, std::optional<std::uint64_t> seed,
             std::ostream& out) {
  RunConfig cfg = load_run_config(config);
  if (seed) cfg.data.seed = *seed;
  require_empty_or_force(out_dir, force);
  fs::create_directories(out_dir);
  echo_config(out_dir, cfg);
  const auto data = datakit::generate_synthetic(cfg.data);
  datakit::write_dataset(out_dir, data);

  std::map<std::string, int> per_subset;
  std::vector<int> per_band(cfg.data.duration_bands.size(), 0);
  std::size_t instances = 0;
  for (const auto& v : data.videos) {
    ++per_subset[v.subset];
    for (const auto& a : v.annotations) {
      ++instances;
      for (std::size_t b = 0; b < per_band.size(); ++b) {
        const auto& band = cfg.data.duration_bands[b];
        if (a.length() >= band.min_len && a.length() <= band.max_len) ++per_band[b];
      }
    }
  }
  out << "videos: " << data.videos.size();
  for (const auto& [name, n] : per_subset) out << "  " << name << ": " << n;
  out << "\ninstances: " << instances << "\n";
  for (std::size_t b = 0; b < per_band.size(); ++b) {
    const auto& band = cfg.data.duration_bands[b];
    out << "  band [" << band.min_len << ", " << band.max_len << "]: " << per_band[b] << "\n";
  }
}

// ---------------------------------------------------------------------------
// train

void cmd_train(const std::string& config, const fs::path& data_dir, const fs::path& out_dir, const std::string& resume,
               std::int64_t log_every, std::ostream& out, Logger& log) {
  const RunConfig cfg = load_run_config(config);
  const auto data = datakit::load_dataset(data_dir);
  check_dataset(cfg, data);
  fs::create_directories(out_dir);
  echo_config(out_dir, cfg);

  pipeline::Trainer trainer(cfg.model(), cfg.train, cfg.seed);
  const fs::path metrics = out_dir / "metrics.jsonl";
  std::string kept;
  if (!resume.empty()) {
    const auto ck = pipeline::load_checkpoint(resume);
    pipeline::restore(trainer, ck);
    if (fs::exists(metrics)) {
      std::istringstream lines(io::read_file(metrics));
      for (std::string line; std::getline(lines, line);) {
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.value("step", std::int64_t{-1}) < ck.step) kept += line + "\n";
      }
    }
    log.line("resuming at step " + std::to_string(ck.step));
  }
  io::write_file(metrics, kept);
  std::ofstream mlog(metrics, std::ios::app | std::ios::binary);
  if (!mlog) throw FormatError("cannot open " + metrics.string());

  const json cfg_json = to_json(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  double window = 0.0;
  train_loop(trainer, data, cfg.train.max_steps, [&](const pipeline::StepReport& r) {
    mlog << r.to_json().dump() << '\n';
    window += r.total;
    const std::int64_t done = r.step + 1;
    if (log_every > 0 && done % log_every == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log.line("step " + std::to_string(done) + "/" + std::to_string(cfg.train.max_steps) + "  loss " +
               fixed(window / static_cast<double>(log_every), 4) + "  lr " + fixed(r.lr, 6) + "  " + fixed(secs, 1) +
               "s");
      window = 0.0;
    }
    const std::int64_t every = cfg.train.checkpoint_every;
    if (every > 0 && done % every == 0 && done < cfg.train.max_steps) {
      char name[64];
      std::snprintf(name, sizeof name, "step_%06lld.tfpm", static_cast<long long>(done));
      mlog.flush();
      pipeline::save_checkpoint(out_dir / "checkpoints" / name, pipeline::snapshot(trainer, cfg_json));
    }
  });
  mlog.flush();
  pipeline::save_checkpoint(out_dir / "model.tfpm", pipeline::snapshot(trainer, cfg_json));
  out << "trained " << trainer.step() << " steps; checkpoint " << (out_dir / "model.tfpm").string() << "\n";
}

// ---------------------------------------------------------------------------
// infer

RunConfig config_from_checkpoint(const pipeline::Checkpoint& ck) {
  try {
    return parse_run_config(ck.config);
  } catch (const ConfigError& e) {
    throw VersionError(std::string("checkpoint config is not understood by this build: ") + e.what());
  }
}

void cmd_infer(const fs::path& ckpt_path, const fs::path& data_dir, const std::string& subset, const fs::path& out_path,
               const std::string& proposals_path, std::ostream& out) {
  const auto ck = pipeline::load_checkpoint(ckpt_path);
  const RunConfig cfg = config_from_checkpoint(ck);
  pipeline::Model model(cfg.model());
  pipeline::load_parameters(model, ck);
  const auto data = datakit::load_dataset(data_dir);
  try {
    check_dataset(cfg, data);
  } catch (const ConfigError& e) {
    throw VersionError(std::string("checkpoint does not match the dataset: ") + e.what());
  }
  const auto records = data.subset(subset.empty() ? cfg.eval.subset : subset);
  const auto res = pipeline::infer_videos(records, model, pipeline::worker_threads());
  pipeline::save_results(out_path, pipeline::make_results(res, records, data.labels));
  if (!proposals_path.empty()) {
    io::write_file(proposals_path, json_text(proposals_json(res, records, cfg.eval.metrics.proposal_budget)));
  }
  std::size_t n = 0;
  for (const auto& r : res) n += r.detections.size();
  out << "videos: " << records.size() << "  detections: " << n << "\n";
}

// ---------------------------------------------------------------------------
// eval

void cmd_eval(const fs::path& results_path, const fs::path& ann_path, const std::string& preset,
              const std::string& subset, const std::string& proposals_path, const std::string& report_path,
              std::ostream& out) {
  const auto cfg = evalkit::EvalConfig::from_preset(preset);
  const auto ann = datakit::load_annotations(annotations_file(ann_path));
  const auto results = pipeline::load_results(results_path);

  std::vector<evalkit::GroundTruth> gts;
  std::set<std::string> videos;
  for (const auto& [vid, meta] : ann.videos) {
    if (!subset.empty() && meta.subset != subset) continue;
    videos.insert(vid);
    for (const auto& a : meta.annotations) gts.push_back({vid, {a.t_start / meta.fps, a.t_end / meta.fps}, a.label});
  }
  std::vector<evalkit::Detection> dets;
  for (const auto& [vid, list] : results.results) {
    if (!videos.count(vid)) continue;
    for (const auto& e : list) dets.push_back({vid, {e.start_sec, e.end_sec}, ann.labels.id(e.label), e.score});
  }
  auto rep = evalkit::evaluate_detections(dets, gts, cfg);
  if (!proposals_path.empty()) {
    auto props = parse_proposals(proposals_path);
    std::erase_if(props, [&](const auto& p) { return !videos.count(p.video_id); });
    rep.ar_at_n = evalkit::average_recall(props, gts, cfg.proposal_budget, cfg.ar_tiou_grid);
  }
  const json report = rep.to_json(ann.labels);
  out << evalkit::format_table({{results_path.stem().string(), &rep}}, cfg);
  if (rep.ar_at_n) out << "AR@" << cfg.proposal_budget << " " << fixed(*rep.ar_at_n, 4) << "\n";
  out << "\n" << json_text(report);
  if (!report_path.empty()) io::write_file(report_path, json_text(report));
}

// ---------------------------------------------------------------------------
// plot

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      case '\'': o += "&apos;"; break;
      default: o += c;
    }
  }
  return o;
}

void cmd_plot(const fs::path& results_path, const fs::path& ann_path, const std::string& video, const fs::path& out_path,
              double min_score, std::ostream& out) {
  const auto ann = datakit::load_annotations(annotations_file(ann_path));
  const auto results = pipeline::load_results(results_path);
  const auto it = ann.videos.find(video);
  if (it == ann.videos.end()) throw LookupError("video '" + video + "' is not in the annotations");
  const auto& meta = it->second;
  const double duration = static_cast<double>(meta.num_frames) / meta.fps;

  std::map<std::string, std::vector<pipeline::ResultEntry>> tracks;  // label → detections
  if (auto r = results.results.find(video); r != results.results.end()) {
    for (const auto& e : r->second)
      if (e.score >= min_score) tracks[e.label].push_back(e);
  }

  const double left = 140, width = 860, track_h = 40, top = 40;
  const double total_h = top + track_h * static_cast<double>(1 + tracks.size()) + 30;
  auto x_of = [&](double t) { return left + width * std::clamp(t / duration, 0.0, 1.0); };
  std::ostringstream svg;
  svg << R"(<?xml version="1.0" encoding="UTF-8"?>)" << "\n"
      << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << left + width + 20 << R"(" height=")" << total_h
      << R"(" font-family="sans-serif" font-size="10">)" << "\n"
      << R"(<text x="10" y="20" font-size="13">)" << xml_escape(video) << " (" << fixed(duration, 2) << " s)</text>\n";

  auto track = [&](std::size_t row, const std::string& name, const std::string& color,
                   const std::vector<std::pair<anchorkit::Segment, std::string>>& segs) {
    const double y = top + track_h * static_cast<double>(row);
    svg << R"(<text x="10" y=")" << y + 22 << R"(">)" << xml_escape(name) << "</text>\n"
        << R"(<line x1=")" << left << R"(" y1=")" << y + 18 << R"(" x2=")" << left + width << R"(" y2=")" << y + 18
        << R"(" stroke="#ccc"/>)" << "\n";
    for (const auto& [seg, label] : segs) {
      const double x0 = x_of(seg.start), x1 = std::max(x_of(seg.end), x0 + 1.0);
      svg << R"(<rect x=")" << fixed(x0, 2) << R"(" y=")" << y + 8 << R"(" width=")" << fixed(x1 - x0, 2)
          << R"(" height="20" fill=")" << color << R"(" fill-opacity="0.7"/>)" << "\n"
          << R"(<text x=")" << fixed(x0, 2) << R"(" y=")" << y + 38 << R"(">)" << xml_escape(label) << "</text>\n";
    }
  };

  std::vector<std::pair<anchorkit::Segment, std::string>> gt;
  for (const auto& a : meta.annotations) {
    const double s = a.t_start / meta.fps, e = a.t_end / meta.fps;
    gt.push_back({{s, e}, ann.labels.name(a.label) + " " + fixed(s, 2) + "-" + fixed(e, 2)});
  }
  track(0, "ground truth", "#2a9d3f", gt);
  std::size_t row = 1;
  for (const auto& [label, list] : tracks) {
    std::vector<std::pair<anchorkit::Segment, std::string>> segs;
    for (const auto& e : list)
      segs.push_back({{e.start_sec, e.end_sec}, fixed(e.start_sec, 2) + "-" + fixed(e.end_sec, 2) + " (" + fixed(e.score, 2) + ")"});
    track(row++, label, "#d9480f", segs);
  }
  svg << R"(<text x=")" << left << R"(" y=")" << total_h - 8 << R"(">0 s</text>)" << "\n"
      << R"(<text x=")" << left + width - 40 << R"(" y=")" << total_h - 8 << R"(">)" << fixed(duration, 1)
      << " s</text>\n</svg>\n";
  io::write_file(out_path, svg.str());
  out << "wrote " << out_path.string() << "\n";
}

// ---------------------------------------------------------------------------
// ablate

struct VariantOutcome {
  std::string name;
  RunConfig cfg;
  evalkit::EvalReport report;
};

void cmd_ablate(const std::string& config, const fs::path& data_dir, const fs::path& out_dir, std::int64_t log_every,
                std::ostream& out, Logger& log) {
  const RunConfig base = load_run_config(config);
  const auto data = datakit::load_dataset(data_dir);
  check_dataset(base, data);
  fs::create_directories(out_dir);
  echo_config(out_dir, base);
  const std::int64_t steps = base.ablate.max_steps > 0 ? base.ablate.max_steps : base.train.max_steps;
  const auto val = data.subset(base.eval.subset);

  std::vector<VariantOutcome> outcomes(base.ablate.variants.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    outcomes[i].name = base.ablate.variants[i];
    outcomes[i].cfg = base;
    apply_variant(outcomes[i].cfg, outcomes[i].name);
    outcomes[i].cfg.train.max_steps = steps;
    outcomes[i].cfg.validate();
  }

  std::atomic<std::size_t> next{0};
  std::mutex fail_mu;
  std::optional<Error> failure;
  auto work = [&] {
    for (std::size_t i = next++; i < outcomes.size(); i = next++) {
      auto& o = outcomes[i];
      try {
        const fs::path dir = out_dir / variant_dir(o.name);
        fs::create_directories(dir);
        echo_config(dir, o.cfg);
        pipeline::Trainer trainer(o.cfg.model(), o.cfg.train, o.cfg.seed);
        train_loop(trainer, data, steps, [&](const pipeline::StepReport& r) {
          if (log_every > 0 && (r.step + 1) % log_every == 0)
            log.line(o.name + ": step " + std::to_string(r.step + 1) + "/" + std::to_string(steps) + "  loss " +
                     fixed(r.total, 4));
        });
        std::vector<pipeline::VideoResult> res;
        o.report = evaluate_model(trainer.model(), val, o.cfg.eval.metrics, 1, &res);
        pipeline::save_results(dir / "results.json", pipeline::make_results(res, val, data.labels));
        log.line(o.name + ": done");
      } catch (const Error& e) {
        std::lock_guard lock(fail_mu);
        if (!failure) failure.emplace(e.code(), "variant " + o.name + ": " + e.what());
        next = outcomes.size();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(pipeline::worker_threads(), static_cast<unsigned>(outcomes.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(work);
    work();
  }
  if (failure) throw *failure;

  std::vector<std::pair<std::string, const evalkit::EvalReport*>> rows;
  for (const auto& o : outcomes) rows.push_back({o.name, &o.report});
  const std::string table2 = evalkit::format_table(rows, base.eval.metrics);
  std::size_t name_w = 6;
  for (const auto& o : outcomes) name_w = std::max(name_w, o.name.size());
  std::string table3 = "Method" + std::string(name_w - 6, ' ') + "   AR@" + std::to_string(base.eval.metrics.proposal_budget) + "\n";
  for (const auto& o : outcomes)
    table3 += o.name + std::string(name_w - o.name.size(), ' ') + "  " + fixed(100.0 * o.report.ar_at_n.value_or(0.0), 2) + "\n";

  json variants = json::array();
  for (const auto& o : outcomes) {
    json m = json::object();
    for (const auto& [t, v] : o.report.map) m[evalkit::threshold_label(t)] = v;
    variants.push_back({{"name", o.name},
                        {"num_levels", o.cfg.pyramid.num_levels},
                        {"downsample", pyramid::to_string(o.cfg.pyramid.variant)},
                        {"strategy", heads::to_string(o.cfg.acn.strategy)},
                        {"context", o.cfg.acn.use_context},
                        {"map", m},
                        {"average_map", o.report.average_map},
                        {"ar_at_n", o.report.ar_at_n.value_or(0.0)}});
  }
  const json summary{{"steps", steps}, {"seed", base.seed}, {"subset", base.eval.subset}, {"variants", variants}};
  io::write_file(out_dir / "table2.txt", table2);
  io::write_file(out_dir / "table3.txt", table3);
  io::write_file(out_dir / "ablation.json", json_text(summary));
  out << table2 << "\n" << table3;
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal feature pyramid activity detection on precomputed features", "tfpdet"};
  app.require_subcommand(1);
  Logger log(err);

  std::string config, out_dir, data_dir, resume, checkpoint, subset, results, annotations, preset = "activitynet",
                                                                                           proposals, report, video;
  std::uint64_t seed = 0;
  bool force = false;
  std::int64_t log_every = 100;
  double min_score = 0.0;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--config", config, "Run config JSON (defaults when omitted)");
  gen->add_option("--out", out_dir, "Output dataset directory")->required();
  gen->add_flag("--force", force, "Replace a non-empty output directory");
  auto* seed_opt = gen->add_option("--seed", seed, "Override data.seed");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config, "Run config JSON");
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", out_dir, "Run directory")->required();
  train->add_option("--resume", resume, "Checkpoint to resume from");
  train->add_option("--log-every", log_every, "Progress line cadence on stderr (0 disables)");

  auto* infer = app.add_subcommand("infer", "Detect activities with a trained checkpoint");
  infer->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  infer->add_option("--data", data_dir, "Dataset directory")->required();
  infer->add_option("--subset", subset, "Subset to process (default: eval.subset of the checkpoint config)");
  infer->add_option("--out", out_dir, "Results JSON path")->required();
  infer->add_option("--proposals", proposals, "Also write the top proposals per video to this path");

  auto* eval = app.add_subcommand("eval", "Score a results file against annotations");
  eval->add_option("--results", results, "Results JSON")->required();
  eval->add_option("--annotations", annotations, "Annotation JSON or dataset directory")->required();
  eval->add_option("--preset", preset, "activitynet or thumos")->check(CLI::IsMember({"activitynet", "thumos"}));
  eval->add_option("--subset", subset, "Only videos of this subset (default: all)");
  eval->add_option("--proposals", proposals, "Proposal JSON for AR@N");
  eval->add_option("--out", report, "Also write the JSON report here");

  auto* plot = app.add_subcommand("plot", "Render an SVG timeline of one video");
  plot->add_option("--results", results, "Results JSON")->required();
  plot->add_option("--annotations", annotations, "Annotation JSON or dataset directory")->required();
  plot->add_option("--video", video, "Video id")->required();
  plot->add_option("--out", out_dir, "SVG path")->required();
  plot->add_option("--min-score", min_score, "Hide detections scoring below this");

  auto* ablate = app.add_subcommand("ablate", "Train and compare the configured variants");
  ablate->add_option("--config", config, "Run config JSON");
  ablate->add_option("--data", data_dir, "Dataset directory")->required();
  ablate->add_option("--out", out_dir, "Report directory")->required();
  ablate->add_option("--log-every", log_every, "Progress line cadence on stderr (0 disables)");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
    }
    if (*gen) cmd_gen(config, out_dir, force, seed_opt->count() ? std::optional(seed) : std::nullopt, out);
    else if (*train) cmd_train(config, data_dir, out_dir, resume, log_every, out, log);
    else if (*infer) cmd_infer(checkpoint, data_dir, subset, out_dir, proposals, out);
    else if (*eval) cmd_eval(results, annotations, preset, subset, proposals, report, out);
    else if (*plot) cmd_plot(results, annotations, video, out_dir, min_score, out);
    else if (*ablate) cmd_ablate(config, data_dir, out_dir, log_every, out, log);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kContract);
  }
}

}  // namespace tfpdet::cli
