// Acceptance gate: one PASS/FAIL line per criterion. Tolerances and budgets
// are fixed below; the run configuration comes from configs/acceptance.json.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "tfpdet/cli.hpp"
#include "tfpdet/error.hpp"
#include "tfpdet/io.hpp"

using namespace tfpdet;
namespace fs = std::filesystem;
using nlohmann::json;
using numcore::Tensor;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr int kGradSeeds = 24;
constexpr double kGradBudgetSec = 60.0;
constexpr int kOracleInstances = 500;
constexpr int kRoundtripPairs = 100000;
constexpr double kRoundtripTol = 1e-9;
constexpr double kOracleTol = 1e-12;  // AP/AR sums may differ in summation order only
constexpr double kCoverageMin = 0.6;
constexpr double kMapAt05Min = 0.90;
constexpr double kAverageMapMin = 0.60;
constexpr double kArMin = 0.95;
constexpr double kEndToEndBudgetSec = 15 * 60.0;
constexpr std::int64_t kEndToEndMaxSteps = 3000;
constexpr double kResumeTol = 1e-12;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void randomize(numcore::ParameterStore& params, Rng& rng, double sd) {
  for (auto& p : params.items())
    for (double& v : p.tensor.mutable_values()) v = rng.normal(0.0, sd);
}

// ---------------------------------------------------------------------------
// 1. Gradient integrity

double grad_seed(std::uint64_t seed, std::size_t* checked) {
  using namespace numcore;
  using testing::grad_check;
  using testing::random_tensor;
  Rng rng(seed);
  double worst = 0.0;
  auto record = [&](const testing::GradCheckResult& r) {
    worst = std::max(worst, r.max_rel_error);
    *checked += r.checked;
  };

  {  // linear
    auto x = random_tensor(rng, {3, 4}), w = random_tensor(rng, {4, 5}), b = random_tensor(rng, {5});
    auto tgt = random_tensor(rng, {3, 5}, false);
    record(grad_check([&] { return smooth_l1(linear(x, w, b), tgt); }, {x, w, b}, kGradStep));
  }
  {  // batched strided conv and unbatched padded conv
    auto x = random_tensor(rng, {2, 3, 9}), w = random_tensor(rng, {4, 3, 3}), b = random_tensor(rng, {4});
    auto tgt = random_tensor(rng, {2, 4, 5}, false);
    record(grad_check([&] { return smooth_l1(temporal_conv(x, w, b, 2, 1), tgt); }, {x, w, b}, kGradStep));
    auto x2 = random_tensor(rng, {3, 7});
    auto tgt2 = random_tensor(rng, {4, 7}, false);
    record(grad_check([&] { return smooth_l1(temporal_conv(x2, w, b, 1, 1), tgt2); }, {x2, w, b}, kGradStep));
  }
  {  // maxpool, relu, concat, gather, reshape, add, scale, cross-entropy
    auto a = random_tensor(rng, {3, 8}), c = random_tensor(rng, {2, 4});
    const std::vector<std::size_t> idx{0, 3, 5, 5, 11, 19};
    const std::vector<int> labels{2, 0};
    record(grad_check(
        [&] {
          auto cat = concat_channels(relu(temporal_maxpool(a, 2, 2)), c);
          auto ce = softmax_cross_entropy(reshape(gather(cat, idx, {6}), {2, 3}), labels);
          return add(scale(ce, 0.7), smooth_l1(reshape(cat, {20}), Tensor::zeros({20})));
        },
        {a, c}, kGradStep));
  }
  {  // temporal RoI pooling
    auto f = random_tensor(rng, {3, 16});
    const std::vector<anchorkit::Segment> segs{{5, 60}, {0, 20}, {33, 40}};
    auto tgt = random_tensor(rng, {3, 3, 4}, false);
    record(grad_check([&] { return smooth_l1(heads::roi_pool(f, segs, 4, 4), tgt); }, {f}, kGradStep));
  }

  // Full graphs on a tiny model. Proposal geometry is fixed, matching the
  // detached-geometry training graph.
  pipeline::ModelConfig mc;
  mc.encoder.input_dim = 3;
  mc.encoder.hidden_dim = 4;
  mc.pyramid.variant = seed % 2 == 0 ? pyramid::Downsample::kConv : pyramid::Downsample::kMax;
  mc.acn.fc_dim = 6;
  mc.acn.num_classes = 2;
  mc.acn.strategy = heads::Strategy::kS3;
  mc.buffer_len = 64;
  pipeline::Model model(mc);
  model.initialize(rng);
  randomize(model.params(), rng, 0.3);
  auto input = random_tensor(rng, {3, 64});
  std::vector<Tensor> inputs{input};
  for (auto& p : model.params().items()) inputs.push_back(p.tensor);

  const auto& grid = model.grid();
  std::vector<std::size_t> cls_slots, reg_slots;
  std::vector<int> cls_y;
  std::vector<std::vector<std::size_t>> cls_idx(3), reg_idx(3);
  std::vector<std::vector<int>> ys(3);
  for (std::size_t k = 0; k < 3; ++k) {
    for (int n = 0; n < 6; ++n) {
      const std::size_t a = grid.level_offset(k) + rng.index(grid.level_size(k));
      const auto [s0, s1] = heads::anchor_slots(grid, a);
      cls_idx[k].insert(cls_idx[k].end(), {s0, s1});
      ys[k].push_back(static_cast<int>(rng.index(2)));
      if (n < 3) reg_idx[k].insert(reg_idx[k].end(), {s0, s1});
    }
  }
  record(grad_check(
      [&] {
        const auto fwd = model.forward(input);
        Tensor loss = Tensor::scalar(0.0);
        for (std::size_t k = 0; k < 3; ++k) {
          loss = add(loss, softmax_cross_entropy(gather(fwd.apn[k].cls, cls_idx[k], {6, 2}), ys[k]));
          loss = add(loss, smooth_l1(gather(fwd.apn[k].reg, reg_idx[k], {3, 2}), Tensor::full({3, 2}, 0.3)));
        }
        return loss;
      },
      inputs, kGradStep, 6));

  const std::vector<heads::Proposal> props{{{4, 30}, 0.9, 0}, {{10, 58}, 0.8, 1}, {{20, 40}, 0.7, 2}};
  const std::vector<int> labels{1, 0, 2};
  record(grad_check(
      [&] {
        const auto fwd = model.forward(input);
        Tensor loss = Tensor::scalar(0.0);
        for (const auto& lvl : heads::acn_forward(fwd.pyr, props, 64, mc.acn, model.params())) {
          loss = add(loss, softmax_cross_entropy(lvl.cls, labels));
          loss = add(loss, smooth_l1(lvl.reg, Tensor::full(lvl.reg.shape(), -0.2)));
        }
        return loss;
      },
      inputs, kGradStep, 6));
  return worst;
}

Verdict gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  for (int s = 0; s < kGradSeeds; ++s) worst = std::max(worst, grad_seed(1000 + static_cast<std::uint64_t>(s), &checked));
  const double secs = seconds_since(t0);
  return {worst < kGradRelTol && secs < kGradBudgetSec,
          "max rel error " + fmt("%.2e", worst) + " over " + std::to_string(kGradSeeds) + " seeds, " +
              std::to_string(checked) + " checks, " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Geometry and metric oracles

Verdict oracles() {
  using namespace anchorkit;
  std::map<std::string, int> bad;
  Rng rng(2024);

  for (int i = 0; i < kOracleInstances; ++i) {
    const auto a = testing::random_segment(rng, 200), b = testing::random_segment(rng, 200);
    if (std::abs(tiou(a, b) - testing::tiou_oracle(a, b)) > kOracleTol) ++bad["tiou"];
  }
  double worst = 0.0;
  for (int i = 0; i < kRoundtripPairs; ++i) {
    const auto a = testing::random_segment(rng, 1000.0), g = testing::random_segment(rng, 1000.0);
    const auto back = apply_offsets(a, encode(a, g));
    worst = std::max({worst, std::abs(back.start - g.start), std::abs(back.end - g.end)});
  }
  if (!(worst < kRoundtripTol)) ++bad["roundtrip"];

  for (int i = 0; i < kOracleInstances; ++i) {
    const int buf = 32 * static_cast<int>(1 + rng.index(3));
    const auto grid = build_anchor_grid(buf, {8, 16}, {{1, 2, 3}, {2, 3}});
    std::vector<Segment> gts;
    for (std::size_t n = rng.index(4), j = 0; j < n; ++j) gts.push_back(testing::random_segment(rng, buf));
    const auto got = match_anchors_apn(grid, gts);
    const auto want = testing::apn_match_oracle(grid, gts);
    bool same = got.labels == want.labels && got.matched_gt == want.matched_gt;
    for (std::size_t a = 0; same && a < grid.size(); ++a)
      if (got.labels[a] == AnchorLabel::kPositive)
        same = got.targets[a].center == want.targets[a].center && got.targets[a].log_length == want.targets[a].log_length;
    if (!same) ++bad["apn_match"];
  }
  for (int i = 0; i < kOracleInstances; ++i) {
    std::vector<Segment> g, p;
    std::vector<int> l;
    for (std::size_t n = rng.index(4), j = 0; j < n; ++j) {
      g.push_back(testing::random_segment(rng, 64));
      l.push_back(1 + static_cast<int>(rng.index(3)));
    }
    for (std::size_t n = rng.index(12), j = 0; j < n; ++j) p.push_back(testing::random_segment(rng, 64));
    const auto got = match_proposals_acn(p, g, l);
    const auto want = testing::acn_match_oracle(p, g, l);
    if (got.labels != want.labels || got.matched_gt != want.matched_gt) ++bad["acn_match"];
  }
  for (int i = 0; i < kOracleInstances; ++i) {
    std::vector<Segment> s;
    std::vector<double> sc;
    for (std::size_t n = rng.index(30), j = 0; j < n; ++j) {
      s.push_back(testing::random_segment(rng, 100));
      sc.push_back(std::round(rng.uniform() * 20) / 20);
    }
    const double th = rng.uniform(0.1, 0.9);
    const std::size_t keep = rng.index(3) == 0 ? 5 : 0;
    if (nms(s, sc, th, keep) != testing::nms_oracle(s, sc, th, keep)) ++bad["nms"];
  }
  for (int i = 0; i < kOracleInstances; ++i) {
    std::vector<evalkit::GroundTruth> gts;
    std::vector<evalkit::Detection> dets;
    for (std::int64_t n = rng.integer(1, 6), j = 0; j < n; ++j)
      gts.push_back({rng.uniform() < .5 ? "a" : "b", testing::random_segment(rng, 40), 1});
    for (std::int64_t n = rng.integer(0, 12), j = 0; j < n; ++j)
      dets.push_back({rng.uniform() < .5 ? "a" : "b", testing::random_segment(rng, 40), 1, std::round(rng.uniform() * 4) / 4});
    const double th = rng.uniform(0.1, 0.9);
    if (std::abs(evalkit::average_precision(dets, gts, th) - testing::ap_oracle(dets, gts, th)) > kOracleTol) ++bad["ap"];
  }
  const auto grid = evalkit::default_tiou_grid();
  for (int i = 0; i < kOracleInstances; ++i) {
    std::vector<evalkit::GroundTruth> gts;
    std::vector<evalkit::ScoredProposal> props;
    for (std::int64_t n = rng.integer(1, 6), j = 0; j < n; ++j)
      gts.push_back({rng.uniform() < .5 ? "a" : "b", testing::random_segment(rng, 30), 1});
    for (std::int64_t n = rng.integer(0, 20), j = 0; j < n; ++j)
      props.push_back({rng.uniform() < .5 ? "a" : "b", testing::random_segment(rng, 30), std::round(rng.uniform() * 8) / 8});
    const auto budget = static_cast<std::size_t>(rng.integer(1, 10));
    if (std::abs(evalkit::average_recall(props, gts, budget, grid) - testing::ar_oracle(props, gts, budget, grid)) >
        kOracleTol)
      ++bad["ar"];
  }

  std::string detail = std::to_string(kOracleInstances) + " instances each, roundtrip max err " + fmt("%.1e", worst);
  int total = 0;
  for (const auto& [name, n] : bad) {
    detail += "; " + name + " discrepancies " + std::to_string(n);
    total += n;
  }
  return {total == 0, detail};
}

// ---------------------------------------------------------------------------
// 3. Anchor table

Verdict anchor_table() {
  const auto grid = anchorkit::build_anchor_grid(768);
  const std::vector<std::vector<double>> want{{8, 16, 24, 32, 40, 48, 56},
                                              {64, 80, 96, 112, 128, 144, 160},
                                              {192, 224, 256, 288, 320, 352, 384, 416, 448, 480, 512}};
  bool ok = grid.num_levels() == 3;
  for (std::size_t k = 0; ok && k < 3; ++k) {
    std::vector<double> got;
    for (double s : grid.scales[k]) got.push_back(s * grid.strides[k]);
    ok = got == want[k] && grid.anchors_per_position(k) == want[k].size();
  }
  double worst = 1.0;
  for (int len = 8; len <= 512; ++len) {
    double best = 0.0;
    for (std::size_t k = 0; k < grid.num_levels(); ++k)
      for (double s : grid.scales[k]) {
        const double a = s * grid.strides[k];
        best = std::max(best, std::min<double>(a, len) / std::max<double>(a, len));
      }
    worst = std::min(worst, best);
  }
  return {ok && worst >= kCoverageMin,
          std::string("lengths and counts {7,7,11} ") + (ok ? "match" : "differ") + "; worst best-anchor tIoU " +
              fmt("%.4f", worst)};
}

// ---------------------------------------------------------------------------
// Shared synthetic experiment

datakit::Dataset synthetic(const cli::RunConfig& cfg) {
  auto s = datakit::generate_synthetic(cfg.data);
  return {std::move(s.videos), std::move(s.labels)};
}

struct Trained {
  evalkit::EvalReport report;
  std::int64_t steps = 0;
  double seconds = 0.0;
};

Trained train_and_evaluate(const cli::RunConfig& cfg, const datakit::Dataset& data, const std::string& tag) {
  const auto t0 = Clock::now();
  pipeline::Trainer trainer(cfg.model(), cfg.train, cfg.seed);
  cli::train_loop(trainer, data, cfg.train.max_steps, [&](const pipeline::StepReport& r) {
    if ((r.step + 1) % 500 == 0)
      std::cerr << "  [" << tag << "] step " << r.step + 1 << "/" << cfg.train.max_steps << " loss " << r.total << "\n";
  });
  Trained out;
  out.report = cli::evaluate_model(trainer.model(), data.subset(cfg.eval.subset), cfg.eval.metrics,
                                   pipeline::worker_threads());
  out.steps = trainer.step();
  out.seconds = seconds_since(t0);
  return out;
}

// ---------------------------------------------------------------------------
// 7. Format round-trips

Verdict formats() {
  std::vector<std::string> failures;
  Rng rng(9);
  {
    std::vector<double> v(5 * 37);
    for (double& x : v) x = static_cast<double>(static_cast<float>(rng.normal(0.0, 3.0)));
    const auto t = Tensor::from({5, 37}, v);
    const auto bytes = datakit::encode_features(t);
    const auto back = datakit::decode_features(bytes);
    if (datakit::encode_features(back) != bytes || !std::equal(v.begin(), v.end(), back.values().begin()))
      failures.push_back("tfpv");
  }
  datakit::SynthConfig sc;
  sc.num_videos = 6;
  sc.num_val = 2;
  sc.feature_dim = 8;
  const auto data = datakit::generate_synthetic(sc);
  {
    datakit::AnnotationSet set;
    set.labels = data.labels;
    for (const auto& r : data.videos) set.videos[r.video_id] = {r.video_id, r.fps, r.num_frames, r.subset, r.annotations};
    const auto text = datakit::dump_annotations(set);
    if (datakit::dump_annotations(datakit::parse_annotations(text)) != text) failures.push_back("annotations");
  }
  pipeline::ModelConfig mc;
  mc.encoder.input_dim = 8;
  mc.encoder.hidden_dim = 16;
  mc.acn.fc_dim = 32;
  pipeline::TrainConfig tc;
  tc.sgd.lr_decay_every = 3;
  std::vector<std::vector<datakit::Buffer>> bufs;
  for (const auto& r : data.videos)
    if (r.subset == "train") bufs.push_back(datakit::make_buffers(r, 768));

  double resume_err = 0.0;
  const int t = 4;
  {
    pipeline::Trainer full(mc, tc, 5);
    std::vector<pipeline::StepReport> ref;
    for (int i = 0; i < t + 2; ++i) ref.push_back(full.train_step(bufs));
    pipeline::Trainer head(mc, tc, 5);
    for (int i = 0; i < t; ++i) head.train_step(bufs);
    const auto bytes = pipeline::encode_checkpoint(pipeline::snapshot(head, json{{"k", 1}}));
    if (pipeline::encode_checkpoint(pipeline::decode_checkpoint(bytes)) != bytes) failures.push_back("checkpoint");
    pipeline::Trainer tail(mc, tc, 77);
    pipeline::restore(tail, pipeline::decode_checkpoint(bytes));
    for (int i = t; i < t + 2; ++i) {
      const auto r = tail.train_step(bufs);
      resume_err = std::max(resume_err, std::abs(r.total - ref[static_cast<std::size_t>(i)].total));
      if (r.step != ref[static_cast<std::size_t>(i)].step) resume_err = 1.0;
    }
    if (!(resume_err <= kResumeTol)) failures.push_back("resume");

    std::vector<const datakit::VideoRecord*> val;
    for (const auto& r : data.videos)
      if (r.subset == "val") val.push_back(&r);
    auto mc_inf = mc;
    mc_inf.acn.score_thresh = 0.0;
    pipeline::Model m(mc_inf);
    pipeline::load_parameters(m, pipeline::decode_checkpoint(bytes));
    const auto text = pipeline::dump_results(pipeline::make_results(pipeline::infer_videos(val, m, 1), val, data.labels));
    if (pipeline::dump_results(pipeline::parse_results(text)) != text) failures.push_back("results");
  }
  std::string detail = "tfpv, annotations, checkpoint, results; resume |dloss| " + fmt("%.1e", resume_err);
  for (const auto& f : failures) detail += "; FAILED " + f;
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// 8. CLI determinism

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "tfpdet_acceptance_det";
  fs::remove_all(root);
  fs::create_directories(root);
  auto run = [&](std::vector<std::string> args, std::string* stdout_text = nullptr) {
    args.insert(args.begin(), "tfpdet");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (stdout_text) *stdout_text = out.str();
    if (code != 0) throw std::runtime_error("tfpdet " + args[1] + " failed: " + err.str());
  };
  auto tree = [](const fs::path& dir) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
    return m;
  };
  const std::string cfg = (root / "cfg.json").string();
  io::write_file(cfg, json{{"data", {{"num_videos", 8}, {"num_val", 3}}}, {"train", {{"max_steps", 12}, {"checkpoint_every", 6}}}}
                          .dump());
  std::vector<std::string> same;
  try {
    for (const char* d : {"a", "b"}) {
      const auto base = (root / d).string();
      run({"gen", "--config", cfg, "--out", base + "/data", "--seed", "7"});
      run({"train", "--config", cfg, "--data", base + "/data", "--out", base + "/run", "--log-every", "0"});
      run({"infer", "--checkpoint", base + "/run/model.tfpm", "--data", base + "/data", "--out", base + "/results.json",
           "--proposals", base + "/proposals.json"});
      std::string report;
      run({"eval", "--results", base + "/results.json", "--annotations", base + "/data", "--subset", "val",
           "--proposals", base + "/proposals.json"},
          &report);
      io::write_file(base + "/eval.txt", report);
    }
  } catch (const std::exception& e) {
    fs::remove_all(root);
    return {false, e.what()};
  }
  const auto a = tree(root / "a"), b = tree(root / "b");
  fs::remove_all(root);
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a)
    if (!b.count(name) || b.at(name) != bytes) ++differing;
  return {differing == 0 && a.size() == b.size(),
          "gen/train/infer/eval outputs compared: " + std::to_string(a.size()) + " files, " + std::to_string(differing) +
              " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string config_path = "configs/acceptance.json";
  std::vector<std::string> only;
  app.add_option("--config", config_path, "Acceptance run config");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  cli::RunConfig cfg;
  try {
    cfg = cli::load_run_config(config_path);
  } catch (const Error& e) {
    std::cerr << "cannot load " << config_path << ": " << e.what() << "\n";
    return 2;
  }
  const std::set<std::string> wanted(only.begin(), only.end());
  auto enabled = [&](const std::string& n) { return wanted.empty() || wanted.count(n); };

  int failed = 0, ran = 0;
  auto report = [&](const std::string& name, const std::function<Verdict()>& fn) {
    if (!enabled(name)) return;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << name << ": " << v.detail << std::endl;
  };

  report("gradient-integrity", gradients);
  report("geometry-oracles", oracles);
  report("anchor-table", anchor_table);

  // End-to-end model, reused for the proposal-quality ceiling.
  std::optional<Trained> e2e;
  const bool need_e2e = enabled("end-to-end") || enabled("proposal-quality");
  const bool need_ablation = enabled("ablation-direction") || enabled("proposal-quality");
  std::map<std::string, Trained> variants;
  if (need_e2e || need_ablation) {
    const auto data = synthetic(cfg);
    if (need_e2e) {
      auto e = cfg;
      cli::apply_variant(e, "MS(CONV)(S3)(CTX)");
      e.train.max_steps = std::min(e.train.max_steps, kEndToEndMaxSteps);
      e2e = train_and_evaluate(e, data, "MS(CONV)(S3)(CTX)");
    }
    if (need_ablation) {
      for (const auto& name : {"RC3D", "MS(CONV)(S1)", "MS(CONV)(S1)(CTX)"}) {
        auto v = cfg;
        cli::apply_variant(v, name);
        if (cfg.ablate.max_steps > 0) v.train.max_steps = cfg.ablate.max_steps;
        variants[name] = train_and_evaluate(v, data, name);
      }
    }
  }

  report("end-to-end", [&] {
    const auto& r = e2e->report;
    const double m05 = r.map.at(0.5);
    return Verdict{m05 >= kMapAt05Min && r.average_map >= kAverageMapMin && e2e->seconds < kEndToEndBudgetSec &&
                       e2e->steps <= kEndToEndMaxSteps,
                   "MS(CONV)(S3)(CTX) " + std::to_string(e2e->steps) + " steps: mAP@0.5 " + fmt("%.4f", m05) +
                       ", average mAP " + fmt("%.4f", r.average_map) + ", " + fmt("%.0f", e2e->seconds) + " s"};
  });
  report("ablation-direction", [&] {
    const double base = variants.at("RC3D").report.average_map;
    const double ms = variants.at("MS(CONV)(S1)").report.average_map;
    const double ctx = variants.at("MS(CONV)(S1)(CTX)").report.average_map;
    return Verdict{ms >= base && ctx >= ms, "average mAP RC3D " + fmt("%.4f", base) + " <= MS(CONV)(S1) " +
                                                fmt("%.4f", ms) + " <= MS(CONV)(S1)(CTX) " + fmt("%.4f", ctx) + " (" +
                                                std::to_string(variants.at("RC3D").steps) + " steps each)"};
  });
  report("proposal-quality", [&] {
    const double single = variants.at("RC3D").report.ar_at_n.value();
    const double multi = variants.at("MS(CONV)(S1)").report.ar_at_n.value();
    const double converged = e2e->report.ar_at_n.value();
    return Verdict{multi >= single && converged >= kArMin,
                   "AR@100 single-scale " + fmt("%.4f", single) + " vs multi-scale " + fmt("%.4f", multi) +
                       " at equal budget; converged multi-scale " + fmt("%.4f", converged) + " (need >= " +
                       fmt("%.2f", kArMin) + ")"};
  });
  report("format-roundtrips", formats);
  report("cli-determinism", determinism);

  std::cout << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
