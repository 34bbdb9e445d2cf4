#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tfpdet/datakit.hpp"
#include "tfpdet/evalkit.hpp"
#include "tfpdet/pipeline.hpp"
#include "tfpdet/runconfig.hpp"

namespace tfpdet::cli {

/// Entry point of the `tfpdet` executable. Returns the process exit code;
/// diagnostics go to `err`, reports to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// ConfigError unless the dataset's feature width and label count agree with
/// the configured encoder and classifier.
void check_dataset(const RunConfig& cfg, const datakit::Dataset& data);

/// Trains on the "train" subset from the trainer's current step up to
/// `max_steps`, calling `on_step` after every step.
void train_loop(pipeline::Trainer& trainer, const datakit::Dataset& data, std::int64_t max_steps,
                const std::function<void(const pipeline::StepReport&)>& on_step);

/// Ground truth of the given videos, in seconds.
std::vector<evalkit::GroundTruth> ground_truth_seconds(const std::vector<const datakit::VideoRecord*>& videos);

/// Inference plus mAP and AR@N on a subset; times are compared in seconds.
evalkit::EvalReport evaluate_model(const pipeline::Model& model, const std::vector<const datakit::VideoRecord*>& videos,
                                   const evalkit::EvalConfig& cfg, unsigned threads,
                                   std::vector<pipeline::VideoResult>* results = nullptr);

/// Filesystem-safe directory name for a variant label.
std::string variant_dir(const std::string& name);

}  // namespace tfpdet::cli
