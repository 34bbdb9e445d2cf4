#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfpdet/datakit.hpp"
#include "tfpdet/evalkit.hpp"
#include "tfpdet/heads.hpp"
#include "tfpdet/pipeline.hpp"
#include "tfpdet/pyramid.hpp"

namespace tfpdet::cli {

struct EvalSection {
  evalkit::EvalConfig metrics;
  std::string subset = "val";
};

struct AblateSection {
  std::vector<std::string> variants{"RC3D",
                                    "MS(MAX)(S1)",
                                    "MS(CONV)(S1)",
                                    "MS(CONV)(S1)(CTX)",
                                    "MS(CONV)(S2)(CTX)",
                                    "MS(CONV)(S3)(CTX)"};
  std::int64_t max_steps = 0;  // 0: use train.max_steps
};

/// Everything a run needs, one JSON document. Omitted keys take defaults;
/// a few defaults follow other sections (see resolve()).
struct RunConfig {
  datakit::SynthConfig data;
  pyramid::EncoderConfig encoder;
  pyramid::PyramidConfig pyramid;
  heads::ApnConfig apn;
  heads::AcnConfig acn;
  pipeline::TrainConfig train;
  EvalSection eval;
  AblateSection ablate;
  std::uint64_t seed = 0;

  pipeline::ModelConfig model() const;
  void validate() const;
};

/// Default anchor scales for a pyramid depth: Table-style scales for the
/// first K levels, all 25 scales on one level when K = 1.
std::vector<std::vector<double>> scales_for_levels(std::size_t num_levels);

/// Parses and resolves a config document. Unknown keys and ill-typed values
/// raise ConfigError naming the offending key path.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Ablation variant names: "RC3D" (single level, all scales on stride 8,
/// S1, no context) or "MS(MAX|CONV)(S1|S2|S3)" with optional "(CTX)".
void apply_variant(RunConfig& cfg, const std::string& name);

}  // namespace tfpdet::cli
