#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tfpdet/numcore.hpp"

namespace tfpdet::pyramid {

/// Temporal conv stack standing in for the 3D backbone. Each block is
/// conv(k=3, pad=1) + relu + maxpool(2, 2), so three blocks give stride 8.
struct EncoderConfig {
  std::size_t input_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t num_blocks = 3;

  std::size_t stride() const { return std::size_t{1} << num_blocks; }
  void validate() const;
};

enum class Downsample { kMax, kConv };

std::string to_string(Downsample d);
Downsample downsample_from_string(const std::string& s);  // "MAX" | "CONV"

struct PyramidConfig {
  Downsample variant = Downsample::kConv;
  std::size_t num_levels = 3;

  void validate() const;
};

/// level k has length L_buf / strides[k].
struct PyramidFeatures {
  std::vector<numcore::Tensor> levels;  // each [D×T_k]
  std::vector<int> strides;

  std::size_t num_levels() const { return levels.size(); }
  std::size_t channels() const { return levels.front().dim(0); }
};

/// Strides 8·2^k for k < num_levels.
std::vector<int> level_strides(const EncoderConfig& enc, const PyramidConfig& cfg);

/// Registers encoder weights ("encoder.block<i>.w/b"). Weights use He-scaled
/// Gaussians since they stand in for pretrained layers.
void add_encoder_params(numcore::ParameterStore& params, const EncoderConfig& cfg);

/// Registers "pyramid.down<k>.w/b" for the CONV variant; MAX adds nothing.
void add_pyramid_params(numcore::ParameterStore& params, const PyramidConfig& cfg, std::size_t channels);

/// [D_in×L] → [D×L/8]. Throws ConfigError when L is not a multiple of 8 or
/// the channel count disagrees with the config.
numcore::Tensor encode(const numcore::Tensor& features, const EncoderConfig& cfg,
                       const numcore::ParameterStore& params);

/// Cascaded down-sampling from the base map: level k+1 = down(level k).
PyramidFeatures build_pyramid(const numcore::Tensor& base, const PyramidConfig& cfg, int base_stride,
                              const numcore::ParameterStore& params);

}  // namespace tfpdet::pyramid
