#include "tfpdet/pyramid.hpp"

#include <cmath>

#include "tfpdet/error.hpp"

namespace tfpdet::pyramid {

using numcore::ConstantInit;
using numcore::GaussianInit;
using numcore::ParameterStore;
using numcore::Tensor;

namespace {

constexpr std::size_t kEncoderStride = 8;

std::string block_name(std::size_t i) { return "encoder.block" + std::to_string(i); }
std::string down_name(std::size_t k) { return "pyramid.down" + std::to_string(k); }

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim == 0) throw ConfigError("encoder.input_dim must be positive");
  if (hidden_dim == 0 || hidden_dim % 2 != 0) throw ConfigError("encoder.hidden_dim must be a positive even number");
  if (stride() != kEncoderStride) throw ConfigError("encoder.num_blocks must be 3 (cumulative stride 8)");
}

std::string to_string(Downsample d) { return d == Downsample::kMax ? "MAX" : "CONV"; }

Downsample downsample_from_string(const std::string& s) {
  if (s == "MAX") return Downsample::kMax;
  if (s == "CONV") return Downsample::kConv;
  throw ConfigError("pyramid.variant must be \"MAX\" or \"CONV\", got \"" + s + "\"");
}

void PyramidConfig::validate() const {
  if (num_levels < 1 || num_levels > 3) throw ConfigError("pyramid.num_levels must lie in [1, 3]");
}

std::vector<int> level_strides(const EncoderConfig& enc, const PyramidConfig& cfg) {
  std::vector<int> s;
  for (std::size_t k = 0; k < cfg.num_levels; ++k) s.push_back(static_cast<int>(enc.stride() << k));
  return s;
}

void add_encoder_params(ParameterStore& params, const EncoderConfig& cfg) {
  std::size_t in = cfg.input_dim;
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    const double he = std::sqrt(2.0 / static_cast<double>(in * 3));
    params.add(block_name(i) + ".w", {cfg.hidden_dim, in, 3}, GaussianInit{0.0, he});
    params.add(block_name(i) + ".b", {cfg.hidden_dim}, ConstantInit{0.0});
    in = cfg.hidden_dim;
  }
}

void add_pyramid_params(ParameterStore& params, const PyramidConfig& cfg, std::size_t channels) {
  if (cfg.variant != Downsample::kConv) return;
  for (std::size_t k = 1; k < cfg.num_levels; ++k) {
    params.add(down_name(k) + ".w", {channels, channels, 3}, GaussianInit{0.0, 0.01});
    params.add(down_name(k) + ".b", {channels}, ConstantInit{0.1});
  }
}

Tensor encode(const Tensor& features, const EncoderConfig& cfg, const ParameterStore& params) {
  if (features.rank() != 2 || features.dim(0) != cfg.input_dim) {
    throw ConfigError("encode: expected " + std::to_string(cfg.input_dim) + " input channels, got features " +
                      numcore::shape_str(features.shape()));
  }
  if (features.dim(1) == 0 || features.dim(1) % cfg.stride() != 0) {
    throw ConfigError("encode: length " + std::to_string(features.dim(1)) + " is not a multiple of " +
                      std::to_string(cfg.stride()));
  }
  Tensor x = features;
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    x = numcore::temporal_conv(x, params.get(block_name(i) + ".w").tensor, params.get(block_name(i) + ".b").tensor,
                               1, 1);
    x = numcore::temporal_maxpool(numcore::relu(x), 2, 2);
  }
  return x;
}

PyramidFeatures build_pyramid(const Tensor& base, const PyramidConfig& cfg, int base_stride,
                              const ParameterStore& params) {
  const std::size_t need = std::size_t{1} << (cfg.num_levels - 1);
  if (base.rank() != 2 || base.dim(1) == 0 || base.dim(1) % need != 0) {
    throw DimensionError("build_pyramid: base " + numcore::shape_str(base.shape()) +
                         " length must be a multiple of " + std::to_string(need));
  }
  PyramidFeatures pyr;
  pyr.levels.push_back(base);
  pyr.strides.push_back(base_stride);
  for (std::size_t k = 1; k < cfg.num_levels; ++k) {
    const Tensor& prev = pyr.levels.back();
    Tensor next;
    if (cfg.variant == Downsample::kMax) {
      next = numcore::temporal_maxpool(prev, 2, 2);
    } else {
      next = numcore::relu(numcore::temporal_conv(prev, params.get(down_name(k) + ".w").tensor,
                                                  params.get(down_name(k) + ".b").tensor, 2, 1));
    }
    pyr.levels.push_back(next);
    pyr.strides.push_back(pyr.strides.back() * 2);
  }
  return pyr;
}

}  // namespace tfpdet::pyramid
