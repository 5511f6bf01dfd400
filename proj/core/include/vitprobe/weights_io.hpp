#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vitprobe/vit.hpp"

namespace vitprobe {

struct LoadedModel {
  ModelConfig config;
  ModelWeights<float> weights;
};

/// "VITW" container: little-endian f32 tensors under their canonical names,
/// with the full ModelConfig embedded in the manifest.
void save_weights(const ModelWeights<float>& w, const ModelConfig& cfg, const std::filesystem::path& path);

/// Validates every tensor against the embedded config; never returns partial
/// weights.
LoadedModel load_weights(const std::filesystem::path& path);

std::vector<unsigned char> encode_weights(const ModelWeights<float>& w, const ModelConfig& cfg);
LoadedModel decode_weights(std::span<const unsigned char> bytes, const std::string& origin = "<memory>");

/// Truncated normal (std 0.02, cut at +-2 std) for weight matrices and
/// embeddings, zeros for biases/betas, ones for gammas. Each tensor draws from
/// its own counter-based stream keyed by (seed, tensor name).
ModelWeights<float> init_toy(const ModelConfig& cfg, std::uint64_t seed);

inline constexpr double kInitStd = 0.02;

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(std::string_view text);
/// Accepts a preset name ("toy", "base") or a path to a JSON config file.
ModelConfig resolve_model_config(const std::string& preset_or_path);

/// CLS features captured at a set of taps over one dataset.
struct FeatureSet {
  ModelConfig config;
  std::vector<std::int32_t> labels;
  std::map<TapId, Tensor> features;  // [N x tap_width]
  std::string source;                // free-form provenance (dataset name, split)
};

/// "VITF" container holding features + labels + tap metadata.
void save_features(const FeatureSet& set, const std::filesystem::path& path);
FeatureSet load_features(const std::filesystem::path& path);

}  // namespace vitprobe
