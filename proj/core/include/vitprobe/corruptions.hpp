#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "vitprobe/tensor.hpp"

namespace vitprobe {

enum class CorruptionKind : std::uint8_t { Contrast, GaussianNoise, SpeckleNoise, MotionBlur, Snow };

inline constexpr std::array<CorruptionKind, 5> kAllCorruptions = {
    CorruptionKind::Contrast, CorruptionKind::GaussianNoise, CorruptionKind::SpeckleNoise,
    CorruptionKind::MotionBlur, CorruptionKind::Snow};

std::string_view corruption_name(CorruptionKind kind) noexcept;
/// Throws ErrorKind::Spec for unknown names.
CorruptionKind parse_corruption_kind(std::string_view name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 5;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

// Severity tables, indexed by severity - 1. These are this library's own
// monotone choices, not the values of any external benchmark.
inline constexpr std::array<double, 5> kContrastFactor = {0.75, 0.5, 0.3, 0.2, 0.1};
inline constexpr std::array<double, 5> kNoiseSigma = {0.04, 0.08, 0.12, 0.18, 0.26};
inline constexpr std::array<int, 5> kBlurLength = {3, 5, 7, 9, 11};
inline constexpr std::array<double, 5> kSnowDensity = {0.01, 0.02, 0.03, 0.04, 0.05};
inline constexpr double kSnowAlpha = 0.85;
inline constexpr double kSnowLiftPerSeverity = 0.05;

/// Corrupts one image [C x H x W] in [0, 1]; the output is clipped to [0, 1].
/// Randomness is keyed by (spec.seed, sample_index), so corrupting a whole
/// dataset is independent of how it is partitioned.
Tensor corrupt(const Tensor& image, const CorruptionSpec& spec, std::uint64_t sample_index = 0);

// Parameter-level transforms behind corrupt(). `clip` = false exposes the raw
// transform for moment checks.
Tensor apply_contrast(const Tensor& image, double factor);
Tensor apply_gaussian_noise(const Tensor& image, double sigma, std::uint64_t key, bool clip = true);
Tensor apply_speckle_noise(const Tensor& image, double sigma, std::uint64_t key, bool clip = true);
/// Directional box blur of odd length along `angle` (radians), bilinear
/// sampling with edge clamping.
Tensor apply_motion_blur(const Tensor& image, int length, double angle);
Tensor apply_snow(const Tensor& image, int severity, std::uint64_t key);

}  // namespace vitprobe
