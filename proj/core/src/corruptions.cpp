#include "vitprobe/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "vitprobe/rng.hpp"

namespace vitprobe {

namespace {

void check_image(const Tensor& image) {
  if (image.rank() != 3) fail(ErrorKind::Dimension, "expected image [C x H x W], got " + shape_string(image.shape()));
}

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Sub-streams of the per-image key, so e.g. the blur angle does not depend on
// the noise draws.
constexpr std::uint64_t kAngleStream = 0xA1;
constexpr std::uint64_t kNoiseStream = 0xB2;
constexpr std::uint64_t kSnowStream = 0xC3;

}  // namespace

std::string_view corruption_name(CorruptionKind kind) noexcept {
  switch (kind) {
    case CorruptionKind::Contrast: return "contrast";
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::SpeckleNoise: return "speckle_noise";
    case CorruptionKind::MotionBlur: return "motion_blur";
    case CorruptionKind::Snow: return "snow";
  }
  return "?";
}

CorruptionKind parse_corruption_kind(std::string_view name) {
  for (CorruptionKind k : kAllCorruptions) {
    if (corruption_name(k) == name) return k;
  }
  fail(ErrorKind::Spec, "unknown corruption kind '" + std::string(name) +
                            "' (expected contrast, gaussian_noise, speckle_noise, motion_blur, snow)");
}

void CorruptionSpec::validate() const {
  if (severity < 1 || severity > 5) fail(ErrorKind::Spec, "severity must be in 1..5, got " + std::to_string(severity));
  if (static_cast<std::size_t>(kind) >= kAllCorruptions.size()) fail(ErrorKind::Spec, "unknown corruption kind");
}

Tensor apply_contrast(const Tensor& image, double factor) {
  check_image(image);
  Tensor out(image.shape());
  const std::size_t plane = image.extent(1) * image.extent(2);
  for (std::size_t c = 0; c < image.extent(0); ++c) {
    const float* src = image.data().data() + c * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += src[i];
    mean /= static_cast<double>(plane);
    float* dst = out.data().data() + c * plane;
    // factor * x + (1 - factor) * mean: exact identity at factor 1.
    for (std::size_t i = 0; i < plane; ++i) dst[i] = clip01(factor * src[i] + (1.0 - factor) * mean);
  }
  return out;
}

Tensor apply_gaussian_noise(const Tensor& image, double sigma, std::uint64_t key, bool clip) {
  check_image(image);
  KeyedRng rng(combine_key(key, kNoiseStream));
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = image[i] + sigma * rng.normal();
    out[i] = clip ? clip01(v) : static_cast<float>(v);
  }
  return out;
}

Tensor apply_speckle_noise(const Tensor& image, double sigma, std::uint64_t key, bool clip) {
  check_image(image);
  KeyedRng rng(combine_key(key, kNoiseStream));
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double x = image[i];
    const double v = x + x * sigma * rng.normal();
    out[i] = clip ? clip01(v) : static_cast<float>(v);
  }
  return out;
}

Tensor apply_motion_blur(const Tensor& image, int length, double angle) {
  check_image(image);
  if (length < 1 || length % 2 == 0) fail(ErrorKind::Spec, "blur length must be a positive odd number");
  const std::size_t C = image.extent(0), H = image.extent(1), W = image.extent(2);
  const double dx = std::cos(angle), dy = std::sin(angle);
  const int half = length / 2;
  const double weight = 1.0 / length;
  Tensor out(image.shape());
  auto sample = [&](const float* plane, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(W - 1));
    y = std::clamp(y, 0.0, static_cast<double>(H - 1));
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
    const double top = plane[y0 * W + x0] * (1.0 - fx) + plane[y0 * W + x1] * fx;
    const double bottom = plane[y1 * W + x0] * (1.0 - fx) + plane[y1 * W + x1] * fx;
    return top * (1.0 - fy) + bottom * fy;
  };
  for (std::size_t c = 0; c < C; ++c) {
    const float* plane = image.data().data() + c * H * W;
    float* dst = out.data().data() + c * H * W;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int t = -half; t <= half; ++t) {
          acc += weight * sample(plane, static_cast<double>(x) + t * dx, static_cast<double>(y) + t * dy);
        }
        dst[y * W + x] = clip01(acc);
      }
    }
  }
  return out;
}

Tensor apply_snow(const Tensor& image, int severity, std::uint64_t key) {
  check_image(image);
  if (severity < 1 || severity > 5) fail(ErrorKind::Spec, "snow severity must be in 1..5");
  const std::size_t C = image.extent(0), H = image.extent(1), W = image.extent(2);
  const double density = kSnowDensity[static_cast<std::size_t>(severity - 1)];
  const int streak = 1 + severity;

  // Streak seeds and wind direction come from severity-independent draws, so
  // the mask at severity s is contained in the mask at s + 1.
  KeyedRng rng(combine_key(key, kSnowStream));
  const double angle = std::numbers::pi * (0.25 + 0.5 * rng.uniform());
  const double dx = std::cos(angle), dy = std::sin(angle);
  std::vector<unsigned char> mask(H * W, 0);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      if (rng.uniform() >= density) continue;
      for (int t = 0; t < streak; ++t) {
        const long px = std::lround(static_cast<double>(x) + t * dx);
        const long py = std::lround(static_cast<double>(y) + t * dy);
        if (px < 0 || py < 0 || px >= static_cast<long>(W) || py >= static_cast<long>(H)) break;
        mask[static_cast<std::size_t>(py) * W + static_cast<std::size_t>(px)] = 1;
      }
    }
  }
  const double lift = kSnowLiftPerSeverity * severity;
  Tensor out(image.shape());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < H * W; ++i) {
      const double x = image[c * H * W + i];
      const double a = mask[i] ? kSnowAlpha : 0.0;
      out[c * H * W + i] = clip01(x * (1.0 - a) + a + lift);
    }
  }
  return out;
}

Tensor corrupt(const Tensor& image, const CorruptionSpec& spec, std::uint64_t sample_index) {
  spec.validate();
  const std::size_t s = static_cast<std::size_t>(spec.severity - 1);
  const std::uint64_t key = combine_key(spec.seed, sample_index);
  switch (spec.kind) {
    case CorruptionKind::Contrast: return apply_contrast(image, kContrastFactor[s]);
    case CorruptionKind::GaussianNoise: return apply_gaussian_noise(image, kNoiseSigma[s], key);
    case CorruptionKind::SpeckleNoise: return apply_speckle_noise(image, kNoiseSigma[s], key);
    case CorruptionKind::MotionBlur: {
      KeyedRng rng(combine_key(key, kAngleStream));
      return apply_motion_blur(image, kBlurLength[s], std::numbers::pi * rng.uniform());
    }
    case CorruptionKind::Snow: return apply_snow(image, spec.severity, key);
  }
  fail(ErrorKind::Spec, "unknown corruption kind");
}

}  // namespace vitprobe
