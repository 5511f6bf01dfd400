#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vitprobe/corruptions.hpp"
#include "vitprobe/tensor.hpp"

namespace vitprobe {

struct DatasetSpec {
  std::string name = "synth";
  std::size_t num_classes = 10;
  std::size_t num_samples = 1000;
  std::size_t image_size = 32;
  std::uint64_t seed = 0;
  std::optional<CorruptionSpec> corruption;

  void validate() const;
};

std::string dataset_spec_to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(std::string_view text);

/// Images [N x 3 x H x W] in [0, 1] (not normalized) with integer labels.
struct Dataset {
  std::string name;
  std::size_t num_classes = 0;
  Tensor images;
  std::vector<std::int32_t> labels;
  std::optional<DatasetSpec> spec;  // set when the dataset came from the generator

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_size() const { return images.extent(2); }
  Tensor image(std::size_t i) const;
  /// Rows in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Images of a contiguous or gathered batch.
  Tensor gather(std::span<const std::size_t> indices) const;
};

/// Procedural shapes: class c draws shape (disc, square, triangle, ring,
/// cross)[c % 5] with a solid (c < 5) or striped (c >= 5) fill. Sample i
/// depends only on (seed, i), and labels cycle so classes are balanced.
Dataset synth_generate(const DatasetSpec& spec);

/// One generated sample; equals synth_generate(spec).image(index).
Tensor synth_image(const DatasetSpec& spec, std::size_t index);
std::int32_t synth_label(const DatasetSpec& spec, std::size_t index);

/// Applies the corruption to every image with sample_index = row, then
/// quantizes to 8 bits so the dataset survives a PPM round trip.
Dataset corrupt_dataset(const Dataset& clean, const CorruptionSpec& spec);

/// Rounds pixel values to multiples of 1/255.
void quantize_8bit(Tensor& images);

inline constexpr std::array<float, 3> kChannelMean = {0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kChannelStd = {0.229f, 0.224f, 0.225f};
inline constexpr std::size_t kCropPadding = 4;

/// Channelwise (x - mean) / std on a batch [B x 3 x H x W].
Tensor normalize(const Tensor& batch);
Tensor denormalize(const Tensor& batch);

/// Bilinear resize of a batch to size x size (identity when already that size).
Tensor resize(const Tensor& batch, std::size_t size);
/// Center crop to size x size (identity when already that size).
Tensor center_crop(const Tensor& batch, std::size_t size);
/// Zero-pad by `pad` and crop back at a random offset, per image.
Tensor random_crop(const Tensor& batch, std::size_t pad, std::uint64_t key);
/// Mirror columns (c -> W-1-c) of each image with probability 1/2.
Tensor random_flip(const Tensor& batch, std::uint64_t key);

/// Random crop, resize, random horizontal flip, normalize.
Tensor preprocess_train(const Tensor& batch, std::size_t image_size, std::uint64_t key);
/// Resize, center crop, normalize. Deterministic.
Tensor preprocess_eval(const Tensor& batch, std::size_t image_size);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified seeded split: within each class a seeded permutation assigns the
/// first 80% to train and the rest to test; each side is then shuffled.
Split split_80_20(std::span<const std::int32_t> labels, std::uint64_t seed);

/// Binary PPM (P6, maxval 255) images + labels.csv + manifest.json.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const Tensor& image, const std::filesystem::path& path);

}  // namespace vitprobe
