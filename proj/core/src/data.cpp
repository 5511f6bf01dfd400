#include "vitprobe/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "vitprobe/io.hpp"
#include "vitprobe/rng.hpp"

namespace vitprobe {

namespace {

constexpr std::size_t kChannels = 3;
constexpr std::size_t kNumShapes = 5;

nlohmann::json spec_json(const DatasetSpec& s) {
  nlohmann::json j = {{"name", s.name},
                      {"num_classes", s.num_classes},
                      {"num_samples", s.num_samples},
                      {"image_size", s.image_size},
                      {"seed", s.seed},
                      {"generator", "synth-shapes-v1"}};
  if (s.corruption) {
    j["corruption"] = {{"kind", corruption_name(s.corruption->kind)},
                       {"severity", s.corruption->severity},
                       {"seed", s.corruption->seed}};
  } else {
    j["corruption"] = nullptr;
  }
  return j;
}

DatasetSpec spec_from(const nlohmann::json& j) {
  DatasetSpec s;
  try {
    if (j.contains("name")) s.name = j.at("name").get<std::string>();
    if (j.contains("num_classes")) s.num_classes = j.at("num_classes").get<std::size_t>();
    if (j.contains("num_samples")) s.num_samples = j.at("num_samples").get<std::size_t>();
    if (j.contains("image_size")) s.image_size = j.at("image_size").get<std::size_t>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("corruption") && !j.at("corruption").is_null()) {
      const auto& c = j.at("corruption");
      CorruptionSpec cs;
      cs.kind = parse_corruption_kind(c.at("kind").get<std::string>());
      cs.severity = c.at("severity").get<int>();
      if (c.contains("seed")) cs.seed = c.at("seed").get<std::uint64_t>();
      s.corruption = cs;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Spec, std::string("dataset spec: ") + e.what());
  }
  s.validate();
  return s;
}

bool inside_shape(std::size_t shape, double u, double v) {
  switch (shape) {
    case 0: return u * u + v * v <= 1.0;                               // disc
    case 1: return std::abs(u) <= 0.8 && std::abs(v) <= 0.8;           // square
    case 2: return v >= -0.5 && v <= 1.0 - std::sqrt(3.0) * std::abs(u);  // triangle
    case 3: {                                                          // ring
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    }
    default:                                                           // cross
      return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
  }
}

}  // namespace

void DatasetSpec::validate() const {
  if (num_classes < 1 || num_classes > 2 * kNumShapes) {
    fail(ErrorKind::Spec, "num_classes must be in 1..10, got " + std::to_string(num_classes));
  }
  if (num_samples == 0) fail(ErrorKind::Spec, "num_samples must be positive");
  if (image_size < 8) fail(ErrorKind::Spec, "image_size must be at least 8");
  if (corruption) corruption->validate();
}

std::string dataset_spec_to_json(const DatasetSpec& spec) { return spec_json(spec).dump(2); }

DatasetSpec dataset_spec_from_json(std::string_view text) {
  try {
    return spec_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Spec, std::string("dataset spec is not valid JSON: ") + e.what());
  }
}

Tensor Dataset::image(std::size_t i) const {
  const std::size_t n = images.size() / images.extent(0);
  const auto first = images.storage().begin() + static_cast<std::ptrdiff_t>(i * n);
  return Tensor({images.extent(1), images.extent(2), images.extent(3)}, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(n)));
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) fail(ErrorKind::Data, "cannot gather an empty batch");
  const std::size_t n = images.size() / images.extent(0);
  Tensor out({indices.size(), images.extent(1), images.extent(2), images.extent(3)});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) fail(ErrorKind::Data, "sample index " + std::to_string(indices[r]) + " out of range");
    std::copy_n(images.data().data() + indices[r] * n, n, out.data().data() + r * n);
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.name = name;
  out.num_classes = num_classes;
  out.spec = spec;
  out.images = gather(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels[i]);
  return out;
}

std::int32_t synth_label(const DatasetSpec& spec, std::size_t index) {
  return static_cast<std::int32_t>(index % spec.num_classes);
}

Tensor synth_image(const DatasetSpec& spec, std::size_t index) {
  const std::size_t S = spec.image_size;
  const auto label = static_cast<std::size_t>(synth_label(spec, index));
  const std::size_t shape = label % kNumShapes;
  const bool striped = label >= kNumShapes;

  KeyedRng rng(combine_key(spec.seed, index));
  std::array<double, kChannels> bg{}, fg{};
  for (auto& c : bg) c = rng.uniform(0.0, 0.35);
  for (auto& c : fg) c = rng.uniform(0.55, 1.0);
  const double half = static_cast<double>(S) / 2.0;
  const double jitter = static_cast<double>(S) * 0.1;
  const double cx = half + rng.uniform(-jitter, jitter);
  const double cy = half + rng.uniform(-jitter, jitter);
  const double radius = static_cast<double>(S) * rng.uniform(0.24, 0.34);
  const double theta = rng.uniform(-1.0, 1.0) * std::numbers::pi / 9.0;
  const double ct = std::cos(theta), st = std::sin(theta);

  Tensor img({kChannels, S, S});
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      // 2x2 supersampling for soft edges.
      double coverage = 0.0;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double px = static_cast<double>(x) + 0.25 + 0.5 * sx;
          const double py = static_cast<double>(y) + 0.25 + 0.5 * sy;
          const double rx = (px - cx) / radius, ry = (cy - py) / radius;
          const double u = ct * rx + st * ry, v = -st * rx + ct * ry;
          if (!inside_shape(shape, u, v)) continue;
          if (striped && static_cast<long>(std::floor(py / 2.0)) % 2 != 0) continue;
          coverage += 0.25;
        }
      }
      for (std::size_t c = 0; c < kChannels; ++c) {
        img[(c * S + y) * S + x] = static_cast<float>(bg[c] + (fg[c] - bg[c]) * coverage);
      }
    }
  }
  quantize_8bit(img);
  return img;
}

void quantize_8bit(Tensor& images) {
  for (auto& v : images.storage()) {
    const long q = std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0);
    v = static_cast<float>(q) / 255.0f;
  }
}

Dataset synth_generate(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.name = spec.name;
  ds.num_classes = spec.num_classes;
  ds.spec = spec;
  const std::size_t S = spec.image_size, per = kChannels * S * S;
  ds.images = Tensor({spec.num_samples, kChannels, S, S});
  ds.labels.resize(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    const Tensor img = synth_image(spec, i);
    std::copy(img.storage().begin(), img.storage().end(), ds.images.storage().begin() + static_cast<std::ptrdiff_t>(i * per));
    ds.labels[i] = synth_label(spec, i);
  }
  if (spec.corruption) {
    DatasetSpec clean_spec = spec;
    clean_spec.corruption.reset();
    ds.spec = clean_spec;
    return corrupt_dataset(ds, *spec.corruption);
  }
  return ds;
}

Dataset corrupt_dataset(const Dataset& clean, const CorruptionSpec& spec) {
  spec.validate();
  Dataset out = clean;
  const std::size_t per = clean.images.size() / clean.images.extent(0);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const Tensor img = corrupt(clean.image(i), spec, i);
    std::copy(img.storage().begin(), img.storage().end(), out.images.storage().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  quantize_8bit(out.images);
  if (out.spec) out.spec->corruption = spec;
  return out;
}

namespace {

void check_batch(const Tensor& batch) {
  if (batch.rank() != 4 || batch.extent(1) != kChannels) {
    fail(ErrorKind::Dimension, "expected a batch [B x 3 x H x W], got " + shape_string(batch.shape()));
  }
}

}  // namespace

Tensor normalize(const Tensor& batch) {
  check_batch(batch);
  Tensor out = batch;
  const std::size_t plane = batch.extent(2) * batch.extent(3);
  for (std::size_t b = 0; b < batch.extent(0); ++b) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      float* p = out.data().data() + (b * kChannels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - kChannelMean[c]) / kChannelStd[c];
    }
  }
  return out;
}

Tensor denormalize(const Tensor& batch) {
  check_batch(batch);
  Tensor out = batch;
  const std::size_t plane = batch.extent(2) * batch.extent(3);
  for (std::size_t b = 0; b < batch.extent(0); ++b) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      float* p = out.data().data() + (b * kChannels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = p[i] * kChannelStd[c] + kChannelMean[c];
    }
  }
  return out;
}

Tensor resize(const Tensor& batch, std::size_t size) {
  check_batch(batch);
  const std::size_t H = batch.extent(2), W = batch.extent(3);
  if (H == size && W == size) return batch;
  Tensor out({batch.extent(0), kChannels, size, size});
  const double sy = static_cast<double>(H) / size, sx = static_cast<double>(W) / size;
  for (std::size_t p = 0; p < batch.extent(0) * kChannels; ++p) {
    const float* src = batch.data().data() + p * H * W;
    float* dst = out.data().data() + p * size * size;
    for (std::size_t y = 0; y < size; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
      const auto y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, H - 1);
      const double wy = fy - static_cast<double>(y0);
      for (std::size_t x = 0; x < size; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
        const auto x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, W - 1);
        const double wx = fx - static_cast<double>(x0);
        const double top = src[y0 * W + x0] * (1 - wx) + src[y0 * W + x1] * wx;
        const double bot = src[y1 * W + x0] * (1 - wx) + src[y1 * W + x1] * wx;
        dst[y * size + x] = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Tensor center_crop(const Tensor& batch, std::size_t size) {
  check_batch(batch);
  const std::size_t H = batch.extent(2), W = batch.extent(3);
  if (H == size && W == size) return batch;
  if (size > H || size > W) fail(ErrorKind::Dimension, "center crop larger than image");
  const std::size_t oy = (H - size) / 2, ox = (W - size) / 2;
  Tensor out({batch.extent(0), kChannels, size, size});
  for (std::size_t p = 0; p < batch.extent(0) * kChannels; ++p) {
    for (std::size_t y = 0; y < size; ++y) {
      const float* src = batch.data().data() + p * H * W + (y + oy) * W + ox;
      std::copy_n(src, size, out.data().data() + (p * size + y) * size);
    }
  }
  return out;
}

Tensor random_crop(const Tensor& batch, std::size_t pad, std::uint64_t key) {
  check_batch(batch);
  const std::size_t H = batch.extent(2), W = batch.extent(3);
  Tensor out(batch.shape());
  for (std::size_t b = 0; b < batch.extent(0); ++b) {
    KeyedRng rng(combine_key(key, 2 * b));
    const auto oy = static_cast<long>(rng.index(2 * pad + 1)) - static_cast<long>(pad);
    const auto ox = static_cast<long>(rng.index(2 * pad + 1)) - static_cast<long>(pad);
    for (std::size_t c = 0; c < kChannels; ++c) {
      const float* src = batch.data().data() + (b * kChannels + c) * H * W;
      float* dst = out.data().data() + (b * kChannels + c) * H * W;
      for (std::size_t y = 0; y < H; ++y) {
        const long sy = static_cast<long>(y) + oy;
        for (std::size_t x = 0; x < W; ++x) {
          const long sx = static_cast<long>(x) + ox;
          const bool in = sy >= 0 && sx >= 0 && sy < static_cast<long>(H) && sx < static_cast<long>(W);
          dst[y * W + x] = in ? src[static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)] : 0.0f;
        }
      }
    }
  }
  return out;
}

Tensor random_flip(const Tensor& batch, std::uint64_t key) {
  check_batch(batch);
  const std::size_t H = batch.extent(2), W = batch.extent(3);
  Tensor out = batch;
  for (std::size_t b = 0; b < batch.extent(0); ++b) {
    KeyedRng rng(combine_key(key, 2 * b + 1));
    if (!rng.bernoulli(0.5)) continue;
    for (std::size_t c = 0; c < kChannels; ++c) {
      for (std::size_t y = 0; y < H; ++y) {
        float* row = out.data().data() + ((b * kChannels + c) * H + y) * W;
        std::reverse(row, row + W);
      }
    }
  }
  return out;
}

Tensor preprocess_train(const Tensor& batch, std::size_t image_size, std::uint64_t key) {
  Tensor x = random_crop(batch, kCropPadding, key);
  x = resize(x, image_size);
  x = random_flip(x, key);
  return normalize(x);
}

Tensor preprocess_eval(const Tensor& batch, std::size_t image_size) {
  return normalize(center_crop(resize(batch, image_size), image_size));
}

Split split_80_20(std::span<const std::int32_t> labels, std::uint64_t seed) {
  if (labels.size() < 5) fail(ErrorKind::Split, "need at least 5 samples, got " + std::to_string(labels.size()));
  std::map<std::int32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  auto shuffle = [](std::vector<std::size_t>& v, std::uint64_t key) {
    KeyedRng rng(key);
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
  };

  Split split;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) {
      fail(ErrorKind::Split, "class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                                 " sample(s); at least 2 are needed to populate both splits");
    }
    shuffle(idx, combine_key(seed, static_cast<std::uint64_t>(label) + 1));
    const std::size_t n_test = std::max<std::size_t>(1, idx.size() / 5);
    const std::size_t n_train = idx.size() - n_test;
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.insert(split.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  shuffle(split.train, combine_key(seed, 0x7261696eULL));
  shuffle(split.test, combine_key(seed, 0x74657374ULL));
  return split;
}

Tensor read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) fail(ErrorKind::Data, path.string() + ": malformed PPM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail(ErrorKind::Data, path.string() + ": not a P6 PPM");
  pos = 2;
  const std::size_t w = read_int(), h = read_int(), maxval = read_int();
  if (maxval != 255) fail(ErrorKind::Data, path.string() + ": only maxval 255 is supported");
  if (w == 0 || h == 0) fail(ErrorKind::Data, path.string() + ": empty image");
  ++pos;  // single whitespace before raster
  if (bytes.size() < pos + w * h * 3) fail(ErrorKind::Data, path.string() + ": truncated raster");
  Tensor img({kChannels, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        img[(c * h + y) * w + x] = static_cast<float>(bytes[pos + (y * w + x) * 3 + c]) / 255.0f;
      }
    }
  }
  return img;
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
  if (image.rank() != 3 || image.extent(0) != kChannels) {
    fail(ErrorKind::Dimension, "write_ppm expects [3 x H x W], got " + shape_string(image.shape()));
  }
  const std::size_t h = image.extent(1), w = image.extent(2);
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + w * h * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        const double v = std::clamp(static_cast<double>(image[(c * h + y) * w + x]), 0.0, 1.0);
        out.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
    }
  }
  write_file_atomic(path, out);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Storage, "cannot create directory " + dir.string());
  std::string csv = "filename,label\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%06zu.ppm", i);
    write_ppm(dataset.image(i), dir / name);
    csv += std::string(name) + "," + std::to_string(dataset.labels[i]) + "\n";
  }
  write_text_atomic(dir / "labels.csv", csv);
  nlohmann::json manifest = {{"name", dataset.name},
                             {"num_classes", dataset.num_classes},
                             {"num_samples", dataset.size()},
                             {"image_size", dataset.image_size()}};
  if (dataset.spec) manifest["spec"] = spec_json(*dataset.spec);
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::Storage, "dataset directory " + dir.string() + " not found");
  Dataset ds;
  ds.name = dir.filename().string();
  std::size_t declared_classes = 0;
  if (std::filesystem::exists(dir / "manifest.json")) {
    try {
      const auto m = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
      ds.name = m.at("name").get<std::string>();
      declared_classes = m.at("num_classes").get<std::size_t>();
      if (m.contains("spec")) ds.spec = spec_from(m.at("spec"));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Data, (dir / "manifest.json").string() + ": " + e.what());
    }
  }
  std::istringstream csv(read_text_file(dir / "labels.csv"));
  std::string line;
  std::vector<std::pair<std::string, std::int32_t>> rows;
  std::size_t line_no = 0;
  while (std::getline(csv, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line == "filename,label")) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) fail(ErrorKind::Data, "labels.csv line " + std::to_string(line_no) + ": missing comma");
    try {
      rows.emplace_back(line.substr(0, comma), static_cast<std::int32_t>(std::stol(line.substr(comma + 1))));
    } catch (const std::exception&) {
      fail(ErrorKind::Data, "labels.csv line " + std::to_string(line_no) + ": bad label");
    }
  }
  if (rows.empty()) fail(ErrorKind::Data, dir.string() + ": labels.csv lists no images");
  std::int32_t max_label = 0;
  for (const auto& r : rows) {
    if (r.second < 0) fail(ErrorKind::Data, "negative label for " + r.first);
    max_label = std::max(max_label, r.second);
  }
  ds.num_classes = std::max<std::size_t>(declared_classes, static_cast<std::size_t>(max_label) + 1);
  const Tensor first = read_ppm(dir / rows[0].first);
  const std::size_t H = first.extent(1), W = first.extent(2), per = kChannels * H * W;
  if (H != W) fail(ErrorKind::Data, "images must be square");
  ds.images = Tensor({rows.size(), kChannels, H, W});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor img = i == 0 ? first : read_ppm(dir / rows[i].first);
    if (img.shape() != first.shape()) fail(ErrorKind::Data, rows[i].first + ": image size differs from the first image");
    std::copy(img.storage().begin(), img.storage().end(), ds.images.storage().begin() + static_cast<std::ptrdiff_t>(i * per));
    ds.labels.push_back(rows[i].second);
  }
  return ds;
}

}  // namespace vitprobe
