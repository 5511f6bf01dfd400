#include "vitprobe/weights_io.hpp"

#include <cmath>
#include <fstream>

#include "container.hpp"
#include "vitprobe/io.hpp"
#include "vitprobe/rng.hpp"

namespace vitprobe {

namespace {

nlohmann::json config_json(const ModelConfig& c) {
  return {{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"channels", c.channels},
          {"embed_dim", c.embed_dim},   {"num_heads", c.num_heads},   {"num_blocks", c.num_blocks},
          {"ffn_dim", c.ffn_dim},       {"num_classes", c.num_classes}, {"ln_eps", c.ln_eps}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  auto take = [&](const char* key, auto& field) {
    if (!j.contains(key)) fail(ErrorKind::Spec, std::string("model config missing field '") + key + "'");
    try {
      field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::Spec, std::string("model config field '") + key + "' has the wrong type");
    }
  };
  take("image_size", c.image_size);
  take("patch_size", c.patch_size);
  take("channels", c.channels);
  take("embed_dim", c.embed_dim);
  take("num_heads", c.num_heads);
  take("num_blocks", c.num_blocks);
  take("ffn_dim", c.ffn_dim);
  take("num_classes", c.num_classes);
  take("ln_eps", c.ln_eps);
  c.validate();
  return c;
}

bool is_truncated_normal_tensor(const std::string& name) {
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return name == "embedding.conv_weight" || name == "embedding.cls" || name == "embedding.pos" ||
         ends_with(".weight");
}

bool is_gamma(const std::string& name) { return name.find("gamma") != std::string::npos; }

}  // namespace

std::string config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(2); }

ModelConfig config_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Spec, std::string("model config is not valid JSON: ") + e.what());
  }
  return config_from(j);
}

ModelConfig resolve_model_config(const std::string& preset_or_path) {
  if (preset_or_path == "toy") return ModelConfig::toy();
  if (preset_or_path == "base") return ModelConfig::base();
  if (!std::filesystem::exists(preset_or_path)) {
    fail(ErrorKind::Spec, "--config: '" + preset_or_path + "' is neither a preset (toy, base) nor a file");
  }
  return config_from_json(read_text_file(preset_or_path));
}

std::vector<unsigned char> encode_weights(const ModelWeights<float>& w, const ModelConfig& cfg) {
  validate_weights(w, cfg);
  detail::Container c;
  c.magic = "VITW";
  c.metadata = {{"config", config_json(cfg)}};
  w.for_each([&](const std::string& name, const Tensor& t) {
    c.blobs.push_back(detail::make_blob(name, t.shape(), t.data()));
  });
  return detail::encode_container(c);
}

LoadedModel decode_weights(std::span<const unsigned char> bytes, const std::string& origin) {
  const detail::Container c = detail::decode_container(bytes, "VITW", origin);
  LoadedModel m;
  try {
    m.config = config_from(c.metadata.at("config"));
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Corruption, origin + ": manifest lacks the model config");
  }
  m.weights.blocks.resize(m.config.num_blocks);
  const auto shapes = weight_shapes(m.config);
  if (c.blobs.size() != shapes.size()) {
    fail(ErrorKind::Corruption, origin + ": expected " + std::to_string(shapes.size()) + " tensors, found " +
                                    std::to_string(c.blobs.size()));
  }
  m.weights.for_each([&](const std::string& name, Tensor& t) {
    const auto& blob = c.find(name);
    t = Tensor(blob.shape, detail::blob_f32(blob));
  });
  validate_weights(m.weights, m.config);
  return m;
}

void save_weights(const ModelWeights<float>& w, const ModelConfig& cfg, const std::filesystem::path& path) {
  write_file_atomic(path, encode_weights(w, cfg));
}

LoadedModel load_weights(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_weights(bytes, path.string());
}

ModelWeights<float> init_toy(const ModelConfig& cfg, std::uint64_t seed) {
  ModelWeights<float> w = zero_weights<float>(cfg);
  w.for_each([&](const std::string& name, Tensor& t) {
    if (is_gamma(name)) {
      t.fill(1.0f);
    } else if (is_truncated_normal_tensor(name)) {
      KeyedRng rng(combine_key(seed, fnv1a64(name)));
      for (auto& v : t.storage()) {
        double z = rng.normal();
        while (std::abs(z) > 2.0) z = rng.normal();
        v = static_cast<float>(kInitStd * z);
      }
    }
  });
  return w;
}

void save_features(const FeatureSet& set, const std::filesystem::path& path) {
  detail::Container c;
  c.magic = "VITF";
  nlohmann::json taps = nlohmann::json::array();
  const std::size_t n = set.labels.size();
  c.blobs.push_back(detail::make_blob("labels", {n}, std::span<const std::int32_t>(set.labels)));
  for (const auto& [tap, feats] : set.features) {
    if (feats.rank() != 2 || feats.extent(0) != n) {
      fail(ErrorKind::Dimension, "features for tap " + tap_name(tap) + " have shape " +
                                     shape_string(feats.shape()) + " but there are " + std::to_string(n) +
                                     " labels");
    }
    const std::string name = "taps." + tap_name(tap);
    taps.push_back({{"block", tap.block}, {"module", module_name(tap.module)}, {"tensor", name}});
    c.blobs.push_back(detail::make_blob(name, feats.shape(), feats.data()));
  }
  c.metadata = {{"kind", "features"}, {"config", config_json(set.config)}, {"taps", taps}, {"source", set.source}};
  detail::write_container(path, c);
}

FeatureSet load_features(const std::filesystem::path& path) {
  const detail::Container c = detail::read_container(path, "VITF");
  FeatureSet set;
  try {
    if (c.metadata.at("kind").get<std::string>() != "features") {
      fail(ErrorKind::Data, path.string() + " is a VITF container but does not hold features");
    }
    set.config = config_from(c.metadata.at("config"));
    set.source = c.metadata.at("source").get<std::string>();
    set.labels = detail::blob_i32(c.find("labels"));
    for (const auto& t : c.metadata.at("taps")) {
      const auto module = parse_module(t.at("module").get<std::string>());
      if (!module) fail(ErrorKind::Corruption, path.string() + ": unknown module in tap list");
      const TapId tap{t.at("block").get<std::size_t>(), *module};
      validate_tap(tap, set.config);
      const auto& blob = c.find(t.at("tensor").get<std::string>());
      if (blob.shape.size() != 2 || blob.shape[0] != set.labels.size() || blob.shape[1] != tap_width(tap, set.config)) {
        fail(ErrorKind::Corruption, path.string() + ": tap " + tap_name(tap) + " has shape " +
                                        shape_string(blob.shape));
      }
      set.features.emplace(tap, Tensor(blob.shape, detail::blob_f32(blob)));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Corruption, path.string() + ": malformed feature manifest: " + e.what());
  }
  return set;
}

}  // namespace vitprobe
