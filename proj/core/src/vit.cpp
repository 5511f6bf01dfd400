#include "vitprobe/vit.hpp"

#include <algorithm>
#include <cmath>

#include "vitprobe/tensor_ops.hpp"

namespace vitprobe {

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::base(std::size_t num_classes) {
  ModelConfig c;
  c.image_size = 224;
  c.patch_size = 16;
  c.channels = 3;
  c.embed_dim = 768;
  c.num_heads = 12;
  c.num_blocks = 12;
  c.ffn_dim = 3072;
  c.num_classes = num_classes;
  c.ln_eps = 1e-12;
  return c;
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::Spec, msg);
  };
  need(image_size > 0, "image_size must be positive");
  need(patch_size > 0, "patch_size must be positive");
  need(channels > 0, "channels must be positive");
  need(embed_dim > 0, "embed_dim must be positive");
  need(num_heads > 0, "num_heads must be positive");
  need(num_blocks > 0, "num_blocks must be positive");
  need(num_classes > 0, "num_classes must be positive");
  need(image_size % patch_size == 0, "image_size " + std::to_string(image_size) +
                                         " not divisible by patch_size " + std::to_string(patch_size));
  need(embed_dim % num_heads == 0, "embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                                       std::to_string(num_heads));
  need(ffn_dim == 4 * embed_dim, "ffn_dim must equal 4 * embed_dim, got " + std::to_string(ffn_dim));
  need(ln_eps > 0.0, "ln_eps must be positive");
}

std::string_view module_name(Module m) noexcept {
  switch (m) {
    case Module::LN1: return "LN1";
    case Module::MHA: return "MHA";
    case Module::RC1: return "RC1";
    case Module::LN2: return "LN2";
    case Module::FC1: return "FC1";
    case Module::Act: return "Act";
    case Module::FC2: return "FC2";
    case Module::RC2: return "RC2";
  }
  return "?";
}

std::optional<Module> parse_module(std::string_view name) noexcept {
  for (Module m : kAllModules) {
    if (module_name(m) == name) return m;
  }
  return std::nullopt;
}

std::string tap_name(const TapId& tap) {
  return std::to_string(tap.block) + "." + std::string(module_name(tap.module));
}

std::size_t tap_width(const TapId& tap, const ModelConfig& cfg) {
  return (tap.module == Module::FC1 || tap.module == Module::Act) ? cfg.ffn_dim : cfg.embed_dim;
}

void validate_tap(const TapId& tap, const ModelConfig& cfg) {
  if (tap.block >= cfg.num_blocks) {
    fail(ErrorKind::Tap, "block index " + std::to_string(tap.block) + " out of range [0, " +
                             std::to_string(cfg.num_blocks) + ")");
  }
  if (module_index(tap.module) >= kAllModules.size()) fail(ErrorKind::Tap, "unknown module");
}

std::vector<TapId> all_taps(const ModelConfig& cfg) {
  std::vector<TapId> taps;
  taps.reserve(cfg.num_blocks * kAllModules.size());
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    for (Module m : kAllModules) taps.push_back({b, m});
  }
  return taps;
}

std::vector<std::pair<std::string, Shape>> weight_shapes(const ModelConfig& cfg) {
  const std::size_t d = cfg.embed_dim;
  std::vector<std::pair<std::string, Shape>> s;
  s.push_back({"embedding.conv_weight", {d, cfg.channels, cfg.patch_size, cfg.patch_size}});
  s.push_back({"embedding.conv_bias", {d}});
  s.push_back({"embedding.cls", {d}});
  s.push_back({"embedding.pos", {cfg.tokens(), d}});
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    s.push_back({p + "ln1.gamma", {d}});
    s.push_back({p + "ln1.beta", {d}});
    s.push_back({p + "qkv.weight", {d, 3 * d}});
    s.push_back({p + "qkv.bias", {3 * d}});
    s.push_back({p + "attn_out.weight", {d, d}});
    s.push_back({p + "attn_out.bias", {d}});
    s.push_back({p + "ln2.gamma", {d}});
    s.push_back({p + "ln2.beta", {d}});
    s.push_back({p + "fc1.weight", {d, cfg.ffn_dim}});
    s.push_back({p + "fc1.bias", {cfg.ffn_dim}});
    s.push_back({p + "fc2.weight", {cfg.ffn_dim, d}});
    s.push_back({p + "fc2.bias", {d}});
  }
  s.push_back({"head.ln_gamma", {d}});
  s.push_back({"head.ln_beta", {d}});
  s.push_back({"head.weight", {d, cfg.num_classes}});
  s.push_back({"head.bias", {cfg.num_classes}});
  return s;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  std::size_t total = 0;
  for (const auto& [name, shape] : weight_shapes(cfg)) total += shape_size(shape);
  return total;
}

template <class T>
ModelWeights<T> zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  ModelWeights<T> w;
  w.blocks.resize(cfg.num_blocks);
  const auto shapes = weight_shapes(cfg);
  std::size_t i = 0;
  w.for_each([&](const std::string&, BasicTensor<T>& t) { t = BasicTensor<T>(shapes[i++].second); });
  return w;
}

template <class T>
void validate_weights(const ModelWeights<T>& w, const ModelConfig& cfg) {
  cfg.validate();
  if (w.blocks.size() != cfg.num_blocks) {
    fail(ErrorKind::Dimension, "weights have " + std::to_string(w.blocks.size()) + " blocks, config expects " +
                                   std::to_string(cfg.num_blocks));
  }
  const auto shapes = weight_shapes(cfg);
  std::size_t i = 0;
  w.for_each([&](const std::string& name, const BasicTensor<T>& t) {
    if (t.shape() != shapes[i].second) {
      fail(ErrorKind::Dimension, "tensor " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                                     shape_string(shapes[i].second));
    }
    ++i;
  });
}

template <class T>
const BasicTensor<T>& BlockCache<T>::tensor_for(Module m) const {
  switch (m) {
    case Module::LN1: return ln1;
    case Module::MHA: return mha;
    case Module::RC1: return rc1;
    case Module::LN2: return ln2;
    case Module::FC1: return fc1;
    case Module::Act: return act;
    case Module::FC2: return fc2;
    case Module::RC2: return rc2;
  }
  return rc2;
}

namespace {

template <class T>
void linear_rows(const BasicTensor<T>& x, const LinearParams<T>& p, BasicTensor<T>& y) {
  const std::size_t rows = x.rows();
  const std::size_t in = p.weight.extent(0);
  const std::size_t out = p.weight.extent(1);
  y = BasicTensor<T>({rows, out});
  kernels::gemm(x.data().data(), p.weight.data().data(), y.data().data(), rows, in, out, false);
  const T* bias = p.bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* yr = y.data().data() + r * out;
    for (std::size_t j = 0; j < out; ++j) yr[j] += bias[j];
  }
}

template <class T>
void check_images(const BasicTensor<T>& images, const ModelConfig& cfg) {
  if (images.rank() != 4 || images.extent(1) != cfg.channels || images.extent(2) != cfg.image_size ||
      images.extent(3) != cfg.image_size) {
    fail(ErrorKind::Dimension, "expected images [B x " + std::to_string(cfg.channels) + " x " +
                                   std::to_string(cfg.image_size) + " x " + std::to_string(cfg.image_size) +
                                   "], got " + shape_string(images.shape()));
  }
}

}  // namespace

template <class T>
BasicTensor<T> extract_patches(const BasicTensor<T>& images, const ModelConfig& cfg) {
  check_images(images, cfg);
  const std::size_t batch = images.extent(0);
  const std::size_t C = cfg.channels, H = cfg.image_size, P = cfg.patch_size, G = cfg.grid();
  const std::size_t n = cfg.num_patches();
  BasicTensor<T> patches({batch * n, cfg.patch_dim()});
  for (std::size_t s = 0; s < batch; ++s) {
    const T* img = images.data().data() + s * C * H * H;
    for (std::size_t gy = 0; gy < G; ++gy) {
      for (std::size_t gx = 0; gx < G; ++gx) {
        T* dst = patches.data().data() + (s * n + gy * G + gx) * cfg.patch_dim();
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t ky = 0; ky < P; ++ky) {
            const T* src = img + c * H * H + (gy * P + ky) * H + gx * P;
            std::copy(src, src + P, dst + (c * P + ky) * P);
          }
        }
      }
    }
  }
  return patches;
}

template <class T>
BasicTensor<T> embed_batch(const BasicTensor<T>& images, const ModelWeights<T>& w, const ModelConfig& cfg,
                           BasicTensor<T>* patches_out) {
  BasicTensor<T> patches = extract_patches(images, cfg);
  const std::size_t batch = images.extent(0);
  const std::size_t n = cfg.num_patches(), S = cfg.tokens(), d = cfg.embed_dim;
  // conv as matmul: patches [B*n x CPP] * conv_weight^T [CPP x d]
  BasicTensor<T> proj({batch * n, d});
  kernels::gemm_nt(patches.data().data(), w.conv_weight.data().data(), proj.data().data(), batch * n,
                   cfg.patch_dim(), d, false);
  BasicTensor<T> tokens({batch * S, d});
  for (std::size_t s = 0; s < batch; ++s) {
    T* cls = tokens.data().data() + s * S * d;
    for (std::size_t j = 0; j < d; ++j) cls[j] = w.cls_token[j] + w.pos_embed[j];
    for (std::size_t p = 0; p < n; ++p) {
      T* dst = tokens.data().data() + (s * S + 1 + p) * d;
      const T* src = proj.data().data() + (s * n + p) * d;
      const T* pos = w.pos_embed.data().data() + (1 + p) * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] = (src[j] + w.conv_bias[j]) + pos[j];
    }
  }
  if (patches_out) *patches_out = std::move(patches);
  return tokens;
}

template <class T>
BasicTensor<T> embed_image(const BasicTensor<T>& image, const ModelWeights<T>& w, const ModelConfig& cfg) {
  if (image.rank() != 3) {
    fail(ErrorKind::Dimension, "expected image [C x H x W], got " + shape_string(image.shape()));
  }
  Shape batched = {1, image.extent(0), image.extent(1), image.extent(2)};
  return embed_batch(image.reshaped(batched), w, cfg);
}

template <class T>
void block_forward_batch(const BasicTensor<T>& x, const BlockWeights<T>& bw, const ModelConfig& cfg,
                         std::size_t batch, BlockCache<T>& cache) {
  const std::size_t d = cfg.embed_dim, H = cfg.num_heads, dh = cfg.head_dim();
  // Sequence length follows the input so a block can run on any token count.
  if (batch == 0 || x.rank() != 2 || x.extent(1) != d || x.extent(0) % batch != 0) {
    fail(ErrorKind::Dimension, "block input expected " + std::to_string(batch) + " stacked sequences of width " +
                                   std::to_string(d) + ", got " + shape_string(x.shape()));
  }
  const std::size_t S = x.extent(0) / batch;
  const std::size_t rows = x.extent(0);
  const T eps = static_cast<T>(cfg.ln_eps);
  cache.x = x;

  cache.ln1 = BasicTensor<T>({rows, d});
  cache.ln1_mean.assign(rows, T{0});
  cache.ln1_rstd.assign(rows, T{0});
  kernels::layer_norm_rows(x.data().data(), bw.ln1.gamma.data().data(), bw.ln1.beta.data().data(),
                           cache.ln1.data().data(), rows, d, eps, cache.ln1_mean.data(), cache.ln1_rstd.data());

  linear_rows(cache.ln1, bw.qkv, cache.qkv);

  cache.probs.assign(batch * H * S * S, T{0});
  cache.context = BasicTensor<T>({rows, d});
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  const std::size_t ld = 3 * d;
  for (std::size_t s = 0; s < batch; ++s) {
    const T* base = cache.qkv.data().data() + s * S * ld;
    for (std::size_t h = 0; h < H; ++h) {
      T* P = cache.probs.data() + (s * H + h) * S * S;
      for (std::size_t i = 0; i < S; ++i) {
        const T* q = base + i * ld + h * dh;
        for (std::size_t j = 0; j < S; ++j) {
          const T* k = base + j * ld + d + h * dh;
          T acc{0};
          for (std::size_t c = 0; c < dh; ++c) acc += q[c] * k[c];
          P[i * S + j] = acc * scale;
        }
        kernels::softmax_row(P + i * S, S);
      }
      for (std::size_t i = 0; i < S; ++i) {
        T* out = cache.context.data().data() + (s * S + i) * d + h * dh;
        for (std::size_t j = 0; j < S; ++j) {
          const T p = P[i * S + j];
          const T* v = base + j * ld + 2 * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) out[c] += p * v[c];
        }
      }
    }
  }

  linear_rows(cache.context, bw.attn_out, cache.mha);

  cache.rc1 = BasicTensor<T>({rows, d});
  for (std::size_t i = 0; i < rows * d; ++i) cache.rc1[i] = x[i] + cache.mha[i];

  cache.ln2 = BasicTensor<T>({rows, d});
  cache.ln2_mean.assign(rows, T{0});
  cache.ln2_rstd.assign(rows, T{0});
  kernels::layer_norm_rows(cache.rc1.data().data(), bw.ln2.gamma.data().data(), bw.ln2.beta.data().data(),
                           cache.ln2.data().data(), rows, d, eps, cache.ln2_mean.data(), cache.ln2_rstd.data());

  linear_rows(cache.ln2, bw.fc1, cache.fc1);
  cache.act = cache.fc1;
  for (auto& v : cache.act.storage()) v = gelu_scalar(v);
  linear_rows(cache.act, bw.fc2, cache.fc2);

  cache.rc2 = BasicTensor<T>({rows, d});
  for (std::size_t i = 0; i < rows * d; ++i) cache.rc2[i] = cache.rc1[i] + cache.fc2[i];
}

template <class T>
BlockOutput<T> block_forward(const BasicTensor<T>& x, const BlockWeights<T>& bw, const ModelConfig& cfg,
                             std::size_t block_index) {
  BlockCache<T> cache;
  block_forward_batch(x, bw, cfg, 1, cache);
  BlockOutput<T> out;
  for (std::size_t i = 0; i < kAllModules.size(); ++i) {
    const Module m = kAllModules[i];
    const auto row = cache.tensor_for(m).row(0);
    out.taps[i] = TapRecord<T>{{block_index, m}, std::vector<T>(row.begin(), row.end())};
  }
  out.y = std::move(cache.rc2);
  return out;
}

template <class T>
BasicTensor<T> classifier_head(const BasicTensor<T>& cls, const ModelWeights<T>& w, const ModelConfig& cfg,
                               ForwardTrace<T>* trace) {
  const std::size_t batch = cls.rows(), d = cfg.embed_dim;
  BasicTensor<T> normed({batch, d});
  std::vector<T> mean(batch), rstd(batch);
  kernels::layer_norm_rows(cls.data().data(), w.head_ln.gamma.data().data(), w.head_ln.beta.data().data(),
                           normed.data().data(), batch, d, static_cast<T>(cfg.ln_eps), mean.data(), rstd.data());
  BasicTensor<T> logits;
  linear_rows(normed, w.head, logits);
  if (trace) {
    trace->cls_final = cls;
    trace->head_ln = std::move(normed);
    trace->head_mean = std::move(mean);
    trace->head_rstd = std::move(rstd);
    trace->logits = logits;
  }
  return logits;
}

namespace {

template <class T>
BasicTensor<T> cls_rows(const BasicTensor<T>& seq, std::size_t batch, std::size_t tokens) {
  const std::size_t width = seq.cols();
  BasicTensor<T> out({batch, width});
  for (std::size_t s = 0; s < batch; ++s) {
    const auto src = seq.row(s * tokens);
    std::copy(src.begin(), src.end(), out.row(s).begin());
  }
  return out;
}

}  // namespace

template <class T>
ForwardTrace<T> forward_trace(const BasicTensor<T>& images, const ModelWeights<T>& w, const ModelConfig& cfg) {
  ForwardTrace<T> trace;
  trace.batch = images.extent(0);
  trace.tokens = embed_batch(images, w, cfg, &trace.patches);
  trace.blocks.resize(cfg.num_blocks);
  const BasicTensor<T>* input = &trace.tokens;
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    block_forward_batch(*input, w.blocks[b], cfg, trace.batch, trace.blocks[b]);
    input = &trace.blocks[b].rc2;
  }
  classifier_head(cls_rows(*input, trace.batch, cfg.tokens()), w, cfg, &trace);
  return trace;
}

template <class T>
BasicTensor<T> forward_logits(const BasicTensor<T>& images, const ModelWeights<T>& w, const ModelConfig& cfg) {
  return forward_collect(images, w, cfg, {}).logits;
}

template <class T>
CollectResult<T> forward_collect(const BasicTensor<T>& images, const ModelWeights<T>& w, const ModelConfig& cfg,
                                 const std::set<TapId>& taps) {
  for (const auto& t : taps) validate_tap(t, cfg);
  const std::size_t batch = images.extent(0);
  CollectResult<T> result;
  BasicTensor<T> x = embed_batch(images, w, cfg);
  BlockCache<T> cache;
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    block_forward_batch(x, w.blocks[b], cfg, batch, cache);
    for (Module m : kAllModules) {
      const TapId tap{b, m};
      if (taps.count(tap)) result.features.emplace(tap, cls_rows(cache.tensor_for(m), batch, cfg.tokens()));
    }
    x = std::move(cache.rc2);
  }
  result.logits = classifier_head(cls_rows(x, batch, cfg.tokens()), w, cfg);
  return result;
}

template <class T>
std::vector<T> attention_weights(const BlockCache<T>& cache, const ModelConfig& cfg, std::size_t sample) {
  const std::size_t H = cfg.num_heads, rows = cache.x.extent(0);
  const std::size_t S = cache.probs.size() / (H * rows);
  if ((sample + 1) * S > rows) fail(ErrorKind::Dimension, "attention_weights: sample index out of range");
  const auto first = cache.probs.begin() + static_cast<std::ptrdiff_t>(sample * H * S * S);
  return std::vector<T>(first, first + static_cast<std::ptrdiff_t>(H * S * S));
}

#define VITPROBE_INSTANTIATE(T)                                                                               \
  template ModelWeights<T> zero_weights<T>(const ModelConfig&);                                              \
  template void validate_weights(const ModelWeights<T>&, const ModelConfig&);                                \
  template struct BlockCache<T>;                                                                             \
  template BasicTensor<T> extract_patches(const BasicTensor<T>&, const ModelConfig&);                        \
  template BasicTensor<T> embed_image(const BasicTensor<T>&, const ModelWeights<T>&, const ModelConfig&);    \
  template BasicTensor<T> embed_batch(const BasicTensor<T>&, const ModelWeights<T>&, const ModelConfig&,     \
                                      BasicTensor<T>*);                                                      \
  template void block_forward_batch(const BasicTensor<T>&, const BlockWeights<T>&, const ModelConfig&,       \
                                    std::size_t, BlockCache<T>&);                                            \
  template BlockOutput<T> block_forward(const BasicTensor<T>&, const BlockWeights<T>&, const ModelConfig&,   \
                                        std::size_t);                                                        \
  template BasicTensor<T> classifier_head(const BasicTensor<T>&, const ModelWeights<T>&, const ModelConfig&, \
                                          ForwardTrace<T>*);                                                 \
  template ForwardTrace<T> forward_trace(const BasicTensor<T>&, const ModelWeights<T>&, const ModelConfig&); \
  template BasicTensor<T> forward_logits(const BasicTensor<T>&, const ModelWeights<T>&, const ModelConfig&); \
  template CollectResult<T> forward_collect(const BasicTensor<T>&, const ModelWeights<T>&,                   \
                                            const ModelConfig&, const std::set<TapId>&);                     \
  template std::vector<T> attention_weights(const BlockCache<T>&, const ModelConfig&, std::size_t);

VITPROBE_INSTANTIATE(float)
VITPROBE_INSTANTIATE(double)

#undef VITPROBE_INSTANTIATE

}  // namespace vitprobe
