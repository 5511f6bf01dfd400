#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vitprobe/tensor.hpp"

namespace vitprobe {

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t embed_dim = 32;
  std::size_t num_heads = 4;
  std::size_t num_blocks = 6;
  std::size_t ffn_dim = 128;
  std::size_t num_classes = 10;
  double ln_eps = 1e-12;

  /// Desk-scale preset used throughout the experiments.
  static ModelConfig toy();
  /// ViT-Base geometry (224px, P=16, d=768, 12 heads, 12 blocks).
  static ModelConfig base(std::size_t num_classes = 10);

  std::size_t grid() const noexcept { return image_size / patch_size; }
  std::size_t num_patches() const noexcept { return grid() * grid(); }
  /// Sequence length including the CLS token.
  std::size_t tokens() const noexcept { return num_patches() + 1; }
  std::size_t head_dim() const noexcept { return embed_dim / num_heads; }
  std::size_t patch_dim() const noexcept { return channels * patch_size * patch_size; }

  /// Throws ErrorKind::Spec naming the offending field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// The eight probe points inside a transformer block, in dataflow order.
enum class Module : std::uint8_t { LN1, MHA, RC1, LN2, FC1, Act, FC2, RC2 };

inline constexpr std::array<Module, 8> kAllModules = {Module::LN1, Module::MHA, Module::RC1, Module::LN2,
                                                      Module::FC1, Module::Act, Module::FC2, Module::RC2};

std::string_view module_name(Module m) noexcept;
std::optional<Module> parse_module(std::string_view name) noexcept;
inline constexpr std::size_t module_index(Module m) noexcept { return static_cast<std::size_t>(m); }

struct TapId {
  std::size_t block = 0;
  Module module = Module::RC2;

  friend auto operator<=>(const TapId&, const TapId&) = default;
};

std::string tap_name(const TapId& tap);
/// d for every module except FC1/Act, which are ffn_dim wide.
std::size_t tap_width(const TapId& tap, const ModelConfig& cfg);
void validate_tap(const TapId& tap, const ModelConfig& cfg);
/// All 8 * num_blocks taps ordered by (block, module).
std::vector<TapId> all_taps(const ModelConfig& cfg);

template <class T>
struct TapRecord {
  TapId tap;
  std::vector<T> cls_embedding;
};

template <class T>
struct LayerNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

/// y = x * weight + bias with weight stored [in x out].
template <class T>
struct LinearParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <class T>
struct BlockWeights {
  LayerNormParams<T> ln1;
  LinearParams<T> qkv;
  LinearParams<T> attn_out;
  LayerNormParams<T> ln2;
  LinearParams<T> fc1;
  LinearParams<T> fc2;
};

template <class T>
struct ModelWeights {
  BasicTensor<T> conv_weight;  // [d x C x P x P]
  BasicTensor<T> conv_bias;    // [d]
  BasicTensor<T> cls_token;    // [d]
  BasicTensor<T> pos_embed;    // [(n+1) x d]
  std::vector<BlockWeights<T>> blocks;
  LayerNormParams<T> head_ln;
  LinearParams<T> head;  // [d x num_classes]

  /// Visits every tensor with its canonical name, in a fixed order.
  template <class Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

 private:
  template <class Self, class Fn>
  static void visit(Self& w, Fn& fn) {
    fn(std::string("embedding.conv_weight"), w.conv_weight);
    fn(std::string("embedding.conv_bias"), w.conv_bias);
    fn(std::string("embedding.cls"), w.cls_token);
    fn(std::string("embedding.pos"), w.pos_embed);
    for (std::size_t i = 0; i < w.blocks.size(); ++i) {
      auto& b = w.blocks[i];
      const std::string p = "blocks." + std::to_string(i) + ".";
      fn(p + "ln1.gamma", b.ln1.gamma);
      fn(p + "ln1.beta", b.ln1.beta);
      fn(p + "qkv.weight", b.qkv.weight);
      fn(p + "qkv.bias", b.qkv.bias);
      fn(p + "attn_out.weight", b.attn_out.weight);
      fn(p + "attn_out.bias", b.attn_out.bias);
      fn(p + "ln2.gamma", b.ln2.gamma);
      fn(p + "ln2.beta", b.ln2.beta);
      fn(p + "fc1.weight", b.fc1.weight);
      fn(p + "fc1.bias", b.fc1.bias);
      fn(p + "fc2.weight", b.fc2.weight);
      fn(p + "fc2.bias", b.fc2.bias);
    }
    fn(std::string("head.ln_gamma"), w.head_ln.gamma);
    fn(std::string("head.ln_beta"), w.head_ln.beta);
    fn(std::string("head.weight"), w.head.weight);
    fn(std::string("head.bias"), w.head.bias);
  }
};

/// Canonical tensor name -> shape for a config, in for_each order.
std::vector<std::pair<std::string, Shape>> weight_shapes(const ModelConfig& cfg);
std::size_t parameter_count(const ModelConfig& cfg);

/// Every tensor zero-filled with the shape the config dictates.
template <class T>
ModelWeights<T> zero_weights(const ModelConfig& cfg);

/// Rejects any tensor whose shape disagrees with the config.
template <class T>
void validate_weights(const ModelWeights<T>& w, const ModelConfig& cfg);

template <class U, class T>
ModelWeights<U> cast_weights(const ModelWeights<T>& w) {
  ModelWeights<U> out;
  out.conv_weight = w.conv_weight.template cast<U>();
  out.conv_bias = w.conv_bias.template cast<U>();
  out.cls_token = w.cls_token.template cast<U>();
  out.pos_embed = w.pos_embed.template cast<U>();
  for (const auto& b : w.blocks) {
    BlockWeights<U> o;
    o.ln1 = {b.ln1.gamma.template cast<U>(), b.ln1.beta.template cast<U>()};
    o.qkv = {b.qkv.weight.template cast<U>(), b.qkv.bias.template cast<U>()};
    o.attn_out = {b.attn_out.weight.template cast<U>(), b.attn_out.bias.template cast<U>()};
    o.ln2 = {b.ln2.gamma.template cast<U>(), b.ln2.beta.template cast<U>()};
    o.fc1 = {b.fc1.weight.template cast<U>(), b.fc1.bias.template cast<U>()};
    o.fc2 = {b.fc2.weight.template cast<U>(), b.fc2.bias.template cast<U>()};
    out.blocks.push_back(std::move(o));
  }
  out.head_ln = {w.head_ln.gamma.template cast<U>(), w.head_ln.beta.template cast<U>()};
  out.head = {w.head.weight.template cast<U>(), w.head.bias.template cast<U>()};
  return out;
}

/// Activations of one block over a batch of sequences, rows = batch * tokens.
/// Everything the backward pass needs is kept here.
template <class T>
struct BlockCache {
  BasicTensor<T> x;         // block input
  BasicTensor<T> ln1;       // LN1 output (a)
  std::vector<T> ln1_mean, ln1_rstd;
  BasicTensor<T> qkv;       // [rows x 3d]
  std::vector<T> probs;     // [batch x heads x tokens x tokens]
  BasicTensor<T> context;   // concatenated heads before the output projection
  BasicTensor<T> mha;       // after output projection (m)
  BasicTensor<T> rc1;       // x + m
  BasicTensor<T> ln2;       // LN2 output (b)
  std::vector<T> ln2_mean, ln2_rstd;
  BasicTensor<T> fc1;       // [rows x ffn]
  BasicTensor<T> act;       // gelu(fc1)
  BasicTensor<T> fc2;       // [rows x d]
  BasicTensor<T> rc2;       // rc1 + fc2 (block output)

  /// Activation tensor backing a tap.
  const BasicTensor<T>& tensor_for(Module m) const;
};

template <class T>
struct ForwardTrace {
  std::size_t batch = 0;
  BasicTensor<T> patches;  // [batch * n x patch_dim]
  BasicTensor<T> tokens;   // embedded sequence, [batch * (n+1) x d]
  std::vector<BlockCache<T>> blocks;
  BasicTensor<T> cls_final;  // [batch x d], CLS rows of the last block output
  BasicTensor<T> head_ln;    // [batch x d]
  std::vector<T> head_mean, head_rstd;
  BasicTensor<T> logits;  // [batch x num_classes]
};

/// Patch extraction in conv weight order (c, ky, kx); rows are patches in
/// row-major grid order, batch-major.
template <class T>
BasicTensor<T> extract_patches(const BasicTensor<T>& images, const ModelConfig& cfg);

/// Single image [C x H x W] -> token sequence [(n+1) x d].
template <class T>
BasicTensor<T> embed_image(const BasicTensor<T>& image, const ModelWeights<T>& w, const ModelConfig& cfg);

/// Batch [B x C x H x W] -> tokens [B * (n+1) x d].
template <class T>
BasicTensor<T> embed_batch(const BasicTensor<T>& images, const ModelWeights<T>& w, const ModelConfig& cfg,
                           BasicTensor<T>* patches_out = nullptr);

/// Runs one pre-norm block over `batch` stacked sequences, filling `cache`.
template <class T>
void block_forward_batch(const BasicTensor<T>& x, const BlockWeights<T>& bw, const ModelConfig& cfg,
                         std::size_t batch, BlockCache<T>& cache);

template <class T>
struct BlockOutput {
  BasicTensor<T> y;
  std::array<TapRecord<T>, 8> taps;
};

/// One sequence [(n+1) x d] through one block; taps hold the CLS row of each
/// of the eight intermediate outputs in dataflow order.
template <class T>
BlockOutput<T> block_forward(const BasicTensor<T>& x, const BlockWeights<T>& bw, const ModelConfig& cfg,
                             std::size_t block_index = 0);

/// Final LayerNorm + classifier applied to CLS rows [B x d].
template <class T>
BasicTensor<T> classifier_head(const BasicTensor<T>& cls, const ModelWeights<T>& w, const ModelConfig& cfg,
                               ForwardTrace<T>* trace = nullptr);

/// Full forward keeping every activation (used for backprop).
template <class T>
ForwardTrace<T> forward_trace(const BasicTensor<T>& images, const ModelWeights<T>& w, const ModelConfig& cfg);

/// Logits only.
template <class T>
BasicTensor<T> forward_logits(const BasicTensor<T>& images, const ModelWeights<T>& w, const ModelConfig& cfg);

template <class T>
struct CollectResult {
  std::map<TapId, BasicTensor<T>> features;  // [B x tap_width]
  BasicTensor<T> logits;                     // [B x num_classes]
};

/// Full forward that records the CLS embedding at each requested tap.
template <class T>
CollectResult<T> forward_collect(const BasicTensor<T>& images, const ModelWeights<T>& w, const ModelConfig& cfg,
                                 const std::set<TapId>& taps);

/// Per-head attention probabilities of a block for one sample:
/// [heads x tokens x tokens].
template <class T>
std::vector<T> attention_weights(const BlockCache<T>& cache, const ModelConfig& cfg, std::size_t sample);

}  // namespace vitprobe
