#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "vitprobe/error.hpp"
#include "vitprobe/tensor_ops.hpp"
#include "vitprobe/vit.hpp"
#include "vitprobe/weights_io.hpp"

using namespace vitprobe;

TEST_CASE("config geometry") {
  const auto toy = ModelConfig::toy();
  CHECK(toy.tokens() == 17);
  CHECK(toy.ffn_dim == 4 * toy.embed_dim);
  const auto base = ModelConfig::base();
  CHECK(base.tokens() == 197);
  CHECK(base.embed_dim == 768);
  CHECK(all_taps(base).size() == 96);
  CHECK(tap_width(TapId{3, Module::FC1}, base) == 3072);
  CHECK(all_taps(toy).size() == 48);

  auto bad = toy;
  bad.ffn_dim = 100;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = toy;
  bad.image_size = 30;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = toy;
  bad.num_heads = 5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("tap widths and names") {
  const auto cfg = ModelConfig::toy();
  for (const auto& t : all_taps(cfg)) {
    const bool wide = t.module == Module::FC1 || t.module == Module::Act;
    CHECK(tap_width(t, cfg) == (wide ? 4 * cfg.embed_dim : cfg.embed_dim));
  }
  CHECK(tap_name(TapId{2, Module::Act}) == "2.Act");
  CHECK(parse_module("FC2") == Module::FC2);
  CHECK_FALSE(parse_module("FC3").has_value());
  try {
    validate_tap(TapId{6, Module::RC2}, cfg);
    FAIL("expected a tap error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Tap);
  }
}

TEST_CASE("embedding of a 224 image under the reference geometry") {
  auto cfg = ModelConfig::base();
  cfg.num_blocks = 1;
  const auto w = zero_weights<float>(cfg);
  const Tensor img({3, 224, 224});
  const auto tokens = embed_image(img, w, cfg);
  CHECK(tokens.shape() == Shape{197, 768});
  CHECK_THROWS_AS(embed_image(Tensor({3, 32, 32}), w, cfg), Error);
}

TEST_CASE("zero image embeds to zero patches and the cls token") {
  const auto cfg = ModelConfig::toy();
  auto w = init_toy(cfg, 3);
  w.conv_bias.fill(0.0f);
  w.pos_embed.fill(0.0f);
  const auto tokens = embed_image(Tensor({3, 32, 32}), w, cfg);
  CHECK(tokens.rows() == 17);
  for (std::size_t j = 0; j < cfg.embed_dim; ++j) CHECK(tokens.at(0, j) == w.cls_token[j]);
  for (std::size_t i = 1; i < 17; ++i)
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) CHECK(tokens.at(i, j) == 0.0f);
}

TEST_CASE("patch embedding equals a strided convolution") {
  const auto cfg = ModelConfig::toy();
  const auto w = cast_weights<double>(init_toy(cfg, 5));
  const auto img = oracle::random_tensor<double>({3, 32, 32}, 9);
  const auto tokens = embed_image(img, w, cfg);
  const std::size_t P = cfg.patch_size, g = cfg.grid();
  for (std::size_t py = 0; py < g; ++py) {
    for (std::size_t px = 0; px < g; ++px) {
      for (std::size_t o = 0; o < cfg.embed_dim; o += 7) {
        double acc = w.conv_bias[o];
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t ky = 0; ky < P; ++ky)
            for (std::size_t kx = 0; kx < P; ++kx)
              acc += w.conv_weight[((o * 3 + c) * P + ky) * P + kx] *
                     img[(c * 32 + py * P + ky) * 32 + px * P + kx];
        const std::size_t tok = 1 + py * g + px;
        CHECK(std::abs(tokens.at(tok, o) - (acc + w.pos_embed.at(tok, o))) < 1e-12);
      }
    }
  }
}

TEST_CASE("residual taps are exact sums") {
  const auto cfg = ModelConfig::toy();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto w = oracle::random_weights(cfg, 40 + s);
    const auto wf = cast_weights<float>(w);
    const auto x = oracle::random_tensor<float>({cfg.tokens(), cfg.embed_dim}, 80 + s, 2.0);
    const auto out = block_forward(x, wf.blocks[s % cfg.num_blocks], cfg, s % cfg.num_blocks);
    const auto& mha = out.taps[module_index(Module::MHA)].cls_embedding;
    const auto& rc1 = out.taps[module_index(Module::RC1)].cls_embedding;
    const auto& fc2 = out.taps[module_index(Module::FC2)].cls_embedding;
    const auto& rc2 = out.taps[module_index(Module::RC2)].cls_embedding;
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
      CHECK(rc1[j] == x.at(0, j) + mha[j]);
      CHECK(rc2[j] == rc1[j] + fc2[j]);
      CHECK(out.y.at(0, j) == rc2[j]);
    }
    for (std::size_t i = 0; i < 8; ++i) CHECK(out.taps[i].tap.module == kAllModules[i]);
  }
}

TEST_CASE("zero weights collapse the block") {
  const auto cfg = ModelConfig::toy();
  auto w = zero_weights<float>(cfg);
  for (auto& b : w.blocks) {
    b.ln1.gamma.fill(1.0f);
    b.ln2.gamma.fill(1.0f);
  }
  const auto x = oracle::random_tensor<float>({cfg.tokens(), cfg.embed_dim}, 3);
  const auto out = block_forward(x, w.blocks[0], cfg);
  for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
    CHECK(out.taps[module_index(Module::MHA)].cls_embedding[j] == 0.0f);
    CHECK(out.taps[module_index(Module::RC1)].cls_embedding[j] == x.at(0, j));
    CHECK(out.taps[module_index(Module::RC2)].cls_embedding[j] == x.at(0, j));
  }
  for (float v : out.taps[module_index(Module::Act)].cls_embedding) CHECK(v == 0.0f);
}

TEST_CASE("single-token attention reduces to the value path") {
  ModelConfig cfg;
  cfg.image_size = 4;
  cfg.patch_size = 4;
  cfg.embed_dim = 4;
  cfg.num_heads = 1;
  cfg.num_blocks = 1;
  cfg.ffn_dim = 16;
  cfg.num_classes = 2;
  const auto w = oracle::random_weights(cfg, 21);
  const auto& bw = w.blocks[0];
  const Tensor64 x({1, 4}, {0.3, -1.2, 2.0, 0.5});
  const auto out = block_forward(x, bw, cfg);

  // By hand: a = LN1(x); v = a Wv + bv; m = v Wo + bo.
  const double mean = (0.3 - 1.2 + 2.0 + 0.5) / 4;
  double var = 0;
  for (double v : x.data()) var += (v - mean) * (v - mean);
  var /= 4;
  std::vector<double> a(4), v(4, 0.0), m(4, 0.0);
  for (std::size_t j = 0; j < 4; ++j) a[j] = (x[j] - mean) / std::sqrt(var + cfg.ln_eps) * bw.ln1.gamma[j] + bw.ln1.beta[j];
  for (std::size_t c = 0; c < 4; ++c) {
    v[c] = bw.qkv.bias[8 + c];
    for (std::size_t j = 0; j < 4; ++j) v[c] += a[j] * bw.qkv.weight.at(j, 8 + c);
  }
  for (std::size_t c = 0; c < 4; ++c) {
    m[c] = bw.attn_out.bias[c];
    for (std::size_t j = 0; j < 4; ++j) m[c] += v[j] * bw.attn_out.weight.at(j, c);
  }
  const auto& mha = out.taps[module_index(Module::MHA)].cls_embedding;
  for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(mha[c] - m[c]) < 1e-12);

  BlockCache<double> cache;
  block_forward_batch(x, bw, cfg, 1, cache);
  const auto probs = attention_weights(cache, cfg, 0);
  REQUIRE(probs.size() == 1);
  CHECK(probs[0] == 1.0);
}

TEST_CASE("attention rows sum to one") {
  const auto cfg = ModelConfig::toy();
  const auto w = oracle::random_weights(cfg, 5, 3.0);
  const auto images = oracle::random_tensor<double>({3, 3, 32, 32}, 6, 2.0);
  const auto trace = forward_trace(images, w, cfg);
  for (const auto& block : trace.blocks) {
    for (std::size_t s = 0; s < 3; ++s) {
      const auto p = attention_weights(block, cfg, s);
      const std::size_t S = cfg.tokens();
      for (std::size_t r = 0; r < p.size() / S; ++r) {
        double sum = 0;
        for (std::size_t j = 0; j < S; ++j) sum += p[r * S + j];
        CHECK(std::abs(sum - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("forward_collect widths, determinism, batch permutation") {
  const auto cfg = ModelConfig::toy();
  const auto w = init_toy(cfg, 1);
  const auto images = oracle::random_tensor<float>({4, 3, 32, 32}, 2, 2.0);
  const auto taps = all_taps(cfg);
  const std::set<TapId> tap_set(taps.begin(), taps.end());
  const auto a = forward_collect(images, w, cfg, tap_set);
  const auto b = forward_collect(images, w, cfg, tap_set);
  CHECK(a.features.size() == 48);
  for (const auto& [tap, f] : a.features) {
    CHECK(f.shape() == Shape{4, tap_width(tap, cfg)});
    CHECK(f == b.features.at(tap));
  }
  CHECK(a.logits == b.logits);
  CHECK(a.logits == forward_logits(images, w, cfg));

  // Reverse the batch: rows follow the samples exactly.
  Tensor rev(images.shape());
  const std::size_t per = 3 * 32 * 32;
  for (std::size_t s = 0; s < 4; ++s)
    std::copy_n(images.data().begin() + (3 - s) * per, per, rev.data().begin() + s * per);
  const auto r = forward_collect(rev, w, cfg, tap_set);
  for (const auto& [tap, f] : a.features) {
    const auto& g = r.features.at(tap);
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t j = 0; j < f.cols(); ++j) CHECK(f.at(s, j) == g.at(3 - s, j));
  }
  CHECK_THROWS_AS(forward_collect(images, w, cfg, {TapId{6, Module::LN1}}), Error);
}

TEST_CASE("last RC2 tap feeds the output LayerNorm") {
  const auto cfg = ModelConfig::toy();
  const auto w = cast_weights<double>(init_toy(cfg, 8));
  const auto images = oracle::random_tensor<double>({2, 3, 32, 32}, 4);
  const auto c = forward_collect(images, w, cfg, {TapId{cfg.num_blocks - 1, Module::RC2}});
  const auto& rc2 = c.features.at(TapId{cfg.num_blocks - 1, Module::RC2});
  const auto trace = forward_trace(images, w, cfg);
  CHECK(rc2 == trace.cls_final);
  CHECK(classifier_head(rc2, w, cfg) == c.logits);
}
