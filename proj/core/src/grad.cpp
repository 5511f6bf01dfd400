#include "vitprobe/grad.hpp"

#include <algorithm>
#include <cmath>

#include "vitprobe/tensor_ops.hpp"

namespace vitprobe {

namespace {

void check_labels(std::span<const std::int32_t> labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch) {
    fail(ErrorKind::Data, "label count " + std::to_string(labels.size()) + " != batch " + std::to_string(batch));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      fail(ErrorKind::Data, "label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                                " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// Backward through y = x * W + b. Accumulates dW, db and writes dx.
template <class T>
void linear_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy, const LinearParams<T>& p,
                     LinearParams<T>& g, BasicTensor<T>* dx) {
  const std::size_t rows = x.rows(), in = p.weight.extent(0), out = p.weight.extent(1);
  kernels::gemm_tn(x.data().data(), dy.data().data(), g.weight.data().data(), rows, in, out, true);
  T* db = g.bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* dyr = dy.data().data() + r * out;
    for (std::size_t j = 0; j < out; ++j) db[j] += dyr[j];
  }
  if (dx) {
    *dx = BasicTensor<T>({rows, in});
    kernels::gemm_nt(dy.data().data(), p.weight.data().data(), dx->data().data(), rows, out, in, false);
  }
}

// Backward through y = xhat * gamma + beta, xhat = (x - mean) * rstd.
// Adds the input gradient into dx.
template <class T>
void layer_norm_backward(const BasicTensor<T>& x, const std::vector<T>& mean, const std::vector<T>& rstd,
                         const BasicTensor<T>& dy, const LayerNormParams<T>& p, LayerNormParams<T>& g,
                         BasicTensor<T>& dx) {
  const std::size_t rows = x.rows(), d = x.cols();
  std::vector<T> xhat(d), dxhat(d);
  const T inv_d = T{1} / static_cast<T>(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * d;
    const T* dyr = dy.data().data() + r * d;
    T* dxr = dx.data().data() + r * d;
    T sum_dxhat{0}, sum_dxhat_xhat{0};
    for (std::size_t i = 0; i < d; ++i) {
      xhat[i] = (xr[i] - mean[r]) * rstd[r];
      dxhat[i] = dyr[i] * p.gamma[i];
      g.gamma[i] += dyr[i] * xhat[i];
      g.beta[i] += dyr[i];
      sum_dxhat += dxhat[i];
      sum_dxhat_xhat += dxhat[i] * xhat[i];
    }
    const T m1 = sum_dxhat * inv_d, m2 = sum_dxhat_xhat * inv_d;
    for (std::size_t i = 0; i < d; ++i) dxr[i] += rstd[r] * (dxhat[i] - m1 - xhat[i] * m2);
  }
}

// Backward through one block given dL/dy; returns dL/dx.
template <class T>
BasicTensor<T> block_backward(const BlockCache<T>& c, const BlockWeights<T>& w, BlockWeights<T>& g,
                              const BasicTensor<T>& dy, const ModelConfig& cfg, std::size_t batch) {
  const std::size_t S = cfg.tokens(), d = cfg.embed_dim, H = cfg.num_heads, dh = cfg.head_dim();
  const std::size_t rows = batch * S;

  // y = r1 + f2
  BasicTensor<T> dr1 = dy;
  BasicTensor<T> dact;
  linear_backward(c.act, dy, w.fc2, g.fc2, &dact);
  for (std::size_t i = 0; i < dact.size(); ++i) dact[i] *= gelu_derivative(c.fc1[i]);
  BasicTensor<T> dln2;
  linear_backward(c.ln2, dact, w.fc1, g.fc1, &dln2);
  layer_norm_backward(c.rc1, c.ln2_mean, c.ln2_rstd, dln2, w.ln2, g.ln2, dr1);

  // r1 = x + m
  BasicTensor<T> dx = dr1;
  BasicTensor<T> dctx;
  linear_backward(c.context, dr1, w.attn_out, g.attn_out, &dctx);

  BasicTensor<T> dqkv({rows, 3 * d});
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  const std::size_t ld = 3 * d;
  std::vector<T> dP(S * S);
  for (std::size_t s = 0; s < batch; ++s) {
    const T* base = c.qkv.data().data() + s * S * ld;
    T* dbase = dqkv.data().data() + s * S * ld;
    for (std::size_t h = 0; h < H; ++h) {
      const T* P = c.probs.data() + (s * H + h) * S * S;
      // context_i = sum_j P_ij v_j
      for (std::size_t i = 0; i < S; ++i) {
        const T* dout = dctx.data().data() + (s * S + i) * d + h * dh;
        for (std::size_t j = 0; j < S; ++j) {
          const T* v = base + j * ld + 2 * d + h * dh;
          T* dv = dbase + j * ld + 2 * d + h * dh;
          T acc{0};
          for (std::size_t cc = 0; cc < dh; ++cc) {
            acc += dout[cc] * v[cc];
            dv[cc] += P[i * S + j] * dout[cc];
          }
          dP[i * S + j] = acc;
        }
      }
      // softmax backward then scores = scale * q . k
      for (std::size_t i = 0; i < S; ++i) {
        T dot{0};
        for (std::size_t j = 0; j < S; ++j) dot += dP[i * S + j] * P[i * S + j];
        const T* q = base + i * ld + h * dh;
        T* dq = dbase + i * ld + h * dh;
        for (std::size_t j = 0; j < S; ++j) {
          const T ds = P[i * S + j] * (dP[i * S + j] - dot) * scale;
          const T* k = base + j * ld + d + h * dh;
          T* dk = dbase + j * ld + d + h * dh;
          for (std::size_t cc = 0; cc < dh; ++cc) {
            dq[cc] += ds * k[cc];
            dk[cc] += ds * q[cc];
          }
        }
      }
    }
  }
  BasicTensor<T> dln1;
  linear_backward(c.ln1, dqkv, w.qkv, g.qkv, &dln1);
  layer_norm_backward(c.x, c.ln1_mean, c.ln1_rstd, dln1, w.ln1, g.ln1, dx);
  return dx;
}

}  // namespace

template <class T>
double cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> labels) {
  check_labels(labels, logits.rows(), logits.cols());
  double total = 0.0;
  const std::size_t C = logits.cols();
  for (std::size_t s = 0; s < logits.rows(); ++s) {
    const auto z = logits.row(s);
    double mx = z[0];
    for (std::size_t k = 1; k < C; ++k) mx = std::max(mx, static_cast<double>(z[k]));
    double sum = 0.0;
    for (std::size_t k = 0; k < C; ++k) sum += std::exp(static_cast<double>(z[k]) - mx);
    total += (std::log(sum) + mx) - static_cast<double>(z[static_cast<std::size_t>(labels[s])]);
  }
  return total / static_cast<double>(logits.rows());
}

template <class T>
double batch_loss(const BasicTensor<T>& images, std::span<const std::int32_t> labels, const ModelWeights<T>& w,
                  const ModelConfig& cfg) {
  check_labels(labels, images.extent(0), cfg.num_classes);
  return cross_entropy(forward_logits(images, w, cfg), labels);
}

template <class T>
LossAndGrads<T> loss_and_grads(const BasicTensor<T>& images, std::span<const std::int32_t> labels,
                               const ModelWeights<T>& w, const ModelConfig& cfg) {
  check_labels(labels, images.extent(0), cfg.num_classes);
  const ForwardTrace<T> tr = forward_trace(images, w, cfg);
  const std::size_t B = tr.batch, C = cfg.num_classes, d = cfg.embed_dim, S = cfg.tokens();

  LossAndGrads<T> out;
  out.loss = cross_entropy(tr.logits, labels);
  out.grads = zero_weights<T>(cfg);
  auto& g = out.grads;

  // dL/dlogits = (softmax - onehot) / B
  BasicTensor<T> dlogits = softmax(tr.logits);
  const T inv_b = T{1} / static_cast<T>(B);
  for (std::size_t s = 0; s < B; ++s) {
    dlogits.at(s, static_cast<std::size_t>(labels[s])) -= T{1};
    for (std::size_t k = 0; k < C; ++k) dlogits.at(s, k) *= inv_b;
  }
  BasicTensor<T> dnorm;
  linear_backward(tr.head_ln, dlogits, w.head, g.head, &dnorm);
  BasicTensor<T> dcls({B, d});
  layer_norm_backward(tr.cls_final, tr.head_mean, tr.head_rstd, dnorm, w.head_ln, g.head_ln, dcls);

  BasicTensor<T> dx({B * S, d});
  for (std::size_t s = 0; s < B; ++s) {
    const auto src = dcls.row(s);
    std::copy(src.begin(), src.end(), dx.row(s * S).begin());
  }
  for (std::size_t b = cfg.num_blocks; b-- > 0;) {
    dx = block_backward(tr.blocks[b], w.blocks[b], g.blocks[b], dx, cfg, B);
  }

  // Embedding: token(s, 0) = cls + pos[0]; token(s, 1+p) = patch . conv^T + bias + pos[1+p]
  const std::size_t n = cfg.num_patches();
  BasicTensor<T> dproj({B * n, d});
  for (std::size_t s = 0; s < B; ++s) {
    for (std::size_t t = 0; t < S; ++t) {
      const T* src = dx.data().data() + (s * S + t) * d;
      T* pos = g.pos_embed.data().data() + t * d;
      for (std::size_t j = 0; j < d; ++j) pos[j] += src[j];
      if (t == 0) {
        for (std::size_t j = 0; j < d; ++j) g.cls_token[j] += src[j];
      } else {
        T* dp = dproj.data().data() + (s * n + t - 1) * d;
        for (std::size_t j = 0; j < d; ++j) {
          dp[j] = src[j];
          g.conv_bias[j] += src[j];
        }
      }
    }
  }
  // conv_weight [d x CPP] += dproj^T [d x B*n] * patches [B*n x CPP]
  kernels::gemm_tn(dproj.data().data(), tr.patches.data().data(), g.conv_weight.data().data(), B * n, d,
                   cfg.patch_dim(), true);
  return out;
}

#define VITPROBE_INSTANTIATE(T)                                                                         \
  template LossAndGrads<T> loss_and_grads(const BasicTensor<T>&, std::span<const std::int32_t>,         \
                                          const ModelWeights<T>&, const ModelConfig&);                  \
  template double batch_loss(const BasicTensor<T>&, std::span<const std::int32_t>, const ModelWeights<T>&, \
                             const ModelConfig&);                                                       \
  template double cross_entropy(const BasicTensor<T>&, std::span<const std::int32_t>);

VITPROBE_INSTANTIATE(float)
VITPROBE_INSTANTIATE(double)

#undef VITPROBE_INSTANTIATE

}  // namespace vitprobe
