// SPDX-License-Identifier: Apache-2.0

#include "linmark/tiny_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <random>

#include "linmark/errors.hpp"
#include "linmark/tokenizer.hpp"

namespace linmark {

namespace {

constexpr double kNormEps = 1e-5;
constexpr char kMagic[8] = {'T', 'I', 'N', 'Y', 'E', 'N', 'C', '1'};

void softmax_inplace(std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& x : z) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : z) x /= sum;
}

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z * M_SQRT1_2)); }

double gelu_grad(double z) {
  const double cdf = 0.5 * (1.0 + std::erf(z * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * z * z) * 0.3989422804014327;
  return cdf + z * pdf;
}

}  // namespace

void TinyEncoderConfig::validate() const {
  if (vocab_size < 6) throw ConfigError("tiny encoder: vocab_size too small");
  if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || d_ffn <= 0 || max_seq_len <= 0) {
    throw ConfigError("tiny encoder: dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("tiny encoder: d_model must be divisible by n_heads");
  }
}

double joint_loss(double l_cls, double l_mlm, const LossSpec& spec) {
  if (spec.w_cls < 0.0 || spec.w_mlm < 0.0) {
    throw ValidationError("joint loss weights must be nonnegative");
  }
  return spec.w_cls * l_cls + spec.w_mlm * l_mlm;
}

struct TinyEncoder::Impl {
  TinyEncoderConfig cfg;

  std::vector<float> params;
  std::vector<float> grads;
  std::vector<float> adam_m;
  std::vector<float> adam_v;
  long step_count = 0;

  struct LayerOffsets {
    std::size_t ln1_g, wq, wk, wv, wo, ln2_g, w1, b1, w2, b2;
  };
  std::size_t tok_emb = 0, pos_emb = 0, lnf_g = 0;
  std::size_t cls_w = 0, cls_b = 0, pair_w = 0, pair_b = 0, mlm_b = 0;
  std::vector<LayerOffsets> layers;
  std::size_t total = 0;

  explicit Impl(const TinyEncoderConfig& c) : cfg(c) {
    cfg.validate();
    lay_out();
    init_params();
  }

  void lay_out() {
    const auto V = static_cast<std::size_t>(cfg.vocab_size);
    const auto D = static_cast<std::size_t>(cfg.d_model);
    const auto M = static_cast<std::size_t>(cfg.max_seq_len);
    const auto F = static_cast<std::size_t>(cfg.d_ffn);
    std::size_t at = 0;
    auto claim = [&at](std::size_t n) {
      const std::size_t off = at;
      at += n;
      return off;
    };
    tok_emb = claim(V * D);
    pos_emb = claim(M * D);
    layers.clear();
    for (int l = 0; l < cfg.n_layers; ++l) {
      LayerOffsets o;
      o.ln1_g = claim(D);
      o.wq = claim(D * D);
      o.wk = claim(D * D);
      o.wv = claim(D * D);
      o.wo = claim(D * D);
      o.ln2_g = claim(D);
      o.w1 = claim(D * F);
      o.b1 = claim(F);
      o.w2 = claim(F * D);
      o.b2 = claim(D);
      layers.push_back(o);
    }
    lnf_g = claim(D);
    cls_w = claim(D * kNumLabels);
    cls_b = claim(kNumLabels);
    pair_w = claim(D * 2);
    pair_b = claim(2);
    mlm_b = claim(V);
    total = at;
    params.assign(total, 0.0F);
    grads.assign(total, 0.0F);
    adam_m.assign(total, 0.0F);
    adam_v.assign(total, 0.0F);
  }

  void init_params() {
    std::mt19937_64 rng(cfg.init_seed);
    std::normal_distribution<float> dist(0.0F, 0.08F);
    for (float& w : params) w = dist(rng);
    // gains start at identity, biases at zero
    const auto D = static_cast<std::size_t>(cfg.d_model);
    const auto F = static_cast<std::size_t>(cfg.d_ffn);
    auto ones = [this](std::size_t off, std::size_t n) {
      std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(off), n, 1.0F);
    };
    auto zeros = [this](std::size_t off, std::size_t n) {
      std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(off), n, 0.0F);
    };
    for (const auto& o : layers) {
      ones(o.ln1_g, D);
      ones(o.ln2_g, D);
      zeros(o.b1, F);
      zeros(o.b2, D);
    }
    ones(lnf_g, D);
    zeros(cls_b, kNumLabels);
    zeros(pair_b, 2);
    zeros(mlm_b, static_cast<std::size_t>(cfg.vocab_size));
  }

  const float* p(std::size_t off) const { return params.data() + off; }
  float* g(std::size_t off) { return grads.data() + off; }

  // ---- forward ----------------------------------------------------------

  struct LayerCache {
    std::vector<double> x_in, n1, q, k, v, att, ctx, x_mid, n2, ffn_pre, ffn_act;
    std::vector<double> inv_rms1, inv_rms2;
  };
  struct Cache {
    std::vector<int> ids;
    int T = 0;
    std::vector<LayerCache> layers;
    std::vector<double> x_final, hf, inv_rmsf;
  };

  void check_tokens(const std::vector<int>& ids) const {
    if (ids.empty()) throw ValidationError("empty token sequence");
    if (static_cast<int>(ids.size()) > cfg.max_seq_len) {
      throw ValidationError("sequence of " + std::to_string(ids.size()) +
                            " tokens exceeds max_sequence_length " +
                            std::to_string(cfg.max_seq_len));
    }
    for (int id : ids) {
      if (id < 0 || id >= cfg.vocab_size) {
        throw ValidationError("token id " + std::to_string(id) +
                              " outside vocabulary");
      }
    }
  }

  // y[t,:] = x[t,:] * g / rms(x[t,:]); returns per-position 1/rms
  static void rmsnorm(const std::vector<double>& x, const float* gain, int T, int D,
                      std::vector<double>& y, std::vector<double>& inv_rms) {
    y.assign(static_cast<std::size_t>(T) * D, 0.0);
    inv_rms.assign(static_cast<std::size_t>(T), 0.0);
    for (int t = 0; t < T; ++t) {
      double ss = 0.0;
      for (int d = 0; d < D; ++d) {
        const double xv = x[static_cast<std::size_t>(t) * D + d];
        ss += xv * xv;
      }
      const double r = 1.0 / std::sqrt(ss / D + kNormEps);
      inv_rms[static_cast<std::size_t>(t)] = r;
      for (int d = 0; d < D; ++d) {
        y[static_cast<std::size_t>(t) * D + d] =
            x[static_cast<std::size_t>(t) * D + d] * r * gain[d];
      }
    }
  }

  // dL/dx and dL/dgain for y = x * inv_rms * g
  static void rmsnorm_backward(const std::vector<double>& x, const float* gain,
                               const std::vector<double>& inv_rms,
                               const std::vector<double>& dy, int T, int D,
                               std::vector<double>& dx, float* dgain) {
    dx.assign(static_cast<std::size_t>(T) * D, 0.0);
    for (int t = 0; t < T; ++t) {
      const double r = inv_rms[static_cast<std::size_t>(t)];
      double dot = 0.0;  // sum_d dy_d * g_d * x_d
      for (int d = 0; d < D; ++d) {
        const std::size_t i = static_cast<std::size_t>(t) * D + d;
        dot += dy[i] * gain[d] * x[i];
        dgain[d] += static_cast<float>(dy[i] * x[i] * r);
      }
      const double k = r * r * r * dot / D;
      for (int d = 0; d < D; ++d) {
        const std::size_t i = static_cast<std::size_t>(t) * D + d;
        dx[i] = dy[i] * gain[d] * r - x[i] * k;
      }
    }
  }

  // out[t,:] = in[t,:] . W (rows D_in, cols D_out), W row-major
  static void matmul(const std::vector<double>& in, const float* W, int T, int Din,
                     int Dout, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(T) * Dout, 0.0);
    for (int t = 0; t < T; ++t) {
      const double* row = in.data() + static_cast<std::size_t>(t) * Din;
      double* orow = out.data() + static_cast<std::size_t>(t) * Dout;
      for (int d = 0; d < Din; ++d) {
        const double xv = row[d];
        if (xv == 0.0) continue;
        const float* wrow = W + static_cast<std::size_t>(d) * Dout;
        for (int e = 0; e < Dout; ++e) orow[e] += xv * wrow[e];
      }
    }
  }

  // grads for out = in . W : dW += in^T dOut, dIn += dOut W^T
  static void matmul_backward(const std::vector<double>& in, const float* W,
                              const std::vector<double>& dout, int T, int Din,
                              int Dout, float* dW, std::vector<double>* din) {
    for (int t = 0; t < T; ++t) {
      const double* irow = in.data() + static_cast<std::size_t>(t) * Din;
      const double* drow = dout.data() + static_cast<std::size_t>(t) * Dout;
      for (int d = 0; d < Din; ++d) {
        float* dwrow = dW + static_cast<std::size_t>(d) * Dout;
        const double xv = irow[d];
        for (int e = 0; e < Dout; ++e) {
          dwrow[e] += static_cast<float>(xv * drow[e]);
        }
      }
      if (din != nullptr) {
        double* dirow = din->data() + static_cast<std::size_t>(t) * Din;
        for (int d = 0; d < Din; ++d) {
          const float* wrow = W + static_cast<std::size_t>(d) * Dout;
          double acc = 0.0;
          for (int e = 0; e < Dout; ++e) acc += wrow[e] * drow[e];
          dirow[d] += acc;
        }
      }
    }
  }

  Cache forward(const std::vector<int>& ids) const {
    check_tokens(ids);
    const int T = static_cast<int>(ids.size());
    const int D = cfg.d_model;
    const int H = cfg.n_heads;
    const int dh = D / H;
    const int F = cfg.d_ffn;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Cache cache;
    cache.ids = ids;
    cache.T = T;
    std::vector<double> x(static_cast<std::size_t>(T) * D);
    for (int t = 0; t < T; ++t) {
      const float* te = p(tok_emb) + static_cast<std::size_t>(ids[t]) * D;
      const float* pe = p(pos_emb) + static_cast<std::size_t>(t) * D;
      for (int d = 0; d < D; ++d) {
        x[static_cast<std::size_t>(t) * D + d] =
            static_cast<double>(te[d]) + static_cast<double>(pe[d]);
      }
    }

    cache.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (int l = 0; l < cfg.n_layers; ++l) {
      const LayerOffsets& o = layers[static_cast<std::size_t>(l)];
      LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
      lc.x_in = x;
      rmsnorm(lc.x_in, p(o.ln1_g), T, D, lc.n1, lc.inv_rms1);
      matmul(lc.n1, p(o.wq), T, D, D, lc.q);
      matmul(lc.n1, p(o.wk), T, D, D, lc.k);
      matmul(lc.n1, p(o.wv), T, D, D, lc.v);

      lc.att.assign(static_cast<std::size_t>(H) * T * T, 0.0);
      lc.ctx.assign(static_cast<std::size_t>(T) * D, 0.0);
      for (int h = 0; h < H; ++h) {
        const int base = h * dh;
        for (int i = 0; i < T; ++i) {
          std::vector<double> row(static_cast<std::size_t>(T));
          for (int j = 0; j < T; ++j) {
            double dot = 0.0;
            for (int d = 0; d < dh; ++d) {
              dot += lc.q[static_cast<std::size_t>(i) * D + base + d] *
                     lc.k[static_cast<std::size_t>(j) * D + base + d];
            }
            row[static_cast<std::size_t>(j)] = dot * scale;
          }
          softmax_inplace(row);
          for (int j = 0; j < T; ++j) {
            const double a = row[static_cast<std::size_t>(j)];
            lc.att[(static_cast<std::size_t>(h) * T + i) * T + j] = a;
            for (int d = 0; d < dh; ++d) {
              lc.ctx[static_cast<std::size_t>(i) * D + base + d] +=
                  a * lc.v[static_cast<std::size_t>(j) * D + base + d];
            }
          }
        }
      }
      std::vector<double> attn_out;
      matmul(lc.ctx, p(o.wo), T, D, D, attn_out);
      lc.x_mid = lc.x_in;
      for (std::size_t i = 0; i < lc.x_mid.size(); ++i) lc.x_mid[i] += attn_out[i];

      rmsnorm(lc.x_mid, p(o.ln2_g), T, D, lc.n2, lc.inv_rms2);
      matmul(lc.n2, p(o.w1), T, D, F, lc.ffn_pre);
      lc.ffn_act.assign(static_cast<std::size_t>(T) * F, 0.0);
      for (int t = 0; t < T; ++t) {
        for (int f = 0; f < F; ++f) {
          const std::size_t i = static_cast<std::size_t>(t) * F + f;
          lc.ffn_pre[i] += p(o.b1)[f];
          lc.ffn_act[i] = gelu(lc.ffn_pre[i]);
        }
      }
      std::vector<double> ffn_out;
      matmul(lc.ffn_act, p(o.w2), T, F, D, ffn_out);
      x = lc.x_mid;
      for (int t = 0; t < T; ++t) {
        for (int d = 0; d < D; ++d) {
          x[static_cast<std::size_t>(t) * D + d] +=
              ffn_out[static_cast<std::size_t>(t) * D + d] + p(o.b2)[d];
        }
      }
    }
    cache.x_final = x;
    rmsnorm(cache.x_final, p(lnf_g), T, D, cache.hf, cache.inv_rmsf);
    return cache;
  }

  // ---- heads -------------------------------------------------------------

  std::vector<double> head_logits(const Cache& cache, std::size_t w_off,
                                  std::size_t b_off, int n_out) const {
    const int D = cfg.d_model;
    std::vector<double> z(static_cast<std::size_t>(n_out), 0.0);
    const float* W = p(w_off);
    const float* b = p(b_off);
    for (int c = 0; c < n_out; ++c) {
      double acc = b[c];
      for (int d = 0; d < D; ++d) {
        acc += cache.hf[static_cast<std::size_t>(d)] *
               W[static_cast<std::size_t>(d) * n_out + c];
      }
      z[static_cast<std::size_t>(c)] = acc;
    }
    return z;
  }

  std::vector<double> mlm_logits(const Cache& cache, int pos) const {
    const int D = cfg.d_model;
    const int V = cfg.vocab_size;
    std::vector<double> z(static_cast<std::size_t>(V), 0.0);
    const double* h = cache.hf.data() + static_cast<std::size_t>(pos) * D;
    const float* E = p(tok_emb);
    const float* b = p(mlm_b);
    for (int w = 0; w < V; ++w) {
      const float* row = E + static_cast<std::size_t>(w) * D;
      double acc = b[w];
      for (int d = 0; d < D; ++d) acc += h[d] * row[d];
      z[static_cast<std::size_t>(w)] = acc;
    }
    return z;
  }

  // ---- loss + backward ----------------------------------------------------

  struct LossParts {
    std::optional<double> cls;  // classification or pair head
    std::optional<double> mlm;
  };

  static double combine(const LossParts& parts, const LossSpec& spec) {
    switch (spec.kind) {
      case LossSpec::Kind::cross_entropy_class:
        if (!parts.cls) throw TrainingError("instance lacks a classification target");
        return *parts.cls;
      case LossSpec::Kind::cross_entropy_mlm:
        if (!parts.mlm) throw TrainingError("instance lacks masked-token targets");
        return *parts.mlm;
      case LossSpec::Kind::joint_weighted:
        if (!parts.cls || !parts.mlm) {
          throw TrainingError("joint loss needs both classification and MLM targets");
        }
        return joint_loss(*parts.cls, *parts.mlm, spec);
    }
    throw TrainingError("unreachable loss kind");
  }

  // Computes the loss; when `accumulate` is set, adds parameter gradients of
  // loss * grad_scale.
  double instance_pass(const FormulationInput& input, const LossSpec& spec,
                       bool accumulate, double grad_scale) {
    const Cache cache = forward(input.tokens);
    const int D = cfg.d_model;
    const int T = cache.T;

    LossParts parts;
    std::vector<double> dhf;
    if (accumulate) dhf.assign(static_cast<std::size_t>(T) * D, 0.0);

    const bool want_cls =
        spec.kind != LossSpec::Kind::cross_entropy_mlm &&
        (input.class_target.has_value() || input.pair_target.has_value());
    const bool want_mlm = spec.kind != LossSpec::Kind::cross_entropy_class &&
                          !input.token_targets.empty();
    const double w_cls = spec.kind == LossSpec::Kind::joint_weighted ? spec.w_cls : 1.0;
    const double w_mlm = spec.kind == LossSpec::Kind::joint_weighted ? spec.w_mlm : 1.0;

    if (want_cls) {
      const bool pair = input.pair_target.has_value();
      const std::size_t w_off = pair ? pair_w : cls_w;
      const std::size_t b_off = pair ? pair_b : cls_b;
      const int n_out = pair ? 2 : static_cast<int>(kNumLabels);
      const int target = pair ? *input.pair_target : *input.class_target;
      if (target < 0 || target >= n_out) throw TrainingError("target out of range");
      std::vector<double> probs = head_logits(cache, w_off, b_off, n_out);
      softmax_inplace(probs);
      parts.cls = -std::log(std::max(probs[static_cast<std::size_t>(target)], 1e-300));
      if (accumulate) {
        const double s = grad_scale * w_cls;
        float* dW = g(w_off);
        float* db = g(b_off);
        const float* W = p(w_off);
        for (int c = 0; c < n_out; ++c) {
          const double dz =
              (probs[static_cast<std::size_t>(c)] - (c == target ? 1.0 : 0.0)) * s;
          db[c] += static_cast<float>(dz);
          for (int d = 0; d < D; ++d) {
            dW[static_cast<std::size_t>(d) * n_out + c] +=
                static_cast<float>(dz * cache.hf[static_cast<std::size_t>(d)]);
            dhf[static_cast<std::size_t>(d)] +=
                dz * W[static_cast<std::size_t>(d) * n_out + c];
          }
        }
      }
    }

    if (want_mlm) {
      const int V = cfg.vocab_size;
      const double inv_n = 1.0 / static_cast<double>(input.token_targets.size());
      double mlm_total = 0.0;
      for (const auto& [pos, original] : input.token_targets) {
        if (pos < 0 || pos >= T) throw TrainingError("mask target position out of range");
        if (original < 0 || original >= V) {
          throw TrainingError("mask target token outside vocabulary");
        }
        std::vector<double> probs = mlm_logits(cache, pos);
        softmax_inplace(probs);
        mlm_total -= std::log(std::max(probs[static_cast<std::size_t>(original)], 1e-300));
        if (accumulate) {
          const double s = grad_scale * w_mlm * inv_n;
          float* dE = g(tok_emb);
          float* db = g(mlm_b);
          const float* E = p(tok_emb);
          const double* h = cache.hf.data() + static_cast<std::size_t>(pos) * D;
          double* dh = dhf.data() + static_cast<std::size_t>(pos) * D;
          for (int w = 0; w < V; ++w) {
            const double dz =
                (probs[static_cast<std::size_t>(w)] - (w == original ? 1.0 : 0.0)) * s;
            db[w] += static_cast<float>(dz);
            const float* erow = E + static_cast<std::size_t>(w) * D;
            float* derow = dE + static_cast<std::size_t>(w) * D;
            for (int d = 0; d < D; ++d) {
              derow[d] += static_cast<float>(dz * h[d]);
              dh[d] += dz * erow[d];
            }
          }
        }
      }
      parts.mlm = mlm_total * inv_n;
    }

    const double loss = combine(parts, spec);
    if (accumulate) backward(cache, dhf);
    return loss;
  }

  void backward(const Cache& cache, std::vector<double>& dhf) {
    const int T = cache.T;
    const int D = cfg.d_model;
    const int H = cfg.n_heads;
    const int dh = D / H;
    const int F = cfg.d_ffn;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<double> dx;
    rmsnorm_backward(cache.x_final, p(lnf_g), cache.inv_rmsf, dhf, T, D, dx, g(lnf_g));

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
      const LayerOffsets& o = layers[static_cast<std::size_t>(l)];
      const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];

      // FFN: x = x_mid + relu(n2 W1 + b1) W2 + b2
      std::vector<double> d_act(static_cast<std::size_t>(T) * F, 0.0);
      matmul_backward(lc.ffn_act, p(o.w2), dx, T, F, D, g(o.w2), &d_act);
      {
        float* db2 = g(o.b2);
        for (int t = 0; t < T; ++t) {
          for (int d = 0; d < D; ++d) {
            db2[d] += static_cast<float>(dx[static_cast<std::size_t>(t) * D + d]);
          }
        }
      }
      for (int t = 0; t < T; ++t) {
        float* db1 = g(o.b1);
        for (int f = 0; f < F; ++f) {
          const std::size_t i = static_cast<std::size_t>(t) * F + f;
          d_act[i] *= gelu_grad(lc.ffn_pre[i]);
          db1[f] += static_cast<float>(d_act[i]);
        }
      }
      std::vector<double> d_n2(static_cast<std::size_t>(T) * D, 0.0);
      matmul_backward(lc.n2, p(o.w1), d_act, T, D, F, g(o.w1), &d_n2);
      std::vector<double> d_xmid;
      rmsnorm_backward(lc.x_mid, p(o.ln2_g), lc.inv_rms2, d_n2, T, D, d_xmid,
                       g(o.ln2_g));
      for (std::size_t i = 0; i < d_xmid.size(); ++i) d_xmid[i] += dx[i];

      // attention: x_mid = x_in + (ctx Wo)
      std::vector<double> d_ctx(static_cast<std::size_t>(T) * D, 0.0);
      matmul_backward(lc.ctx, p(o.wo), d_xmid, T, D, D, g(o.wo), &d_ctx);

      std::vector<double> d_q(static_cast<std::size_t>(T) * D, 0.0);
      std::vector<double> d_k(static_cast<std::size_t>(T) * D, 0.0);
      std::vector<double> d_v(static_cast<std::size_t>(T) * D, 0.0);
      for (int h = 0; h < H; ++h) {
        const int base = h * dh;
        for (int i = 0; i < T; ++i) {
          const std::size_t arow = (static_cast<std::size_t>(h) * T + i) * T;
          std::vector<double> datt(static_cast<std::size_t>(T), 0.0);
          for (int j = 0; j < T; ++j) {
            double dot = 0.0;
            for (int d = 0; d < dh; ++d) {
              dot += d_ctx[static_cast<std::size_t>(i) * D + base + d] *
                     lc.v[static_cast<std::size_t>(j) * D + base + d];
            }
            datt[static_cast<std::size_t>(j)] = dot;
            const double a = lc.att[arow + j];
            for (int d = 0; d < dh; ++d) {
              d_v[static_cast<std::size_t>(j) * D + base + d] +=
                  a * d_ctx[static_cast<std::size_t>(i) * D + base + d];
            }
          }
          double inner = 0.0;
          for (int j = 0; j < T; ++j) {
            inner += datt[static_cast<std::size_t>(j)] * lc.att[arow + j];
          }
          for (int j = 0; j < T; ++j) {
            const double a = lc.att[arow + j];
            const double dscore = a * (datt[static_cast<std::size_t>(j)] - inner) * scale;
            for (int d = 0; d < dh; ++d) {
              d_q[static_cast<std::size_t>(i) * D + base + d] +=
                  dscore * lc.k[static_cast<std::size_t>(j) * D + base + d];
              d_k[static_cast<std::size_t>(j) * D + base + d] +=
                  dscore * lc.q[static_cast<std::size_t>(i) * D + base + d];
            }
          }
        }
      }
      std::vector<double> d_n1(static_cast<std::size_t>(T) * D, 0.0);
      matmul_backward(lc.n1, p(o.wq), d_q, T, D, D, g(o.wq), &d_n1);
      matmul_backward(lc.n1, p(o.wk), d_k, T, D, D, g(o.wk), &d_n1);
      matmul_backward(lc.n1, p(o.wv), d_v, T, D, D, g(o.wv), &d_n1);
      std::vector<double> d_xin;
      rmsnorm_backward(lc.x_in, p(o.ln1_g), lc.inv_rms1, d_n1, T, D, d_xin, g(o.ln1_g));
      for (std::size_t i = 0; i < d_xin.size(); ++i) d_xin[i] += d_xmid[i];
      dx = std::move(d_xin);
    }

    float* dte = g(tok_emb);
    float* dpe = g(pos_emb);
    for (int t = 0; t < T; ++t) {
      const std::size_t row = static_cast<std::size_t>(cache.ids[static_cast<std::size_t>(t)]) *
                              static_cast<std::size_t>(D);
      for (int d = 0; d < D; ++d) {
        const double v = dx[static_cast<std::size_t>(t) * D + d];
        dte[row + d] += static_cast<float>(v);
        dpe[static_cast<std::size_t>(t) * D + d] += static_cast<float>(v);
      }
    }
  }

  void adam_step(const OptimizerSettings& opt) {
    ++step_count;
    if (opt.grad_clip > 0.0) {
      double norm = 0.0;
      for (float gv : grads) norm += static_cast<double>(gv) * gv;
      norm = std::sqrt(norm);
      if (norm > opt.grad_clip) {
        const auto s = static_cast<float>(opt.grad_clip / norm);
        for (float& gv : grads) gv *= s;
      }
    }
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < total; ++i) {
      double gv = grads[i];
      if (opt.kind == OptimizerKind::adam && opt.weight_decay > 0.0) {
        gv += opt.weight_decay * params[i];  // classic L2 coupling
      }
      adam_m[i] = static_cast<float>(opt.beta1 * adam_m[i] + (1.0 - opt.beta1) * gv);
      adam_v[i] = static_cast<float>(opt.beta2 * adam_v[i] + (1.0 - opt.beta2) * gv * gv);
      const double mhat = adam_m[i] / bc1;
      const double vhat = adam_v[i] / bc2;
      double update = mhat / (std::sqrt(vhat) + opt.epsilon);
      if (opt.kind == OptimizerKind::adamw) {
        update += opt.weight_decay * params[i];
      }
      params[i] -= static_cast<float>(opt.learning_rate * update);
    }
  }
};

TinyEncoder::TinyEncoder(const TinyEncoderConfig& config)
    : impl_(std::make_unique<Impl>(config)) {}
TinyEncoder::~TinyEncoder() = default;
TinyEncoder::TinyEncoder(TinyEncoder&&) noexcept = default;
TinyEncoder& TinyEncoder::operator=(TinyEncoder&&) noexcept = default;

const TinyEncoderConfig& TinyEncoder::config() const { return impl_->cfg; }
int TinyEncoder::vocab_size() const { return impl_->cfg.vocab_size; }
int TinyEncoder::max_sequence_length() const { return impl_->cfg.max_seq_len; }

std::array<double, kNumLabels> TinyEncoder::classify(
    const std::vector<int>& tokens) const {
  const Impl::Cache cache = impl_->forward(tokens);
  std::vector<double> z =
      impl_->head_logits(cache, impl_->cls_w, impl_->cls_b, kNumLabels);
  softmax_inplace(z);
  std::array<double, kNumLabels> out{};
  std::copy(z.begin(), z.end(), out.begin());
  return out;
}

std::vector<std::vector<double>> TinyEncoder::fill_mask(
    const std::vector<int>& tokens, const std::vector<int>& positions) const {
  const Impl::Cache cache = impl_->forward(tokens);
  std::vector<std::vector<double>> out;
  out.reserve(positions.size());
  for (int pos : positions) {
    if (pos < 0 || pos >= cache.T ||
        tokens[static_cast<std::size_t>(pos)] != Tokenizer::kMask) {
      throw ValidationError("fill_mask position " + std::to_string(pos) +
                            " does not hold a [MASK] token");
    }
    std::vector<double> z = impl_->mlm_logits(cache, pos);
    softmax_inplace(z);
    out.push_back(std::move(z));
  }
  return out;
}

std::array<double, 2> TinyEncoder::pair_classify(const std::vector<int>& tokens) const {
  const Impl::Cache cache = impl_->forward(tokens);
  std::vector<double> z = impl_->head_logits(cache, impl_->pair_w, impl_->pair_b, 2);
  softmax_inplace(z);
  return {z[0], z[1]};
}

double TinyEncoder::instance_loss(const FormulationInput& input,
                                  const LossSpec& spec) const {
  return impl_->instance_pass(input, spec, false, 0.0);
}

double TinyEncoder::train_batch(const std::vector<const FormulationInput*>& batch,
                                const LossSpec& spec, const OptimizerSettings& opt) {
  if (batch.empty()) throw TrainingError("empty training batch");
  std::fill(impl_->grads.begin(), impl_->grads.end(), 0.0F);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const FormulationInput* input : batch) {
    total += impl_->instance_pass(*input, spec, true, inv_b);
  }
  total *= inv_b;
  if (!std::isfinite(total)) {
    throw TrainingError("training loss diverged (non-finite); lower the learning rate");
  }
  impl_->adam_step(opt);
  return total;
}

void TinyEncoder::reset_optimizer_state() {
  std::fill(impl_->adam_m.begin(), impl_->adam_m.end(), 0.0F);
  std::fill(impl_->adam_v.begin(), impl_->adam_v.end(), 0.0F);
  impl_->step_count = 0;
}

std::vector<float> TinyEncoder::snapshot_weights() const { return impl_->params; }

void TinyEncoder::restore_weights(const std::vector<float>& weights) {
  if (weights.size() != impl_->params.size()) {
    throw ValidationError("weight snapshot size mismatch");
  }
  impl_->params = weights;
}

std::vector<double> TinyEncoder::loss_gradient(
    const std::vector<const FormulationInput*>& batch, const LossSpec& spec) const {
  std::fill(impl_->grads.begin(), impl_->grads.end(), 0.0F);
  for (const FormulationInput* input : batch) {
    impl_->instance_pass(*input, spec, true, 1.0);
  }
  return {impl_->grads.begin(), impl_->grads.end()};
}

double TinyEncoder::batch_loss(const std::vector<const FormulationInput*>& batch,
                               const LossSpec& spec) const {
  double total = 0.0;
  for (const FormulationInput* input : batch) {
    total += impl_->instance_pass(*input, spec, false, 0.0);
  }
  return total;
}

std::size_t TinyEncoder::parameter_count() const { return impl_->total; }

float TinyEncoder::get_parameter(std::size_t index) const {
  return impl_->params.at(index);
}

void TinyEncoder::set_parameter(std::size_t index, float value) {
  impl_->params.at(index) = value;
}

void TinyEncoder::save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  const std::int64_t fields[7] = {impl_->cfg.vocab_size,  impl_->cfg.max_seq_len,
                                  impl_->cfg.d_model,     impl_->cfg.n_heads,
                                  impl_->cfg.n_layers,    impl_->cfg.d_ffn,
                                  static_cast<std::int64_t>(impl_->cfg.init_seed)};
  out.write(reinterpret_cast<const char*>(fields), sizeof(fields));
  const auto count = static_cast<std::uint64_t>(impl_->params.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  out.write(reinterpret_cast<const char*>(impl_->params.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
  if (!out) throw ValidationError("failed to write model checkpoint");
}

TinyEncoder TinyEncoder::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a tiny-encoder checkpoint");
  }
  std::int64_t fields[7];
  in.read(reinterpret_cast<char*>(fields), sizeof(fields));
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in) throw ValidationError("truncated model checkpoint");
  TinyEncoderConfig cfg;
  cfg.vocab_size = static_cast<int>(fields[0]);
  cfg.max_seq_len = static_cast<int>(fields[1]);
  cfg.d_model = static_cast<int>(fields[2]);
  cfg.n_heads = static_cast<int>(fields[3]);
  cfg.n_layers = static_cast<int>(fields[4]);
  cfg.d_ffn = static_cast<int>(fields[5]);
  cfg.init_seed = static_cast<std::uint64_t>(fields[6]);
  TinyEncoder model(cfg);
  if (count != model.impl_->params.size()) {
    throw ValidationError("model checkpoint parameter count mismatch");
  }
  in.read(reinterpret_cast<char*>(model.impl_->params.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw ValidationError("truncated model checkpoint");
  return model;
}

}  // namespace linmark
