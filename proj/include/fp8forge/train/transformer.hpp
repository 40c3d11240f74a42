// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only stack of pre-LN transformer blocks for next-token prediction.
//
//   h   = E[tok] + P[pos]
//   per block:
//     a   = LN1(h);  q, k, v = a Wq^T, a Wk^T, a Wv^T
//     h  += concat_heads(softmax_causal(q_h k_h^T / sqrt(d_head)) v_h) Wo^T
//     a   = LN2(h)
//     h  += gelu(a W1^T + b1) W2^T + b2
//   logits = LNf(h) Whead^T,  loss = mean cross-entropy
//
// Q/K/V/O, both feed-forward projections and the head are quantized linears.
// The two attention products (scores and probabilities times values) use raw
// 64-bit operands unless PipelineConfig::quantize_attention_scores is set; in
// that case their forward operands are quantized with the activation spec and
// their gradients pass straight through the dequantized operands.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fp8forge/errors.hpp"
#include "fp8forge/pipeline_config.hpp"
#include "fp8forge/scaled_gemm.hpp"
#include "fp8forge/tensor.hpp"
#include "fp8forge/train/model.hpp"
#include "fp8forge/train/ops.hpp"
#include "fp8forge/train/optimizer.hpp"

namespace fp8forge::train {

struct TransformerSpec {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t n_layers = 2;
  std::size_t vocab = 32;
  std::size_t seq_len = 16;

  std::size_t d_head() const { return d_model / n_heads; }

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_ff == 0 || vocab == 0 || seq_len == 0) {
      throw InvalidArgumentError("transformer: dimensions must be positive");
    }
    if (d_model % n_heads != 0) throw InvalidArgumentError("transformer: d_model must be divisible by n_heads");
  }
};

// `batch` sequences of seq_len + 1 tokens each, stored back to back. Position
// t predicts token t + 1.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> tokens;

  std::size_t at(std::size_t b, std::size_t t) const { return tokens[b * (seq_len + 1) + t]; }
};

struct AttentionHeadCache {
  Tensor p;       // softmax output
  Tensor q_used;  // operands as seen by the two products (dequantized if quantized)
  Tensor k_used;
  Tensor p_used;
  Tensor v_used;
};

struct BlockCache {
  LayerNormCache ln1;
  LinearForward q, k, v, o;
  std::vector<AttentionHeadCache> heads;
  LayerNormCache ln2;
  LinearForward ff1, ff2;
  Tensor pre1;
};

struct TransformerCache {
  CacheStamp stamp;
  std::size_t batch = 0;
  std::vector<std::size_t> input_tokens;
  std::vector<BlockCache> blocks;
  LayerNormCache lnf;
  LinearForward head;
  Tensor dlogits;
};

class Transformer {
 public:
  using Batch = TokenBatch;
  using Cache = TransformerCache;

  static constexpr std::size_t kPerBlock = 12;

  explicit Transformer(TransformerSpec spec) : spec_(spec) { spec_.validate(); }

  const TransformerSpec& spec() const { return spec_; }

  std::size_t block_base(std::size_t l) const { return 2 + l * kPerBlock; }
  std::size_t final_base() const { return 2 + spec_.n_layers * kPerBlock; }

  std::vector<ParamInfo> params() const {
    const std::size_t d = spec_.d_model, f = spec_.d_ff;
    std::vector<ParamInfo> p{{"tok_emb", spec_.vocab, d, false}, {"pos_emb", spec_.seq_len, d, false}};
    for (std::size_t l = 0; l < spec_.n_layers; ++l) {
      const std::string pre = "block" + std::to_string(l) + ".";
      p.push_back({pre + "ln1.gain", 1, d, false});
      p.push_back({pre + "ln1.bias", 1, d, false});
      p.push_back({pre + "wq", d, d, true});
      p.push_back({pre + "wk", d, d, true});
      p.push_back({pre + "wv", d, d, true});
      p.push_back({pre + "wo", d, d, true});
      p.push_back({pre + "ln2.gain", 1, d, false});
      p.push_back({pre + "ln2.bias", 1, d, false});
      p.push_back({pre + "w1", f, d, true});
      p.push_back({pre + "b1", 1, f, false});
      p.push_back({pre + "w2", d, f, true});
      p.push_back({pre + "b2", 1, d, false});
    }
    p.push_back({"lnf.gain", 1, d, false});
    p.push_back({"lnf.bias", 1, d, false});
    p.push_back({"w_head", spec_.vocab, d, true});
    return p;
  }

  MasterState init(std::uint64_t seed) const {
    Rng rng(seed);
    const auto info = params();
    std::vector<Tensor> w;
    for (const auto& pi : info) w.emplace_back(pi.rows, pi.cols);
    const double d = static_cast<double>(spec_.d_model);
    const double residual = 1.0 / std::sqrt(2.0 * static_cast<double>(spec_.n_layers));
    init_normal(w[0], 1.0, rng);
    init_normal(w[1], 0.1, rng);
    for (std::size_t l = 0; l < spec_.n_layers; ++l) {
      const std::size_t b = block_base(l);
      w[b] = Tensor::filled(1, spec_.d_model, 1.0);
      for (std::size_t i = 2; i <= 4; ++i) init_normal(w[b + i], 1.0 / std::sqrt(d), rng);
      init_normal(w[b + 5], residual / std::sqrt(d), rng);
      w[b + 6] = Tensor::filled(1, spec_.d_model, 1.0);
      init_normal(w[b + 8], 1.0 / std::sqrt(d), rng);
      init_normal(w[b + 10], residual / std::sqrt(static_cast<double>(spec_.d_ff)), rng);
    }
    w[final_base()] = Tensor::filled(1, spec_.d_model, 1.0);
    init_normal(w[final_base() + 2], 1.0 / std::sqrt(d), rng);
    return MasterState(info, std::move(w));
  }

  ForwardResult<TransformerCache> forward(const MasterState& s, const TokenBatch& batch,
                                          const PipelineConfig& cfg) const {
    check_batch(batch);
    if (s.weights.size() != final_base() + 3) throw ShapeMismatchError("transformer: state has the wrong parameter count");
    return guarded_forward(s, [&] { return forward_impl(s, batch, cfg); });
  }

  Gradients backward(const MasterState& s, const TransformerCache& c, const PipelineConfig& cfg) const {
    check_cache(c.stamp, s, "transformer");
    if (c.blocks.size() != spec_.n_layers) throw StaleCacheError("transformer: cache is from a different model");
    const auto& w = s.weights;
    const std::size_t T = spec_.seq_len, dh = spec_.d_head();
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Gradients g;
    for (const auto& pi : s.info) g.emplace_back(pi.rows, pi.cols);

    const std::size_t fb = final_base();
    LinearGrads hg = linear_backward(c.dlogits, c.head, cfg);
    g[fb + 2] = std::move(hg.dw);
    LayerNormGrads lnf = layernorm_backward(hg.dx, c.lnf, w[fb]);
    g[fb] = std::move(lnf.dgain);
    g[fb + 1] = std::move(lnf.dbias);
    Tensor dh_res = std::move(lnf.dx);

    for (std::size_t l = spec_.n_layers; l-- > 0;) {
      const std::size_t b = block_base(l);
      const BlockCache& bc = c.blocks[l];

      // Feed-forward branch.
      g[b + 11] = column_sums(dh_res);
      LinearGrads f2 = linear_backward(dh_res, bc.ff2, cfg);
      g[b + 10] = std::move(f2.dw);
      const Tensor dz1 = gelu_backward(bc.pre1, f2.dx);
      g[b + 9] = column_sums(dz1);
      LinearGrads f1 = linear_backward(dz1, bc.ff1, cfg);
      g[b + 8] = std::move(f1.dw);
      LayerNormGrads ln2 = layernorm_backward(f1.dx, bc.ln2, w[b + 6]);
      g[b + 6] = std::move(ln2.dgain);
      g[b + 7] = std::move(ln2.dbias);
      add_into(dh_res, ln2.dx);

      // Attention branch.
      LinearGrads og = linear_backward(dh_res, bc.o, cfg);
      g[b + 5] = std::move(og.dw);
      const Tensor& d_attn = og.dx;
      Tensor dq(d_attn.rows(), spec_.d_model), dk(dq.rows(), dq.cols()), dv(dq.rows(), dq.cols());
      for (std::size_t seq = 0; seq < c.batch; ++seq) {
        for (std::size_t hh = 0; hh < spec_.n_heads; ++hh) {
          const AttentionHeadCache& hc = bc.heads[seq * spec_.n_heads + hh];
          const Tensor d_out = slice(d_attn, seq * T, T, hh * dh, dh);
          const Tensor dp = tensor_matmul_ref(d_out, transpose(hc.v_used));
          add_slice(dv, seq * T, hh * dh, tensor_matmul_ref(transpose(hc.p_used), d_out));
          const Tensor ds = score_scale * softmax_backward(hc.p, dp);
          add_slice(dq, seq * T, hh * dh, tensor_matmul_ref(ds, hc.k_used));
          add_slice(dk, seq * T, hh * dh, tensor_matmul_ref(transpose(ds), hc.q_used));
        }
      }
      LinearGrads qg = linear_backward(dq, bc.q, cfg);
      LinearGrads kg = linear_backward(dk, bc.k, cfg);
      LinearGrads vg = linear_backward(dv, bc.v, cfg);
      g[b + 2] = std::move(qg.dw);
      g[b + 3] = std::move(kg.dw);
      g[b + 4] = std::move(vg.dw);
      Tensor da1 = std::move(qg.dx);
      add_into(da1, kg.dx);
      add_into(da1, vg.dx);
      LayerNormGrads ln1 = layernorm_backward(da1, bc.ln1, w[b]);
      g[b] = std::move(ln1.dgain);
      g[b + 1] = std::move(ln1.dbias);
      add_into(dh_res, ln1.dx);
    }

    for (std::size_t r = 0; r < dh_res.rows(); ++r) {
      const std::size_t tok = c.input_tokens[r];
      const std::size_t pos = r % T;
      for (std::size_t j = 0; j < spec_.d_model; ++j) {
        g[0](tok, j) += dh_res(r, j);
        g[1](pos, j) += dh_res(r, j);
      }
    }
    return g;
  }

 private:
  void check_batch(const TokenBatch& batch) const {
    if (batch.seq_len != spec_.seq_len || batch.batch == 0 || batch.tokens.size() != batch.batch * (spec_.seq_len + 1)) {
      throw ShapeMismatchError("transformer: batch shape does not match the model");
    }
    for (auto t : batch.tokens) {
      if (t >= spec_.vocab) throw InvalidArgumentError("transformer: token id out of range");
    }
  }

  ForwardResult<TransformerCache> forward_impl(const MasterState& s, const TokenBatch& batch,
                                               const PipelineConfig& cfg) const {
    const auto& w = s.weights;
    const std::size_t T = spec_.seq_len, d = spec_.d_model, dh = spec_.d_head();
    const std::size_t n = batch.batch * T;
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool quantize_scores = cfg.quantization_enabled && cfg.quantize_attention_scores;
    const ScaleSpec act_spec = cfg.effective_activation_spec();

    ForwardResult<TransformerCache> out;
    TransformerCache& c = out.cache;
    c.stamp = stamp_of(s);
    c.batch = batch.batch;
    std::vector<std::size_t> targets(n);
    c.input_tokens.resize(n);
    Tensor h(n, d);
    for (std::size_t seq = 0; seq < batch.batch; ++seq) {
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t r = seq * T + t;
        c.input_tokens[r] = batch.at(seq, t);
        targets[r] = batch.at(seq, t + 1);
        for (std::size_t j = 0; j < d; ++j) h(r, j) = w[0](c.input_tokens[r], j) + w[1](t, j);
      }
    }

    for (std::size_t l = 0; l < spec_.n_layers; ++l) {
      const std::size_t b = block_base(l);
      BlockCache bc;
      const Tensor a1 = layernorm_forward(h, w[b], w[b + 1], bc.ln1);
      bc.q = linear_fprop(a1, w[b + 2], cfg);
      bc.k = linear_fprop(a1, w[b + 3], cfg);
      bc.v = linear_fprop(a1, w[b + 4], cfg);
      Tensor attn(n, d);
      for (std::size_t seq = 0; seq < batch.batch; ++seq) {
        for (std::size_t hh = 0; hh < spec_.n_heads; ++hh) {
          AttentionHeadCache hc;
          const auto op = [&](const Tensor& t) {
            return make_operand(t, act_spec, cfg.activation_format, TensorRole::kActivation, quantize_scores);
          };
          const Operand q_op = op(slice(bc.q.y, seq * T, T, hh * dh, dh));
          const Operand k_op = op(slice(bc.k.y, seq * T, T, hh * dh, dh));
          const Operand v_op = op(slice(bc.v.y, seq * T, T, hh * dh, dh));
          const Tensor scores = score_scale * operand_matmul(q_op, transpose(k_op));
          hc.p = causal_softmax(scores);
          const Operand p_op = op(hc.p);
          add_slice(attn, seq * T, hh * dh, operand_matmul(p_op, v_op));
          hc.q_used = materialize(q_op);
          hc.k_used = materialize(k_op);
          hc.v_used = materialize(v_op);
          hc.p_used = materialize(p_op);
          bc.heads.push_back(std::move(hc));
        }
      }
      bc.o = linear_fprop(attn, w[b + 5], cfg);
      add_into(h, bc.o.y);

      const Tensor a2 = layernorm_forward(h, w[b + 6], w[b + 7], bc.ln2);
      bc.ff1 = linear_fprop(a2, w[b + 8], cfg);
      bc.pre1 = bc.ff1.y;
      add_row_bias(bc.pre1, w[b + 9]);
      bc.ff2 = linear_fprop(gelu(bc.pre1), w[b + 10], cfg);
      Tensor f2 = bc.ff2.y;
      add_row_bias(f2, w[b + 11]);
      add_into(h, f2);
      c.blocks.push_back(std::move(bc));
    }

    const std::size_t fb = final_base();
    const Tensor hf = layernorm_forward(h, w[fb], w[fb + 1], c.lnf);
    c.head = linear_fprop(hf, w[fb + 2], cfg);
    auto lg = cross_entropy(c.head.y, targets);
    out.loss = lg.loss;
    c.dlogits = std::move(lg.grad);
    return out;
  }

  TransformerSpec spec_;
};

// Sequences from a first-order Markov chain over the vocabulary whose rows
// are softmax(sharpness * N(0, 1)), so each state has a few likely
// successors. The first token of each sequence is uniform.
struct MarkovTask {
  std::size_t vocab = 32;
  std::size_t seq_len = 16;
  std::size_t batch_size = 8;
  double sharpness = 3.0;
  std::uint64_t chain_seed = 11;

  std::vector<double> transition_cdf() const {
    Rng rng(chain_seed);
    std::vector<double> cdf(vocab * vocab);
    for (std::size_t i = 0; i < vocab; ++i) {
      std::vector<double> logits(vocab);
      double mx = -1e300;
      for (auto& x : logits) {
        x = sharpness * rng.normal();
        mx = std::fmax(mx, x);
      }
      double z = 0.0;
      for (auto& x : logits) z += (x = std::exp(x - mx));
      double acc = 0.0;
      for (std::size_t j = 0; j < vocab; ++j) cdf[i * vocab + j] = (acc += logits[j] / z);
      cdf[i * vocab + vocab - 1] = 1.0;
    }
    return cdf;
  }

  TokenBatch batch(std::size_t step, std::uint64_t data_seed) const {
    const auto cdf = transition_cdf();
    Rng rng(mix_seed(data_seed, step));
    TokenBatch out{batch_size, seq_len, {}};
    out.tokens.reserve(batch_size * (seq_len + 1));
    for (std::size_t b = 0; b < batch_size; ++b) {
      std::size_t cur = rng.below(vocab);
      out.tokens.push_back(cur);
      for (std::size_t t = 0; t < seq_len; ++t) {
        const double u = rng.uniform01();
        std::size_t next = 0;
        while (next + 1 < vocab && cdf[cur * vocab + next] <= u) ++next;
        cur = next;
        out.tokens.push_back(cur);
      }
    }
    return out;
  }
};

}  // namespace fp8forge::train
