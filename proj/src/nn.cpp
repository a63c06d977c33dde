#include "tegru/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace tegru::nn {

Tensor init_weight(int fan_in, int fan_out, Rng& rng) {
  Scalar bound = static_cast<Scalar>(std::sqrt(1.0 / fan_in));
  return Tensor::uniform({fan_in, fan_out}, -bound, bound, rng)
      .set_requires_grad(true);
}

namespace {

Tensor init_bias(int d, Scalar fill = 0) {
  return Tensor::full({d}, fill).set_requires_grad(true);
}

void push(NamedTensors& out, const std::string& name, const Tensor& t) {
  out.emplace_back(name, t);
}

}  // namespace

// ---- multi-head self-attention ------------------------------------------

MultiHeadAttentionParams MultiHeadAttentionParams::init(int d_model,
                                                        int n_heads,
                                                        Rng& rng) {
  if (n_heads < 1 || d_model < 1 || d_model % n_heads != 0) {
    throw std::invalid_argument(
        "attention: d_model " + std::to_string(d_model) +
        " must be a positive multiple of n_heads " + std::to_string(n_heads));
  }
  MultiHeadAttentionParams p;
  p.d_model = d_model;
  p.n_heads = n_heads;
  int dk = p.d_k();
  for (int h = 0; h < n_heads; ++h) {
    p.w_q.push_back(init_weight(d_model, dk, rng));
    p.w_k.push_back(init_weight(d_model, dk, rng));
    p.w_v.push_back(init_weight(d_model, dk, rng));
  }
  p.w_out = init_weight(n_heads * dk, d_model, rng);
  return p;
}

MultiHeadAttentionParams MultiHeadAttentionParams::identity(int d_model) {
  MultiHeadAttentionParams p;
  p.d_model = d_model;
  p.n_heads = 1;
  p.identity_projections = true;
  return p;
}

void MultiHeadAttentionParams::collect(const std::string& prefix,
                                       NamedTensors& out) const {
  if (identity_projections) return;
  for (int h = 0; h < n_heads; ++h) {
    std::string hs = std::to_string(h);
    push(out, prefix + ".wq" + hs, w_q[static_cast<std::size_t>(h)]);
    push(out, prefix + ".wk" + hs, w_k[static_cast<std::size_t>(h)]);
    push(out, prefix + ".wv" + hs, w_v[static_cast<std::size_t>(h)]);
  }
  push(out, prefix + ".wo", w_out);
}

namespace {

// Additive mask: -1e30 on every PAD key column, zero elsewhere. Large enough
// that the masked weight underflows to exactly zero after max subtraction.
Tensor build_score_mask(const std::vector<unsigned char>& pad, int b, int n) {
  std::vector<Scalar> m(static_cast<std::size_t>(b) *
                            static_cast<std::size_t>(n) *
                            static_cast<std::size_t>(n),
                        Scalar(0));
  for (int bi = 0; bi < b; ++bi) {
    for (int j = 0; j < n; ++j) {
      if (!pad[static_cast<std::size_t>(bi) * static_cast<std::size_t>(n) +
               static_cast<std::size_t>(j)]) {
        continue;
      }
      for (int i = 0; i < n; ++i) {
        m[(static_cast<std::size_t>(bi) * static_cast<std::size_t>(n) +
           static_cast<std::size_t>(i)) *
              static_cast<std::size_t>(n) +
          static_cast<std::size_t>(j)] = Scalar(-1e30);
      }
    }
  }
  return Tensor::from_values({b, n, n}, std::move(m));
}

}  // namespace

Tensor multi_head_self_attention(const Tensor& x,
                                 const MultiHeadAttentionParams& p,
                                 const std::vector<unsigned char>* pad_mask,
                                 std::vector<Tensor>* attention_out) {
  if (x.rank() != 3) {
    throw std::invalid_argument("attention: input must be [batch, n, d], got " +
                                shape_str(x.shape()));
  }
  if (x.dim(2) != p.d_model) {
    throw std::invalid_argument("attention: input feature dim " +
                                std::to_string(x.dim(2)) +
                                " does not match parameters (d_model " +
                                std::to_string(p.d_model) + ")");
  }
  int b = x.dim(0), n = x.dim(1);
  if (pad_mask && pad_mask->size() != static_cast<std::size_t>(b) *
                                          static_cast<std::size_t>(n)) {
    throw std::invalid_argument("attention: pad mask size mismatch");
  }

  Tensor mask;
  if (pad_mask) mask = build_score_mask(*pad_mask, b, n);

  int dk = p.identity_projections ? p.d_model : p.d_k();
  Scalar inv_sqrt_dk = static_cast<Scalar>(1.0 / std::sqrt(double(dk)));

  std::vector<Tensor> heads;
  for (int h = 0; h < p.n_heads; ++h) {
    Tensor q, k, v;
    if (p.identity_projections) {
      q = k = v = x;
    } else {
      std::size_t uh = static_cast<std::size_t>(h);
      q = matmul(x, p.w_q[uh]);
      k = matmul(x, p.w_k[uh]);
      v = matmul(x, p.w_v[uh]);
    }
    Tensor scores = scale(matmul(q, transpose_last_two(k)), inv_sqrt_dk);
    if (mask.defined()) scores = add(scores, mask);
    Tensor att = softmax(scores, -1);
    if (attention_out) attention_out->push_back(att);
    heads.push_back(matmul(att, v));
  }
  Tensor merged = p.n_heads == 1 ? heads[0] : concat_last_axis(heads);
  if (p.identity_projections) return merged;
  return matmul(merged, p.w_out);
}

// ---- encoder block --------------------------------------------------------

LayerNormParams LayerNormParams::init(int d) {
  LayerNormParams p;
  p.gain = Tensor::full({d}, 1).set_requires_grad(true);
  p.bias = init_bias(d);
  return p;
}

void LayerNormParams::collect(const std::string& prefix,
                              NamedTensors& out) const {
  push(out, prefix + ".gain", gain);
  push(out, prefix + ".bias", bias);
}

EncoderBlockParams EncoderBlockParams::init(int d_model, int n_heads, int d_ff,
                                            Scalar dropout, Rng& rng) {
  if (d_ff < 1) {
    throw std::invalid_argument("encoder: d_ff must be positive");
  }
  if (dropout < Scalar(0) || dropout >= Scalar(1)) {
    throw std::invalid_argument("encoder: dropout must lie in [0, 1)");
  }
  EncoderBlockParams p;
  p.mha = MultiHeadAttentionParams::init(d_model, n_heads, rng);
  p.norm_att = LayerNormParams::init(d_model);
  p.norm_ffn = LayerNormParams::init(d_model);
  p.ffn_w1 = init_weight(d_model, d_ff, rng);
  p.ffn_b1 = init_bias(d_ff);
  p.ffn_w2 = init_weight(d_ff, d_model, rng);
  p.ffn_b2 = init_bias(d_model);
  p.dropout = dropout;
  return p;
}

void EncoderBlockParams::collect(const std::string& prefix,
                                 NamedTensors& out) const {
  mha.collect(prefix + ".mha", out);
  norm_att.collect(prefix + ".norm_att", out);
  norm_ffn.collect(prefix + ".norm_ffn", out);
  push(out, prefix + ".ffn_w1", ffn_w1);
  push(out, prefix + ".ffn_b1", ffn_b1);
  push(out, prefix + ".ffn_w2", ffn_w2);
  push(out, prefix + ".ffn_b2", ffn_b2);
}

Tensor encoder_block(const Tensor& x, const EncoderBlockParams& p,
                     bool training, Rng* rng,
                     const std::vector<unsigned char>* pad_mask) {
  Tensor att = multi_head_self_attention(x, p.mha, pad_mask);
  att = dropout(att, p.dropout, training, rng);
  Tensor residual =
      layernorm(add(att, x), p.norm_att.gain, p.norm_att.bias, kLayerNormEps);
  Tensor ff = add_rowwise(matmul(relu(add_rowwise(matmul(residual, p.ffn_w1),
                                                  p.ffn_b1)),
                                 p.ffn_w2),
                          p.ffn_b2);
  ff = dropout(ff, p.dropout, training, rng);
  return layernorm(add(residual, ff), p.norm_ffn.gain, p.norm_ffn.bias,
                   kLayerNormEps);
}

// ---- recurrent cells --------------------------------------------------------

RnnCell RnnCell::init(int d_in, int d_h, Rng& rng) {
  RnnCell c;
  c.w = init_weight(d_in, d_h, rng);
  c.u = init_weight(d_h, d_h, rng);
  c.b = init_bias(d_h);
  return c;
}

void RnnCell::collect(const std::string& prefix, NamedTensors& out) const {
  push(out, prefix + ".w", w);
  push(out, prefix + ".u", u);
  push(out, prefix + ".b", b);
}

LstmCell LstmCell::init(int d_in, int d_h, Rng& rng) {
  LstmCell c;
  c.w_i = init_weight(d_in, d_h, rng);
  c.u_i = init_weight(d_h, d_h, rng);
  c.b_i = init_bias(d_h);
  c.w_f = init_weight(d_in, d_h, rng);
  c.u_f = init_weight(d_h, d_h, rng);
  c.b_f = init_bias(d_h, 1);  // start remembering
  c.w_o = init_weight(d_in, d_h, rng);
  c.u_o = init_weight(d_h, d_h, rng);
  c.b_o = init_bias(d_h);
  c.w_g = init_weight(d_in, d_h, rng);
  c.u_g = init_weight(d_h, d_h, rng);
  c.b_g = init_bias(d_h);
  return c;
}

void LstmCell::collect(const std::string& prefix, NamedTensors& out) const {
  push(out, prefix + ".w_i", w_i);
  push(out, prefix + ".u_i", u_i);
  push(out, prefix + ".b_i", b_i);
  push(out, prefix + ".w_f", w_f);
  push(out, prefix + ".u_f", u_f);
  push(out, prefix + ".b_f", b_f);
  push(out, prefix + ".w_o", w_o);
  push(out, prefix + ".u_o", u_o);
  push(out, prefix + ".b_o", b_o);
  push(out, prefix + ".w_g", w_g);
  push(out, prefix + ".u_g", u_g);
  push(out, prefix + ".b_g", b_g);
}

GruCell GruCell::init(int d_in, int d_h, bool with_bias, Rng& rng) {
  GruCell c;
  c.has_bias = with_bias;
  c.w_z = init_weight(d_in, d_h, rng);
  c.w_r = init_weight(d_in, d_h, rng);
  c.w_h = init_weight(d_in, d_h, rng);
  c.u_z = init_weight(d_h, d_h, rng);
  c.u_r = init_weight(d_h, d_h, rng);
  c.u_h = init_weight(d_h, d_h, rng);
  if (with_bias) {
    c.b_z = init_bias(d_h);
    c.b_r = init_bias(d_h);
    c.b_h = init_bias(d_h);
  }
  return c;
}

void GruCell::collect(const std::string& prefix, NamedTensors& out) const {
  push(out, prefix + ".w_z", w_z);
  push(out, prefix + ".w_r", w_r);
  push(out, prefix + ".w_h", w_h);
  push(out, prefix + ".u_z", u_z);
  push(out, prefix + ".u_r", u_r);
  push(out, prefix + ".u_h", u_h);
  if (has_bias) {
    push(out, prefix + ".b_z", b_z);
    push(out, prefix + ".b_r", b_r);
    push(out, prefix + ".b_h", b_h);
  }
}

Tensor rnn_step(const Tensor& x_t, const Tensor& h_prev, const RnnCell& p) {
  return tegru::tanh(
      add_rowwise(add(matmul(x_t, p.w), matmul(h_prev, p.u)), p.b));
}

LstmState lstm_step(const Tensor& x_t, const LstmState& prev,
                    const LstmCell& p) {
  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
    return add_rowwise(add(matmul(x_t, w), matmul(prev.h, u)), b);
  };
  Tensor i = sigmoid(gate(p.w_i, p.u_i, p.b_i));
  Tensor f = sigmoid(gate(p.w_f, p.u_f, p.b_f));
  Tensor o = sigmoid(gate(p.w_o, p.u_o, p.b_o));
  Tensor g = tegru::tanh(gate(p.w_g, p.u_g, p.b_g));
  LstmState next;
  next.c = add(mul(f, prev.c), mul(i, g));
  next.h = mul(o, tegru::tanh(next.c));
  return next;
}

Tensor gru_step(const Tensor& x_t, const Tensor& h_prev, const GruCell& p,
                Tensor* update_gate, Tensor* reset_gate) {
  auto gate_pre = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
    Tensor pre = add(matmul(x_t, w), matmul(h_prev, u));
    return p.has_bias ? add_rowwise(pre, b) : pre;
  };
  Tensor u_t = sigmoid(gate_pre(p.w_z, p.u_z, p.b_z));
  Tensor r_t = sigmoid(gate_pre(p.w_r, p.u_r, p.b_r));
  if (update_gate) *update_gate = u_t;
  if (reset_gate) *reset_gate = r_t;
  Tensor cand_pre = add(matmul(x_t, p.w_h), matmul(mul(h_prev, r_t), p.u_h));
  if (p.has_bias) cand_pre = add_rowwise(cand_pre, p.b_h);
  Tensor cand = tegru::tanh(cand_pre);
  Tensor ones = Tensor::full(u_t.shape(), 1);
  return add(mul(sub(ones, u_t), h_prev), mul(u_t, cand));
}

RecurrentParams RecurrentParams::init(CellKind kind, bool bidirectional,
                                      int d_in, int d_hidden, bool gru_bias,
                                      Rng& rng) {
  if (d_hidden < 1 || d_in < 1) {
    throw std::invalid_argument("recurrent: extents must be positive");
  }
  if (bidirectional && d_hidden % 2 != 0) {
    throw std::invalid_argument(
        "recurrent: bidirectional hidden width must be even, got " +
        std::to_string(d_hidden));
  }
  RecurrentParams p;
  p.kind = kind;
  p.bidirectional = bidirectional;
  p.d_in = d_in;
  p.d_hidden = d_hidden;
  int dir = bidirectional ? d_hidden / 2 : d_hidden;
  auto make = [&]() -> CellParams {
    switch (kind) {
      case CellKind::RNN:
        return RnnCell::init(d_in, dir, rng);
      case CellKind::LSTM:
        return LstmCell::init(d_in, dir, rng);
      case CellKind::GRU:
        return GruCell::init(d_in, dir, gru_bias, rng);
    }
    throw std::logic_error("unreachable cell kind");
  };
  p.forward = make();
  if (bidirectional) p.backward = make();
  return p;
}

void RecurrentParams::collect(const std::string& prefix,
                              NamedTensors& out) const {
  auto visit_cell = [&](const CellParams& cell, const std::string& pfx) {
    std::visit([&](const auto& c) { c.collect(pfx, out); }, cell);
  };
  visit_cell(forward, prefix + ".fwd");
  if (bidirectional) visit_cell(backward, prefix + ".bwd");
}

namespace {

// One full pass over the sequence; `reverse` walks n-1 .. 0. Returns the
// per-position states in input order plus the last state computed.
struct ScanOut {
  std::vector<Tensor> states;
  Tensor last;
};

ScanOut scan(const Tensor& x, const CellParams& cell, int dir_hidden,
             bool reverse) {
  int b = x.dim(0), n = x.dim(1);
  ScanOut out;
  out.states.resize(static_cast<std::size_t>(n));
  Tensor h = Tensor::zeros({b, dir_hidden});
  LstmState lstm{h, Tensor::zeros({b, dir_hidden})};
  for (int step = 0; step < n; ++step) {
    int t = reverse ? n - 1 - step : step;
    Tensor x_t = select_axis1(x, t);
    if (std::holds_alternative<RnnCell>(cell)) {
      h = rnn_step(x_t, h, std::get<RnnCell>(cell));
    } else if (std::holds_alternative<LstmCell>(cell)) {
      lstm = lstm_step(x_t, lstm, std::get<LstmCell>(cell));
      h = lstm.h;
    } else {
      h = gru_step(x_t, h, std::get<GruCell>(cell));
    }
    out.states[static_cast<std::size_t>(t)] = h;
  }
  out.last = h;
  return out;
}

}  // namespace

RecurrentOut run_recurrent(const Tensor& x, const RecurrentParams& p) {
  if (x.rank() != 3) {
    throw std::invalid_argument("run_recurrent: input must be [b, n, d], got " +
                                shape_str(x.shape()));
  }
  if (x.dim(1) < 1) {
    throw std::invalid_argument("run_recurrent: empty sequence");
  }
  if (x.dim(2) != p.d_in) {
    throw std::invalid_argument("run_recurrent: input width " +
                                std::to_string(x.dim(2)) +
                                " does not match parameters (" +
                                std::to_string(p.d_in) + ")");
  }
  int n = x.dim(1);
  RecurrentOut out;
  if (!p.bidirectional) {
    ScanOut fwd = scan(x, p.forward, p.d_hidden, false);
    out.states = stack_axis1(fwd.states);
    out.final = fwd.last;
    return out;
  }
  int dir = p.d_hidden / 2;
  ScanOut fwd = scan(x, p.forward, dir, false);
  ScanOut bwd = scan(x, p.backward, dir, true);
  std::vector<Tensor> joined(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    std::size_t ut = static_cast<std::size_t>(t);
    joined[ut] = concat_last_axis({fwd.states[ut], bwd.states[ut]});
  }
  out.states = stack_axis1(joined);
  // backward scan's last state is the one holding position 0
  out.final = concat_last_axis({fwd.last, bwd.last});
  return out;
}

// ---- attention pooling --------------------------------------------------------

AttentionPoolParams AttentionPoolParams::init(int d, Rng& rng) {
  AttentionPoolParams p;
  p.w = init_weight(d, d, rng);
  Scalar bound = static_cast<Scalar>(std::sqrt(1.0 / d));
  p.v = Tensor::uniform({d}, -bound, bound, rng).set_requires_grad(true);
  return p;
}

void AttentionPoolParams::collect(const std::string& prefix,
                                  NamedTensors& out) const {
  push(out, prefix + ".w", w);
  push(out, prefix + ".v", v);
}

Tensor attention_pool(const Tensor& states, const AttentionPoolParams& p,
                      Tensor* weights_out) {
  if (states.rank() != 3) {
    throw std::invalid_argument("attention_pool: input must be [b, n, d], got " +
                                shape_str(states.shape()));
  }
  int b = states.dim(0), d = states.dim(2);
  if (p.w.dim(0) != d) {
    throw std::invalid_argument("attention_pool: parameter width " +
                                std::to_string(p.w.dim(0)) +
                                " does not match states " +
                                std::to_string(d));
  }
  Tensor scores =
      matmul(tegru::tanh(matmul(states, p.w)), reshape(p.v, {d, 1}));
  Tensor weights = softmax(scores, 1);  // over positions, shape [b, n, 1]
  if (weights_out) *weights_out = weights;
  Tensor pooled = matmul(transpose_last_two(weights), states);  // [b, 1, d]
  return reshape(pooled, {b, d});
}

// ---- classifier head ------------------------------------------------------------

ClassifyHeadParams ClassifyHeadParams::init(int d, Rng& rng) {
  ClassifyHeadParams p;
  p.w = init_weight(d, 2, rng);
  p.b = init_bias(2);
  return p;
}

void ClassifyHeadParams::collect(const std::string& prefix,
                                 NamedTensors& out) const {
  push(out, prefix + ".w", w);
  push(out, prefix + ".b", b);
}

Tensor classify_head(const Tensor& h, const ClassifyHeadParams& p) {
  return log_softmax(add_rowwise(matmul(h, p.w), p.b), -1);
}

// ---- dropout ----------------------------------------------------------------

Tensor dropout(const Tensor& x, Scalar p, bool training, Rng* rng) {
  if (p < Scalar(0) || p >= Scalar(1)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
  }
  if (!training || p == Scalar(0)) return x;
  if (!rng) {
    throw std::invalid_argument("dropout in training mode needs a generator");
  }
  Tensor mask = Tensor::bernoulli_mask(x.shape(), static_cast<double>(p), *rng);
  return mul(x, scale(mask, Scalar(1) / (Scalar(1) - p)));
}

}  // namespace tegru::nn
