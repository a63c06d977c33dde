#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tegru/tensor.hpp"

namespace tegru::nn {

inline constexpr Scalar kLayerNormEps = Scalar(1e-5);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in))
Tensor init_weight(int fan_in, int fan_out, Rng& rng);

// ---- multi-head self-attention ------------------------------------------

struct MultiHeadAttentionParams {
  int d_model = 0;
  int n_heads = 0;  // d_k = d_v = d_model / n_heads
  std::vector<Tensor> w_q, w_k, w_v;  // per head [d_model, d_k]
  Tensor w_out;                       // [n_heads * d_k, d_model]
  // Study mode: no learned projections, heads share the raw input. Only
  // coherent for a single head; never the default.
  bool identity_projections = false;

  static MultiHeadAttentionParams init(int d_model, int n_heads, Rng& rng);
  static MultiHeadAttentionParams identity(int d_model);
  int d_k() const { return d_model / n_heads; }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

// pad_mask, when given, flags PAD positions (one byte per [b, n] slot);
// masked keys get a -1e30 score so their softmax weight vanishes.
// attention_out, when given, receives each head's [b, n, n] weight matrix.
Tensor multi_head_self_attention(const Tensor& x,
                                 const MultiHeadAttentionParams& p,
                                 const std::vector<unsigned char>* pad_mask,
                                 std::vector<Tensor>* attention_out = nullptr);

// ---- encoder block --------------------------------------------------------

struct LayerNormParams {
  Tensor gain, bias;
  static LayerNormParams init(int d);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct EncoderBlockParams {
  MultiHeadAttentionParams mha;
  LayerNormParams norm_att, norm_ffn;
  Tensor ffn_w1, ffn_b1;  // [d_model, d_ff], [d_ff]
  Tensor ffn_w2, ffn_b2;  // [d_ff, d_model], [d_model]
  Scalar dropout = 0;

  static EncoderBlockParams init(int d_model, int n_heads, int d_ff,
                                 Scalar dropout, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

// norm(x + dropout(MHA(x))) -> norm(r + dropout(FFN(r))), FFN = relu-gated
// two-layer linear. With training=false dropout is the identity.
Tensor encoder_block(const Tensor& x, const EncoderBlockParams& p,
                     bool training, Rng* rng,
                     const std::vector<unsigned char>* pad_mask = nullptr);

// ---- recurrent cells --------------------------------------------------------

enum class CellKind { RNN, LSTM, GRU };

struct RnnCell {
  Tensor w, u, b;  // [d_in, d_h], [d_h, d_h], [d_h]
  static RnnCell init(int d_in, int d_h, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct LstmCell {
  Tensor w_i, u_i, b_i;
  Tensor w_f, u_f, b_f;  // forget bias starts at 1
  Tensor w_o, u_o, b_o;
  Tensor w_g, u_g, b_g;
  static LstmCell init(int d_in, int d_h, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct GruCell {
  Tensor w_z, w_r, w_h;  // [d_in, d_h]
  Tensor u_z, u_r, u_h;  // [d_h, d_h]
  Tensor b_z, b_r, b_h;  // optional, absent in the bias-free formulation
  bool has_bias = true;
  static GruCell init(int d_in, int d_h, bool with_bias, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

Tensor rnn_step(const Tensor& x_t, const Tensor& h_prev, const RnnCell& p);

struct LstmState {
  Tensor h, c;
};
LstmState lstm_step(const Tensor& x_t, const LstmState& prev,
                    const LstmCell& p);

// Update gate u, reset gate r, convex blend of previous state and tanh
// candidate. Gate tensors are exposed for callers that inspect them.
Tensor gru_step(const Tensor& x_t, const Tensor& h_prev, const GruCell& p,
                Tensor* update_gate = nullptr, Tensor* reset_gate = nullptr);

using CellParams = std::variant<RnnCell, LstmCell, GruCell>;

struct RecurrentParams {
  CellKind kind = CellKind::GRU;
  bool bidirectional = false;
  int d_in = 0;
  int d_hidden = 0;  // total width; each direction gets half when bidirectional
  CellParams forward;
  CellParams backward;  // engaged only when bidirectional

  static RecurrentParams init(CellKind kind, bool bidirectional, int d_in,
                              int d_hidden, bool gru_bias, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct RecurrentOut {
  Tensor states;  // [b, n, d_hidden]
  Tensor final;   // [b, d_hidden]; for bidirectional: forward final state
                  // concat backward state after reading position 0
};

RecurrentOut run_recurrent(const Tensor& x, const RecurrentParams& p);

// ---- attention pooling --------------------------------------------------------

// Additive attention over positions: score_t = v . tanh(W s_t), softmax over
// t, convex combination of the rows. Same scoring whether it pools embedded
// inputs (before the recurrent layer) or its states (after).
struct AttentionPoolParams {
  Tensor w;  // [d, d]
  Tensor v;  // [d]
  static AttentionPoolParams init(int d, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

Tensor attention_pool(const Tensor& states, const AttentionPoolParams& p,
                      Tensor* weights_out = nullptr);

// ---- classifier head ------------------------------------------------------------

struct ClassifyHeadParams {
  Tensor w;  // [d, 2]
  Tensor b;  // [2]
  static ClassifyHeadParams init(int d, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

// linear + log-softmax; rows are valid log-distributions.
Tensor classify_head(const Tensor& h, const ClassifyHeadParams& p);

// ---- dropout ----------------------------------------------------------------

// Inverted dropout: keep-mask scaled by 1/(1-p) during training, identity
// otherwise. p must stay below 1.
Tensor dropout(const Tensor& x, Scalar p, bool training, Rng* rng);

}  // namespace tegru::nn
