#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tegru/nn.hpp"
#include "tegru/textpipe.hpp"

namespace tegru::model {

// The full architecture zoo: the transformer-encoder + recurrent family,
// plain recurrent baselines, and recurrent models with additive attention
// placed before or after the recurrent layer.
enum class ModelKind {
  TEGRU,
  TERNN,
  TELSTM,
  TEBiRNN,
  TEBiLSTM,
  TEBiGRU,
  RNN,
  LSTM,
  GRU,
  BiRNN,
  BiLSTM,
  BiGRU,
  RNNAtt,
  LSTMAtt,
  GRUAtt,
  AttRNN,
  AttLSTM,
  AttGRU,
  BiRNNAtt,
  BiLSTMAtt,
  BiGRUAtt,
};

enum class AttPlacement { None, BeforeRecurrent, AfterRecurrent };

const std::vector<ModelKind>& all_kinds();
const char* kind_name(ModelKind kind);  // display name, e.g. "BiGRU-Attention"
// Accepts display names and compact aliases, case- and punctuation-blind
// ("T-E-GRU", "tegru", "gru_attention", ...).
std::optional<ModelKind> parse_kind(std::string_view text);

bool kind_has_encoder(ModelKind kind);
bool kind_bidirectional(ModelKind kind);
nn::CellKind kind_cell(ModelKind kind);
AttPlacement kind_attention(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::TEGRU;
  int d_model = 300;          // embedding width
  int max_len = 100;          // alignment length
  int n_heads = 2;
  int d_ff = 2048;            // encoder inner layer
  int encoder_layers = 1;
  int recurrent_hidden = 256; // total width; halved per direction when bi
  Scalar dropout = Scalar(0.3);
  bool trainable_embeddings = true;
  bool gru_bias = true;       // false: bias-free gate equations
  bool attention_mask = false;  // PAD masking inside encoder attention
  std::uint64_t seed = 1;

  void validate() const;
};

struct ModelParams {
  ModelConfig config;
  int vocab_size = 0;
  std::uint64_t vocab_hash = 0;
  Tensor embedding;  // [vocab_size, d_model]; PAD row frozen at zero
  std::vector<nn::EncoderBlockParams> encoder;
  nn::RecurrentParams recurrent;
  std::optional<nn::AttentionPoolParams> pool;
  nn::ClassifyHeadParams head;

  // Every tensor in serialization order (embedding included).
  nn::NamedTensors all_tensors() const;
  // What the optimizer updates; embedding only when trainable.
  nn::NamedTensors trainable_parameters() const;
  std::size_t parameter_count() const;

  ModelParams clone() const;  // deep copy (checkpoint snapshots)
};

// Deterministic: same config and embedding table give byte-identical
// parameters.
ModelParams build(const ModelConfig& config,
                  const textpipe::EmbeddingTable& emb);

// Log-probabilities [batch, 2]. training=true enables dropout (rng
// required); inference needs no generator.
Tensor forward(const ModelParams& params, const textpipe::EncodedBatch& batch,
               bool training, Rng* rng = nullptr);

// Self-describing checkpoint with integrity checksum. Values are stored as
// doubles, so files move between scalar builds.
void save(const ModelParams& params, const std::string& path);
ModelParams load(const std::string& path);

// Guard for evaluation paths: dataset and checkpoint must agree on the
// vocabulary. Zero hash means "not recorded", which skips the hash check.
void check_compatible(const ModelParams& params, int vocab_size,
                      std::uint64_t vocab_hash = 0);

}  // namespace tegru::model
