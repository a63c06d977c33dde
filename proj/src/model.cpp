#include "tegru/model.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace tegru::model {

namespace {

struct KindTraits {
  ModelKind kind;
  const char* name;
  bool encoder;
  nn::CellKind cell;
  bool bidirectional;
  AttPlacement att;
  const char* alias;  // compact spelling
};

constexpr KindTraits kKinds[] = {
    {ModelKind::TEGRU, "T-E-GRU", true, nn::CellKind::GRU, false,
     AttPlacement::None, "tegru"},
    {ModelKind::TERNN, "T-E-RNN", true, nn::CellKind::RNN, false,
     AttPlacement::None, "ternn"},
    {ModelKind::TELSTM, "T-E-LSTM", true, nn::CellKind::LSTM, false,
     AttPlacement::None, "telstm"},
    {ModelKind::TEBiRNN, "T-E-BiRNN", true, nn::CellKind::RNN, true,
     AttPlacement::None, "tebirnn"},
    {ModelKind::TEBiLSTM, "T-E-BiLSTM", true, nn::CellKind::LSTM, true,
     AttPlacement::None, "tebilstm"},
    {ModelKind::TEBiGRU, "T-E-BiGRU", true, nn::CellKind::GRU, true,
     AttPlacement::None, "tebigru"},
    {ModelKind::RNN, "RNN", false, nn::CellKind::RNN, false,
     AttPlacement::None, "rnn"},
    {ModelKind::LSTM, "LSTM", false, nn::CellKind::LSTM, false,
     AttPlacement::None, "lstm"},
    {ModelKind::GRU, "GRU", false, nn::CellKind::GRU, false,
     AttPlacement::None, "gru"},
    {ModelKind::BiRNN, "Bi-RNN", false, nn::CellKind::RNN, true,
     AttPlacement::None, "birnn"},
    {ModelKind::BiLSTM, "Bi-LSTM", false, nn::CellKind::LSTM, true,
     AttPlacement::None, "bilstm"},
    {ModelKind::BiGRU, "Bi-GRU", false, nn::CellKind::GRU, true,
     AttPlacement::None, "bigru"},
    {ModelKind::RNNAtt, "RNN-Attention", false, nn::CellKind::RNN, false,
     AttPlacement::AfterRecurrent, "rnnatt"},
    {ModelKind::LSTMAtt, "LSTM-Attention", false, nn::CellKind::LSTM, false,
     AttPlacement::AfterRecurrent, "lstmatt"},
    {ModelKind::GRUAtt, "GRU-Attention", false, nn::CellKind::GRU, false,
     AttPlacement::AfterRecurrent, "gruatt"},
    {ModelKind::AttRNN, "Attention-RNN", false, nn::CellKind::RNN, false,
     AttPlacement::BeforeRecurrent, "attrnn"},
    {ModelKind::AttLSTM, "Attention-LSTM", false, nn::CellKind::LSTM, false,
     AttPlacement::BeforeRecurrent, "attlstm"},
    {ModelKind::AttGRU, "Attention-GRU", false, nn::CellKind::GRU, false,
     AttPlacement::BeforeRecurrent, "attgru"},
    {ModelKind::BiRNNAtt, "BiRNN-Attention", false, nn::CellKind::RNN, true,
     AttPlacement::AfterRecurrent, "birnnatt"},
    {ModelKind::BiLSTMAtt, "BiLSTM-Attention", false, nn::CellKind::LSTM, true,
     AttPlacement::AfterRecurrent, "bilstmatt"},
    {ModelKind::BiGRUAtt, "BiGRU-Attention", false, nn::CellKind::GRU, true,
     AttPlacement::AfterRecurrent, "bigruatt"},
};

const KindTraits& traits(ModelKind kind) {
  for (const KindTraits& t : kKinds) {
    if (t.kind == kind) return t;
  }
  throw std::logic_error("unknown model kind");
}

std::string normalize(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '-' || c == '_' || c == ' ') continue;
    out.push_back(static_cast<char>(
        std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

const std::vector<ModelKind>& all_kinds() {
  static const std::vector<ModelKind> kinds = [] {
    std::vector<ModelKind> v;
    for (const KindTraits& t : kKinds) v.push_back(t.kind);
    return v;
  }();
  return kinds;
}

const char* kind_name(ModelKind kind) { return traits(kind).name; }

std::optional<ModelKind> parse_kind(std::string_view text) {
  std::string key = normalize(text);
  for (const KindTraits& t : kKinds) {
    if (key == normalize(t.name) || key == t.alias) return t.kind;
  }
  return std::nullopt;
}

bool kind_has_encoder(ModelKind kind) { return traits(kind).encoder; }
bool kind_bidirectional(ModelKind kind) { return traits(kind).bidirectional; }
nn::CellKind kind_cell(ModelKind kind) { return traits(kind).cell; }
AttPlacement kind_attention(ModelKind kind) { return traits(kind).att; }

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("model config: " + msg);
  };
  if (d_model < 1) fail("d_model must be positive");
  if (max_len < 1) fail("max_len must be positive");
  if (recurrent_hidden < 1) fail("recurrent_hidden must be positive");
  if (dropout < Scalar(0) || dropout >= Scalar(1)) {
    fail("dropout must lie in [0, 1)");
  }
  if (kind_bidirectional(kind) && recurrent_hidden % 2 != 0) {
    fail("bidirectional models need an even recurrent_hidden, got " +
         std::to_string(recurrent_hidden));
  }
  if (kind_has_encoder(kind)) {
    if (n_heads < 1) fail("n_heads must be positive");
    if (d_model % n_heads != 0) {
      fail("d_model " + std::to_string(d_model) +
           " must be divisible by n_heads " + std::to_string(n_heads));
    }
    if (d_ff < 1) fail("d_ff must be positive");
    if (encoder_layers < 1) fail("encoder_layers must be positive");
  }
}

nn::NamedTensors ModelParams::all_tensors() const {
  nn::NamedTensors out;
  out.emplace_back("embedding", embedding);
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    encoder[i].collect("encoder" + std::to_string(i), out);
  }
  recurrent.collect("recurrent", out);
  if (pool) pool->collect("pool", out);
  head.collect("head", out);
  return out;
}

nn::NamedTensors ModelParams::trainable_parameters() const {
  nn::NamedTensors out = all_tensors();
  if (!config.trainable_embeddings) {
    out.erase(out.begin());  // embedding sits first
  }
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : all_tensors()) n += t.numel();
  return n;
}

namespace detail {
void save_stream(const ModelParams& params, std::ostream& out);
ModelParams load_stream(std::istream& in, const std::string& label);
}  // namespace detail

ModelParams ModelParams::clone() const {
  // Round-trip through the serialization format: values are stored as
  // doubles, which widen/narrow losslessly from either scalar build, so the
  // copy is bit-identical and owns fresh storage.
  std::stringstream buffer;
  detail::save_stream(*this, buffer);
  return detail::load_stream(buffer, "<clone>");
}

ModelParams build(const ModelConfig& config,
                  const textpipe::EmbeddingTable& emb) {
  config.validate();
  if (emb.dim != config.d_model) {
    throw std::invalid_argument(
        "build: embedding dimension " + std::to_string(emb.dim) +
        " does not match d_model " + std::to_string(config.d_model));
  }
  if (emb.vocab_size < 2) {
    throw std::invalid_argument("build: embedding table has no vocabulary");
  }

  ModelParams p;
  p.config = config;
  p.vocab_size = emb.vocab_size;
  p.vocab_hash = emb.vocab_hash;

  std::vector<Scalar> table(emb.data.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    table[i] = static_cast<Scalar>(emb.data[i]);
  }
  p.embedding = Tensor::from_values({emb.vocab_size, emb.dim}, std::move(table))
                    .set_requires_grad(config.trainable_embeddings);

  Rng rng(config.seed);
  if (kind_has_encoder(config.kind)) {
    for (int i = 0; i < config.encoder_layers; ++i) {
      p.encoder.push_back(nn::EncoderBlockParams::init(
          config.d_model, config.n_heads, config.d_ff, config.dropout, rng));
    }
  }
  p.recurrent = nn::RecurrentParams::init(
      kind_cell(config.kind), kind_bidirectional(config.kind), config.d_model,
      config.recurrent_hidden, config.gru_bias, rng);

  AttPlacement att = kind_attention(config.kind);
  if (att == AttPlacement::BeforeRecurrent) {
    p.pool = nn::AttentionPoolParams::init(config.d_model, rng);
  } else if (att == AttPlacement::AfterRecurrent) {
    p.pool = nn::AttentionPoolParams::init(config.recurrent_hidden, rng);
  }
  p.head = nn::ClassifyHeadParams::init(config.recurrent_hidden, rng);
  return p;
}

Tensor forward(const ModelParams& params, const textpipe::EncodedBatch& batch,
               bool training, Rng* rng) {
  if (batch.batch < 1) {
    throw std::invalid_argument("forward: empty batch");
  }
  if (batch.max_len < 1) {
    throw std::invalid_argument("forward: empty sequences");
  }
  const ModelConfig& cfg = params.config;

  Tensor x = embedding_lookup(params.embedding, batch.indices, batch.batch,
                              batch.max_len);

  std::vector<unsigned char> pad_mask;
  const std::vector<unsigned char>* mask_ptr = nullptr;
  if (cfg.attention_mask && kind_has_encoder(cfg.kind)) {
    pad_mask.resize(batch.indices.size());
    for (std::size_t i = 0; i < batch.indices.size(); ++i) {
      pad_mask[i] = batch.indices[i] == textpipe::Vocabulary::kPadIndex;
    }
    mask_ptr = &pad_mask;
  }

  for (const auto& block : params.encoder) {
    x = nn::encoder_block(x, block, training, rng, mask_ptr);
  }

  // one dropout site on the recurrent input path; for encoder kinds this is
  // the encoder-to-recurrent handoff
  x = nn::dropout(x, cfg.dropout, training, rng);

  Tensor h;
  switch (kind_attention(cfg.kind)) {
    case AttPlacement::None: {
      h = run_recurrent(x, params.recurrent).final;
      break;
    }
    case AttPlacement::AfterRecurrent: {
      nn::RecurrentOut rec = run_recurrent(x, params.recurrent);
      h = nn::attention_pool(rec.states, *params.pool);
      break;
    }
    case AttPlacement::BeforeRecurrent: {
      // pool the embedded sequence into one context vector, then a single
      // recurrent step reads it
      Tensor ctx = nn::attention_pool(x, *params.pool);
      Tensor seq = reshape(ctx, {batch.batch, 1, cfg.d_model});
      h = run_recurrent(seq, params.recurrent).final;
      break;
    }
  }
  return nn::classify_head(h, params.head);
}

// ---- serialization -----------------------------------------------------------

namespace {

constexpr char kCkptMagic[9] = "TEGRUCKP";
constexpr std::uint32_t kCkptVersion = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) {
    throw std::runtime_error("checkpoint " + path + ": truncated file");
  }
  return v;
}

}  // namespace

namespace detail {

void save_stream(const ModelParams& params, std::ostream& file) {
  std::ostringstream body;
  body.write(kCkptMagic, 8);
  write_pod(body, kCkptVersion);
  write_pod(body, static_cast<std::uint32_t>(sizeof(Scalar)));

  const ModelConfig& c = params.config;
  write_pod(body, static_cast<std::int32_t>(c.kind));
  write_pod(body, static_cast<std::int32_t>(c.d_model));
  write_pod(body, static_cast<std::int32_t>(c.max_len));
  write_pod(body, static_cast<std::int32_t>(c.n_heads));
  write_pod(body, static_cast<std::int32_t>(c.d_ff));
  write_pod(body, static_cast<std::int32_t>(c.encoder_layers));
  write_pod(body, static_cast<std::int32_t>(c.recurrent_hidden));
  write_pod(body, static_cast<double>(c.dropout));
  write_pod(body, static_cast<std::uint8_t>(c.trainable_embeddings));
  write_pod(body, static_cast<std::uint8_t>(c.gru_bias));
  write_pod(body, static_cast<std::uint8_t>(c.attention_mask));
  write_pod(body, c.seed);
  write_pod(body, static_cast<std::int32_t>(params.vocab_size));
  write_pod(body, params.vocab_hash);

  nn::NamedTensors tensors = params.all_tensors();
  write_pod(body, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_pod(body, static_cast<std::uint32_t>(name.size()));
    body.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(body, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_pod(body, static_cast<std::int32_t>(d));
    for (Scalar v : t.values()) write_pod(body, static_cast<double>(v));
  }

  std::string payload = body.str();
  std::uint64_t checksum = textpipe::fnv1a(payload.data(), payload.size());
  file.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  write_pod(file, checksum);
}

ModelParams load_stream(std::istream& in, const std::string& path) {
  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  if (payload.size() < 8 + sizeof(std::uint64_t)) {
    throw std::runtime_error("checkpoint " + path + ": truncated file");
  }
  std::uint64_t stored;
  std::memcpy(&stored, payload.data() + payload.size() - sizeof(stored),
              sizeof(stored));
  payload.resize(payload.size() - sizeof(stored));
  if (textpipe::fnv1a(payload.data(), payload.size()) != stored) {
    throw std::runtime_error("checkpoint " + path +
                             ": integrity checksum mismatch");
  }

  std::istringstream body(payload);
  char magic[8];
  body.read(magic, 8);
  if (!body || std::string(magic, 8) != std::string(kCkptMagic, 8)) {
    throw std::runtime_error("checkpoint " + path + ": not a checkpoint file");
  }
  auto version = read_pod<std::uint32_t>(body, path);
  if (version != kCkptVersion) {
    throw std::runtime_error("checkpoint " + path + ": unsupported version " +
                             std::to_string(version));
  }
  (void)read_pod<std::uint32_t>(body, path);  // scalar width, informational

  ModelConfig c;
  auto kind_raw = read_pod<std::int32_t>(body, path);
  bool kind_ok = false;
  for (ModelKind k : all_kinds()) {
    if (static_cast<std::int32_t>(k) == kind_raw) {
      c.kind = k;
      kind_ok = true;
    }
  }
  if (!kind_ok) {
    throw std::runtime_error("checkpoint " + path + ": unknown model kind " +
                             std::to_string(kind_raw));
  }
  c.d_model = read_pod<std::int32_t>(body, path);
  c.max_len = read_pod<std::int32_t>(body, path);
  c.n_heads = read_pod<std::int32_t>(body, path);
  c.d_ff = read_pod<std::int32_t>(body, path);
  c.encoder_layers = read_pod<std::int32_t>(body, path);
  c.recurrent_hidden = read_pod<std::int32_t>(body, path);
  c.dropout = static_cast<Scalar>(read_pod<double>(body, path));
  c.trainable_embeddings = read_pod<std::uint8_t>(body, path) != 0;
  c.gru_bias = read_pod<std::uint8_t>(body, path) != 0;
  c.attention_mask = read_pod<std::uint8_t>(body, path) != 0;
  c.seed = read_pod<std::uint64_t>(body, path);
  auto vocab_size = read_pod<std::int32_t>(body, path);
  auto vocab_hash = read_pod<std::uint64_t>(body, path);

  // skeleton with the right structure, values then filled from the file
  textpipe::EmbeddingTable skeleton;
  skeleton.vocab_size = vocab_size;
  skeleton.dim = c.d_model;
  skeleton.vocab_hash = vocab_hash;
  skeleton.data.assign(static_cast<std::size_t>(vocab_size) *
                           static_cast<std::size_t>(c.d_model),
                       0.0);
  ModelParams params = build(c, skeleton);

  std::unordered_map<std::string, Tensor> by_name;
  for (auto& [name, t] : params.all_tensors()) by_name.emplace(name, t);

  auto tensor_count = read_pod<std::uint32_t>(body, path);
  if (tensor_count != by_name.size()) {
    throw std::runtime_error(
        "checkpoint " + path + ": expected " +
        std::to_string(by_name.size()) + " tensors, file has " +
        std::to_string(tensor_count));
  }
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    auto name_len = read_pod<std::uint32_t>(body, path);
    std::string name(name_len, '\0');
    body.read(name.data(), name_len);
    if (!body) throw std::runtime_error("checkpoint " + path + ": truncated");
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint " + path + ": unexpected tensor '" +
                               name + "'");
    }
    auto rank = read_pod<std::uint32_t>(body, path);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(read_pod<std::int32_t>(body, path));
    }
    if (shape != it->second.shape()) {
      throw std::runtime_error("checkpoint " + path + ": tensor '" + name +
                               "' has shape " + shape_str(shape) +
                               ", expected " + shape_str(it->second.shape()));
    }
    auto& dst = it->second.mutable_values();
    for (auto& v : dst) v = static_cast<Scalar>(read_pod<double>(body, path));
  }
  return params;
}

}  // namespace detail

void save(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  detail::save_stream(params, out);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelParams load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return detail::load_stream(in, path);
}

void check_compatible(const ModelParams& params, int vocab_size,
                      std::uint64_t vocab_hash) {
  if (params.vocab_size != vocab_size) {
    throw std::runtime_error(
        "config mismatch: checkpoint was built for a vocabulary of " +
        std::to_string(params.vocab_size) + " entries, data uses " +
        std::to_string(vocab_size));
  }
  if (vocab_hash != 0 && params.vocab_hash != 0 &&
      vocab_hash != params.vocab_hash) {
    throw std::runtime_error(
        "config mismatch: vocabulary contents differ from the checkpoint");
  }
}

}  // namespace tegru::model
