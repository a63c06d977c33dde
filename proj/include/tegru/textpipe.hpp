#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace tegru::textpipe {

// ---- UTF-8 -----------------------------------------------------------------

// Decodes the codepoint starting at `pos`, advancing it. Throws on invalid
// sequences (callers contain the error per corpus line).
char32_t decode_utf8(const std::string& text, std::size_t& pos);
void append_utf8(std::string& out, char32_t cp);
std::vector<char32_t> to_codepoints(const std::string& text);

// Punctuation-or-symbol classifier over the blocks that matter for comment
// text: ASCII punctuation, general punctuation, CJK symbols, fullwidth and
// small/compatibility forms. Letters, digits and whitespace are never
// punctuation here.
bool is_punct_codepoint(char32_t cp);

// ---- filtering ---------------------------------------------------------------

// Which punctuation survives filtering. Default set: the clause-capable
// marks, fullwidth and ASCII both. Everything else classified as
// punctuation is deleted.
struct FilterRules {
  std::unordered_set<char32_t> retained;

  static FilterRules defaults();
  // One rule per codepoint in the UTF-8 string.
  static FilterRules from_marks(const std::string& utf8_marks);
  std::string marks_utf8() const;  // canonical (sorted) rendering
};

std::string filter_text(const std::string& raw, const FilterRules& rules);

// ---- tokenization --------------------------------------------------------------

// Segmentation is an interface: the built-in default splits pre-segmented
// text on whitespace (punctuation marks become their own tokens); external
// segmenters plug in via a one-token-per-line file or command.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(const std::string& filtered) = 0;
};

class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> tokenize(const std::string& filtered) override;
};

// Pre-segmented sidecar file: one token per line, one blank line between
// samples. Each tokenize() call consumes the next sample's group; the
// argument is ignored.
class FileTokenizer final : public Tokenizer {
 public:
  explicit FileTokenizer(const std::string& path);
  std::vector<std::string> tokenize(const std::string& filtered) override;
  std::size_t remaining() const { return groups_.size() - next_; }

 private:
  std::vector<std::vector<std::string>> groups_;
  std::size_t next_ = 0;
};

// Pipes each sample through an external command that prints one token per
// line (e.g. a CWS segmenter wrapper).
class CommandTokenizer final : public Tokenizer {
 public:
  explicit CommandTokenizer(std::string command);
  std::vector<std::string> tokenize(const std::string& filtered) override;

 private:
  std::string command_;
};

// ---- vocabulary ---------------------------------------------------------------

class Vocabulary {
 public:
  static constexpr int kPadIndex = 0;
  static constexpr int kUnkIndex = 1;
  static const char* pad_token();  // "<pad>"
  static const char* unk_token();  // "<unk>"

  // Frequency-ranked cutoff: the top (max_size - 2) tokens, ties broken by
  // first occurrence in the stream. max_size >= 2.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          int max_size);

  int size() const { return static_cast<int>(tokens_.size()); }
  // PAD/UNK aside, unknown tokens map to UNK.
  int index_of(const std::string& token) const;
  const std::string& token_at(int index) const;
  bool contains(const std::string& token) const;

  // token<TAB>index lines in index order.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  std::string export_text() const;
  std::uint64_t hash() const;  // FNV-1a over export_text()

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::uint64_t fnv1a(const void* data, std::size_t len,
                    std::uint64_t seed = 0xcbf29ce484222325ull);

// ---- alignment ---------------------------------------------------------------

// Fixed-length row: drop from the front when too long, pad (index 0) at the
// front when too short. The tail of the comment always survives.
std::vector<int> align(const std::vector<int>& ids, int max_len);

// ---- embeddings ---------------------------------------------------------------

// Vocabulary-aligned dense table. Stored as doubles so the same file works
// under either scalar build.
struct EmbeddingTable {
  int vocab_size = 0;
  int dim = 0;
  std::vector<double> data;  // vocab_size * dim, row-major
  double coverage = 0.0;     // fraction of non-reserved tokens found on disk
  std::uint64_t vocab_hash = 0;

  // Text format: header line "count dim", then "word v1 .. v_dim" lines.
  // Tokens missing from the file (UNK included) are drawn from
  // uniform(-0.1, 0.1) with the given seed; the PAD row is zero.
  static EmbeddingTable load_text(const std::string& path,
                                  const Vocabulary& vocab, std::uint64_t seed);
  static EmbeddingTable random_init(const Vocabulary& vocab, int dim,
                                    std::uint64_t seed);
  // As above when only the vocabulary size is known (no hash recorded).
  static EmbeddingTable random_init_sized(int vocab_size, int dim,
                                          std::uint64_t seed);

  void save_binary(const std::string& path) const;
  static EmbeddingTable load_binary(const std::string& path);
};

// ---- corpus and encoded data -----------------------------------------------

struct CorpusLine {
  int label = 0;  // 0 negative, 1 positive
  std::string text;
};

struct CorpusReadResult {
  std::vector<CorpusLine> samples;
  // (line number, reason) for lines that failed to parse
  std::vector<std::pair<int, std::string>> errors;
};

// UTF-8, one sample per line, "label<TAB>text", label in {0,1}. Malformed
// lines are reported, not fatal.
CorpusReadResult read_corpus(const std::string& path);

struct EncodedBatch {
  int batch = 0;
  int max_len = 0;
  int vocab_size = 0;
  std::vector<int> indices;  // batch * max_len
  std::vector<int> labels;   // batch
  std::vector<int> lengths;  // original token counts
};

struct EncodedDataset {
  int max_len = 0;
  int vocab_size = 0;
  std::vector<int> indices;
  std::vector<int> labels;
  std::vector<int> lengths;

  std::size_t size() const { return labels.size(); }
  EncodedBatch gather(const std::vector<std::size_t>& rows) const;
  EncodedBatch slice(std::size_t begin, std::size_t count) const;

  void save(const std::string& path) const;
  static EncodedDataset load(const std::string& path);
};

struct EncodeStats {
  int dropped_empty = 0;            // empty after filtering/tokenization
  std::vector<int> token_lengths;   // per kept sample, pre-alignment
};

// filter + tokenize, dropping samples that come out empty. Runs the
// tokenizer exactly once per sample, so the result can feed both
// vocabulary building and encoding.
struct TokenizedCorpus {
  std::vector<int> labels;
  std::vector<std::vector<std::string>> samples;
  int dropped_empty = 0;
};

TokenizedCorpus tokenize_corpus(const std::vector<CorpusLine>& samples,
                                const FilterRules& rules, Tokenizer& tokenizer);

EncodedDataset encode_tokens(const TokenizedCorpus& corpus,
                             const Vocabulary& vocab, int max_len,
                             EncodeStats* stats = nullptr);

// Convenience composition of the two steps above.
EncodedDataset encode_corpus(const std::vector<CorpusLine>& samples,
                             const Vocabulary& vocab, const FilterRules& rules,
                             Tokenizer& tokenizer, int max_len,
                             EncodeStats* stats = nullptr);

}  // namespace tegru::textpipe
