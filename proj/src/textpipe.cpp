#include "tegru/textpipe.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "tegru/rng.hpp"

namespace tegru::textpipe {

// ---- UTF-8 -----------------------------------------------------------------

char32_t decode_utf8(const std::string& text, std::size_t& pos) {
  auto byte = [&](std::size_t i) -> unsigned char {
    return static_cast<unsigned char>(text[i]);
  };
  if (pos >= text.size()) throw std::runtime_error("utf-8: read past end");
  unsigned char b0 = byte(pos);
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int extra;
  char32_t cp;
  if ((b0 & 0xE0) == 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
  } else {
    throw std::runtime_error("utf-8: invalid lead byte at offset " +
                             std::to_string(pos));
  }
  if (pos + static_cast<std::size_t>(extra) >= text.size()) {
    throw std::runtime_error("utf-8: truncated sequence at offset " +
                             std::to_string(pos));
  }
  for (int i = 1; i <= extra; ++i) {
    unsigned char bi = byte(pos + static_cast<std::size_t>(i));
    if ((bi & 0xC0) != 0x80) {
      throw std::runtime_error("utf-8: invalid continuation at offset " +
                               std::to_string(pos + static_cast<std::size_t>(i)));
    }
    cp = (cp << 6) | (bi & 0x3F);
  }
  pos += static_cast<std::size_t>(extra) + 1;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::vector<char32_t> to_codepoints(const std::string& text) {
  std::vector<char32_t> cps;
  std::size_t pos = 0;
  while (pos < text.size()) cps.push_back(decode_utf8(text, pos));
  return cps;
}

bool is_punct_codepoint(char32_t cp) {
  if (cp < 0x80) {
    return std::ispunct(static_cast<unsigned char>(cp)) != 0;
  }
  if (cp >= 0x2000 && cp <= 0x206F) return true;  // general punctuation
  if (cp >= 0x3001 && cp <= 0x303F) return true;  // CJK punctuation (not the
                                                  // ideographic space 0x3000)
  if (cp >= 0xFE30 && cp <= 0xFE6F) return true;  // vertical/small forms
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;  // fullwidth ! .. /
  if (cp >= 0xFF1A && cp <= 0xFF20) return true;  // fullwidth : .. @
  if (cp >= 0xFF3B && cp <= 0xFF40) return true;  // fullwidth [ .. `
  if (cp >= 0xFF5B && cp <= 0xFF65) return true;  // fullwidth { .. halfwidth 。
  return false;
}

namespace {

bool is_space_codepoint(char32_t cp) {
  return cp == U' ' || cp == U'\t' || cp == U'\r' || cp == U'\n' ||
         cp == char32_t(0x3000);
}

}  // namespace

// ---- filtering ---------------------------------------------------------------

FilterRules FilterRules::defaults() {
  // Clause-capable marks: fullwidth 。！？；， plus the ellipsis, and their
  // ASCII counterparts.
  return from_marks("。！？；，….!?;,");
}

FilterRules FilterRules::from_marks(const std::string& utf8_marks) {
  FilterRules rules;
  for (char32_t cp : to_codepoints(utf8_marks)) rules.retained.insert(cp);
  return rules;
}

std::string FilterRules::marks_utf8() const {
  std::vector<char32_t> sorted(retained.begin(), retained.end());
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (char32_t cp : sorted) append_utf8(out, cp);
  return out;
}

std::string filter_text(const std::string& raw, const FilterRules& rules) {
  std::string out;
  out.reserve(raw.size());
  std::size_t pos = 0;
  while (pos < raw.size()) {
    char32_t cp = decode_utf8(raw, pos);
    if (is_punct_codepoint(cp) && rules.retained.find(cp) == rules.retained.end()) {
      continue;
    }
    append_utf8(out, cp);
  }
  return out;
}

// ---- tokenization --------------------------------------------------------------

std::vector<std::string> WhitespaceTokenizer::tokenize(
    const std::string& filtered) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  std::size_t pos = 0;
  while (pos < filtered.size()) {
    char32_t cp = decode_utf8(filtered, pos);
    if (is_space_codepoint(cp)) {
      flush();
    } else if (is_punct_codepoint(cp)) {
      // punctuation marks stand alone
      flush();
      std::string mark;
      append_utf8(mark, cp);
      tokens.push_back(mark);
    } else {
      append_utf8(current, cp);
    }
  }
  flush();
  return tokens;
}

FileTokenizer::FileTokenizer(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open segmented-token file: " + path);
  }
  std::vector<std::string> group;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      groups_.push_back(group);
      group.clear();
    } else {
      group.push_back(line);
    }
  }
  if (!group.empty()) groups_.push_back(group);
}

std::vector<std::string> FileTokenizer::tokenize(const std::string&) {
  if (next_ >= groups_.size()) {
    throw std::runtime_error(
        "segmented-token file exhausted: more samples than token groups");
  }
  return groups_[next_++];
}

CommandTokenizer::CommandTokenizer(std::string command)
    : command_(std::move(command)) {}

std::vector<std::string> CommandTokenizer::tokenize(
    const std::string& filtered) {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path();
  fs::path in_path = dir / ("tegru_seg_in_" + std::to_string(::getpid()) + ".txt");
  fs::path out_path = dir / ("tegru_seg_out_" + std::to_string(::getpid()) + ".txt");
  {
    std::ofstream out(in_path);
    out << filtered << '\n';
  }
  std::string cmd = command_ + " < " + in_path.string() + " > " + out_path.string();
  int rc = std::system(cmd.c_str());
  std::error_code ec;
  fs::remove(in_path, ec);
  if (rc != 0) {
    fs::remove(out_path, ec);
    throw std::runtime_error("external segmenter failed (exit " +
                             std::to_string(rc) + "): " + command_);
  }
  std::vector<std::string> tokens;
  std::ifstream res(out_path);
  std::string line;
  while (std::getline(res, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  fs::remove(out_path, ec);
  return tokens;
}

// ---- vocabulary ---------------------------------------------------------------

const char* Vocabulary::pad_token() { return "<pad>"; }
const char* Vocabulary::unk_token() { return "<unk>"; }

Vocabulary Vocabulary::build(
    const std::vector<std::vector<std::string>>& corpus, int max_size) {
  if (max_size < 2) {
    throw std::invalid_argument(
        "vocabulary max_size must be >= 2 (PAD and UNK are reserved)");
  }
  struct Entry {
    long count = 0;
    long first_seen = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  long order = 0;
  for (const auto& sample : corpus) {
    for (const auto& token : sample) {
      auto [it, inserted] = counts.try_emplace(token);
      if (inserted) it->second.first_seen = order++;
      ++it->second.count;
    }
  }
  std::vector<std::pair<std::string, Entry>> ranked(counts.begin(),
                                                    counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first_seen < b.second.first_seen;
  });

  Vocabulary v;
  v.tokens_.push_back(pad_token());
  v.tokens_.push_back(unk_token());
  std::size_t keep = static_cast<std::size_t>(max_size - 2);
  for (std::size_t i = 0; i < ranked.size() && i < keep; ++i) {
    v.tokens_.push_back(ranked[i].first);
  }
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    v.index_[v.tokens_[i]] = static_cast<int>(i);
  }
  return v;
}

int Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkIndex : it->second;
}

const std::string& Vocabulary::token_at(int index) const {
  if (index < 0 || index >= size()) {
    throw std::out_of_range("vocabulary index " + std::to_string(index) +
                            " outside [0, " + std::to_string(size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(index)];
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.find(token) != index_.end();
}

std::string Vocabulary::export_text() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    os << tokens_[i] << '\t' << i << '\n';
  }
  return os.str();
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  out << export_text();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  Vocabulary v;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("vocabulary " + path + " line " +
                               std::to_string(line_no) + ": missing tab");
    }
    std::string token = line.substr(0, tab);
    int idx = std::stoi(line.substr(tab + 1));
    if (idx != static_cast<int>(v.tokens_.size())) {
      throw std::runtime_error("vocabulary " + path + " line " +
                               std::to_string(line_no) +
                               ": indices must be dense and in order");
    }
    v.index_[token] = idx;
    v.tokens_.push_back(std::move(token));
  }
  if (v.size() < 2 || v.tokens_[0] != pad_token() ||
      v.tokens_[1] != unk_token()) {
    throw std::runtime_error("vocabulary " + path +
                             ": first entries must be <pad> and <unk>");
  }
  return v;
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t Vocabulary::hash() const {
  std::string text = export_text();
  return fnv1a(text.data(), text.size());
}

// ---- alignment ---------------------------------------------------------------

std::vector<int> align(const std::vector<int>& ids, int max_len) {
  if (max_len < 1) {
    throw std::invalid_argument("align: max_len must be >= 1");
  }
  std::size_t keep = static_cast<std::size_t>(max_len);
  std::vector<int> row(keep, Vocabulary::kPadIndex);
  std::size_t n = ids.size();
  std::size_t take = std::min(n, keep);
  // the last `take` input tokens land at the end of the row
  for (std::size_t i = 0; i < take; ++i) {
    row[keep - take + i] = ids[n - take + i];
  }
  return row;
}

// ---- embeddings ---------------------------------------------------------------

EmbeddingTable EmbeddingTable::load_text(const std::string& path,
                                         const Vocabulary& vocab,
                                         std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file: " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("embedding file " + path + ": empty");
  }
  long declared_count;
  int dim;
  {
    std::istringstream hdr(line);
    if (!(hdr >> declared_count >> dim) || dim <= 0) {
      throw std::runtime_error("embedding file " + path +
                               " line 1: header must be 'count dim'");
    }
  }

  std::unordered_map<std::string, std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string word;
    is >> word;
    std::vector<double> vec;
    vec.reserve(static_cast<std::size_t>(dim));
    double x;
    while (is >> x) vec.push_back(x);
    if (!is.eof()) {
      throw std::runtime_error("embedding file " + path + " line " +
                               std::to_string(line_no) + ": non-numeric field");
    }
    if (static_cast<int>(vec.size()) != dim) {
      throw std::runtime_error(
          "embedding file " + path + " line " + std::to_string(line_no) +
          ": expected " + std::to_string(dim) + " values, got " +
          std::to_string(vec.size()));
    }
    // first occurrence wins
    rows.try_emplace(std::move(word), std::move(vec));
  }

  EmbeddingTable table;
  table.vocab_size = vocab.size();
  table.dim = dim;
  table.vocab_hash = vocab.hash();
  table.data.assign(static_cast<std::size_t>(vocab.size()) *
                        static_cast<std::size_t>(dim),
                    0.0);
  Rng rng(seed);
  long found = 0;
  for (int i = 1; i < vocab.size(); ++i) {
    double* dst = table.data.data() +
                  static_cast<std::size_t>(i) * static_cast<std::size_t>(dim);
    auto it = i >= 2 ? rows.find(vocab.token_at(i)) : rows.end();
    if (it != rows.end()) {
      std::copy(it->second.begin(), it->second.end(), dst);
      ++found;
    } else {
      for (int j = 0; j < dim; ++j) dst[j] = rng.uniform(-0.1, 0.1);
    }
  }
  int real_tokens = vocab.size() - 2;
  table.coverage =
      real_tokens > 0 ? static_cast<double>(found) / real_tokens : 0.0;
  return table;
}

EmbeddingTable EmbeddingTable::random_init(const Vocabulary& vocab, int dim,
                                           std::uint64_t seed) {
  EmbeddingTable table = random_init_sized(vocab.size(), dim, seed);
  table.vocab_hash = vocab.hash();
  return table;
}

EmbeddingTable EmbeddingTable::random_init_sized(int vocab_size, int dim,
                                                 std::uint64_t seed) {
  if (dim <= 0) throw std::invalid_argument("embedding dim must be positive");
  if (vocab_size < 2) {
    throw std::invalid_argument("embedding table needs at least PAD and UNK");
  }
  EmbeddingTable table;
  table.vocab_size = vocab_size;
  table.dim = dim;
  table.vocab_hash = 0;
  table.coverage = 0.0;
  table.data.assign(static_cast<std::size_t>(vocab_size) *
                        static_cast<std::size_t>(dim),
                    0.0);
  Rng rng(seed);
  for (int i = 1; i < vocab_size; ++i) {
    double* dst = table.data.data() +
                  static_cast<std::size_t>(i) * static_cast<std::size_t>(dim);
    for (int j = 0; j < dim; ++j) dst[j] = rng.uniform(-0.1, 0.1);
  }
  return table;
}

namespace {

constexpr char kEmbMagic[9] = "TEGRUEMB";

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("unexpected end of file");
}

}  // namespace

void EmbeddingTable::save_binary(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write embedding table: " + path);
  std::ostringstream body;
  body.write(kEmbMagic, 8);
  std::uint32_t version = 1;
  write_pod(body, version);
  write_pod(body, vocab_size);
  write_pod(body, dim);
  write_pod(body, coverage);
  write_pod(body, vocab_hash);
  body.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
  std::string payload = body.str();
  std::uint64_t checksum = fnv1a(payload.data(), payload.size());
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  write_pod(out, checksum);
}

EmbeddingTable EmbeddingTable::load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embedding table: " + path);
  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  if (payload.size() < 8 + sizeof(std::uint64_t)) {
    throw std::runtime_error("embedding table " + path + ": truncated");
  }
  std::uint64_t stored;
  std::memcpy(&stored, payload.data() + payload.size() - sizeof(stored),
              sizeof(stored));
  payload.resize(payload.size() - sizeof(stored));
  if (fnv1a(payload.data(), payload.size()) != stored) {
    throw std::runtime_error("embedding table " + path +
                             ": checksum mismatch (corrupted file)");
  }
  std::istringstream body(payload);
  char magic[8];
  body.read(magic, 8);
  if (!body || std::string(magic, 8) != std::string(kEmbMagic, 8)) {
    throw std::runtime_error("embedding table " + path + ": bad magic");
  }
  std::uint32_t version;
  read_pod(body, version);
  if (version != 1) {
    throw std::runtime_error("embedding table " + path +
                             ": unsupported version " +
                             std::to_string(version));
  }
  EmbeddingTable table;
  read_pod(body, table.vocab_size);
  read_pod(body, table.dim);
  read_pod(body, table.coverage);
  read_pod(body, table.vocab_hash);
  if (table.vocab_size <= 0 || table.dim <= 0) {
    throw std::runtime_error("embedding table " + path + ": bad extents");
  }
  table.data.resize(static_cast<std::size_t>(table.vocab_size) *
                    static_cast<std::size_t>(table.dim));
  body.read(reinterpret_cast<char*>(table.data.data()),
            static_cast<std::streamsize>(table.data.size() * sizeof(double)));
  if (!body) throw std::runtime_error("embedding table " + path + ": truncated");
  return table;
}

// ---- corpus and encoded data -----------------------------------------------

CorpusReadResult read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  CorpusReadResult result;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      result.errors.emplace_back(line_no, "missing tab separator");
      continue;
    }
    std::string label = line.substr(0, tab);
    if (label != "0" && label != "1") {
      result.errors.emplace_back(line_no, "label must be 0 or 1, got '" +
                                              label + "'");
      continue;
    }
    std::string text = line.substr(tab + 1);
    try {
      (void)to_codepoints(text);  // reject invalid UTF-8 per line
    } catch (const std::exception& e) {
      result.errors.emplace_back(line_no, e.what());
      continue;
    }
    result.samples.push_back({label == "1" ? 1 : 0, std::move(text)});
  }
  return result;
}

EncodedBatch EncodedDataset::gather(const std::vector<std::size_t>& rows) const {
  EncodedBatch b;
  b.batch = static_cast<int>(rows.size());
  b.max_len = max_len;
  b.vocab_size = vocab_size;
  b.indices.reserve(rows.size() * static_cast<std::size_t>(max_len));
  for (std::size_t r : rows) {
    if (r >= size()) throw std::out_of_range("dataset row out of range");
    auto begin = indices.begin() +
                 static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(max_len));
    b.indices.insert(b.indices.end(), begin,
                     begin + static_cast<std::ptrdiff_t>(max_len));
    b.labels.push_back(labels[r]);
    b.lengths.push_back(lengths[r]);
  }
  return b;
}

EncodedBatch EncodedDataset::slice(std::size_t begin, std::size_t count) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < count && begin + i < size(); ++i)
    rows.push_back(begin + i);
  return gather(rows);
}

void EncodedDataset::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  out << "tegru-dataset 1 " << size() << ' ' << max_len << ' ' << vocab_size
      << '\n';
  for (std::size_t r = 0; r < size(); ++r) {
    out << labels[r] << '\t' << lengths[r] << '\t';
    for (int c = 0; c < max_len; ++c) {
      if (c) out << ' ';
      out << indices[r * static_cast<std::size_t>(max_len) +
                     static_cast<std::size_t>(c)];
    }
    out << '\n';
  }
}

EncodedDataset EncodedDataset::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::string tag;
  int version;
  std::size_t count;
  EncodedDataset ds;
  in >> tag >> version >> count >> ds.max_len >> ds.vocab_size;
  if (!in || tag != "tegru-dataset" || version != 1) {
    throw std::runtime_error("dataset " + path + ": bad header");
  }
  if (ds.max_len < 1 || ds.vocab_size < 2) {
    throw std::runtime_error("dataset " + path + ": bad extents");
  }
  ds.indices.reserve(count * static_cast<std::size_t>(ds.max_len));
  for (std::size_t r = 0; r < count; ++r) {
    int label, length;
    if (!(in >> label >> length)) {
      throw std::runtime_error("dataset " + path + ": truncated at sample " +
                               std::to_string(r));
    }
    if (label != 0 && label != 1) {
      throw std::runtime_error("dataset " + path + ": bad label at sample " +
                               std::to_string(r));
    }
    ds.labels.push_back(label);
    ds.lengths.push_back(length);
    for (int c = 0; c < ds.max_len; ++c) {
      int idx;
      if (!(in >> idx)) {
        throw std::runtime_error("dataset " + path + ": truncated at sample " +
                                 std::to_string(r));
      }
      if (idx < 0 || idx >= ds.vocab_size) {
        throw std::runtime_error("dataset " + path +
                                 ": token index outside vocabulary at sample " +
                                 std::to_string(r));
      }
      ds.indices.push_back(idx);
    }
  }
  return ds;
}

TokenizedCorpus tokenize_corpus(const std::vector<CorpusLine>& samples,
                                const FilterRules& rules,
                                Tokenizer& tokenizer) {
  TokenizedCorpus out;
  for (const CorpusLine& sample : samples) {
    std::vector<std::string> tokens =
        tokenizer.tokenize(filter_text(sample.text, rules));
    if (tokens.empty()) {
      ++out.dropped_empty;
      continue;
    }
    out.labels.push_back(sample.label);
    out.samples.push_back(std::move(tokens));
  }
  return out;
}

EncodedDataset encode_tokens(const TokenizedCorpus& corpus,
                             const Vocabulary& vocab, int max_len,
                             EncodeStats* stats) {
  if (max_len < 1) throw std::invalid_argument("encode: max_len must be >= 1");
  if (stats) stats->dropped_empty += corpus.dropped_empty;
  EncodedDataset ds;
  ds.max_len = max_len;
  ds.vocab_size = vocab.size();
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& tokens = corpus.samples[i];
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(vocab.index_of(t));
    std::vector<int> row = align(ids, max_len);
    ds.indices.insert(ds.indices.end(), row.begin(), row.end());
    ds.labels.push_back(corpus.labels[i]);
    ds.lengths.push_back(static_cast<int>(tokens.size()));
    if (stats) stats->token_lengths.push_back(static_cast<int>(tokens.size()));
  }
  return ds;
}

EncodedDataset encode_corpus(const std::vector<CorpusLine>& samples,
                             const Vocabulary& vocab, const FilterRules& rules,
                             Tokenizer& tokenizer, int max_len,
                             EncodeStats* stats) {
  return encode_tokens(tokenize_corpus(samples, rules, tokenizer), vocab,
                       max_len, stats);
}

}  // namespace tegru::textpipe
