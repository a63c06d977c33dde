#include "tegru/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace tegru::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text,
                                    const std::string& label) {
  ConfigFile file;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw std::runtime_error(label + " line " + std::to_string(line_no) +
                                 ": unterminated section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw std::runtime_error(label + " line " + std::to_string(line_no) +
                                 ": empty section name");
      }
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(label + " line " + std::to_string(line_no) +
                               ": expected 'key = value'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error(label + " line " + std::to_string(line_no) +
                               ": empty key");
    }
    if (section.empty()) {
      throw std::runtime_error(label + " line " + std::to_string(line_no) +
                               ": key '" + key + "' outside any [section]");
    }
    for (const Entry& e : file.entries) {
      if (e.section == section && e.key == key) {
        throw std::runtime_error(label + " line " + std::to_string(line_no) +
                                 ": duplicate key '" + key + "' in [" +
                                 section + "]");
      }
    }
    file.entries.push_back({section, key, value, line_no});
  }
  return file;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path);
}

bool ConfigFile::has_section(const std::string& name) const {
  for (const Entry& e : entries) {
    if (e.section == name) return true;
  }
  return false;
}

std::vector<std::string> ConfigFile::section_names() const {
  std::vector<std::string> names;
  for (const Entry& e : entries) {
    if (std::find(names.begin(), names.end(), e.section) == names.end()) {
      names.push_back(e.section);
    }
  }
  return names;
}

SectionReader::SectionReader(const ConfigFile& file, std::string section)
    : section_(std::move(section)) {
  for (const ConfigFile::Entry& e : file.entries) {
    if (e.section == section_) entries_.push_back(e);
  }
  consumed_.assign(entries_.size(), false);
}

const std::string* SectionReader::find(const std::string& key) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].key == key) {
      consumed_[i] = true;
      return &entries_[i].value;
    }
  }
  return nullptr;
}

bool SectionReader::has(const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.key == key) return true;
  }
  return false;
}

std::string SectionReader::get_string(const std::string& key,
                                      const std::string& fallback) {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

long SectionReader::get_int(const std::string& key, long fallback) {
  const std::string* v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    long out = std::stol(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::runtime_error("[" + section_ + "] " + key + ": '" + *v +
                             "' is not an integer");
  }
}

double SectionReader::get_real(const std::string& key, double fallback) {
  const std::string* v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::runtime_error("[" + section_ + "] " + key + ": '" + *v +
                             "' is not a number");
  }
}

bool SectionReader::get_bool(const std::string& key, bool fallback) {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::string low;
  for (char c : *v) {
    low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (low == "true" || low == "1" || low == "yes" || low == "on") return true;
  if (low == "false" || low == "0" || low == "no" || low == "off") return false;
  throw std::runtime_error("[" + section_ + "] " + key + ": '" + *v +
                           "' is not a boolean");
}

std::uint64_t SectionReader::get_u64(const std::string& key,
                                     std::uint64_t fallback) {
  const std::string* v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    unsigned long long out = std::stoull(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::runtime_error("[" + section_ + "] " + key + ": '" + *v +
                             "' is not an unsigned integer");
  }
}

std::vector<std::string> SectionReader::get_list(const std::string& key) {
  const std::string* v = find(key);
  std::vector<std::string> out;
  if (!v) return out;
  std::istringstream is(*v);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) {
    throw std::runtime_error("[" + section_ + "] " + key + ": empty list");
  }
  return out;
}

void SectionReader::finish() const {
  std::string unknown;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!consumed_[i]) {
      if (!unknown.empty()) unknown += ", ";
      unknown += "'" + entries_[i].key + "'";
    }
  }
  if (!unknown.empty()) {
    throw std::runtime_error("unknown key(s) in [" + section_ +
                             "]: " + unknown);
  }
}

model::ModelConfig read_model_config(const ConfigFile& file) {
  model::ModelConfig c;
  SectionReader r(file, "model");
  std::string kind = r.get_string("kind", model::kind_name(c.kind));
  auto parsed = model::parse_kind(kind);
  if (!parsed) {
    throw std::runtime_error("[model] kind: unknown model '" + kind + "'");
  }
  c.kind = *parsed;
  c.d_model = static_cast<int>(r.get_int("d_model", c.d_model));
  c.max_len = static_cast<int>(r.get_int("max_len", c.max_len));
  c.n_heads = static_cast<int>(r.get_int("n_heads", c.n_heads));
  c.d_ff = static_cast<int>(r.get_int("d_ff", c.d_ff));
  c.encoder_layers =
      static_cast<int>(r.get_int("encoder_layers", c.encoder_layers));
  c.recurrent_hidden =
      static_cast<int>(r.get_int("recurrent_hidden", c.recurrent_hidden));
  c.dropout = static_cast<Scalar>(
      r.get_real("dropout", static_cast<double>(c.dropout)));
  c.trainable_embeddings =
      r.get_bool("trainable_embeddings", c.trainable_embeddings);
  c.gru_bias = r.get_bool("gru_bias", c.gru_bias);
  c.attention_mask = r.get_bool("attention_mask", c.attention_mask);
  c.seed = r.get_u64("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

train::TrainConfig read_train_config(const ConfigFile& file) {
  train::TrainConfig c;
  SectionReader r(file, "train");
  c.batch_size = static_cast<int>(r.get_int("batch_size", c.batch_size));
  c.epochs = static_cast<int>(r.get_int("epochs", c.epochs));
  c.lr = static_cast<Scalar>(r.get_real("lr", static_cast<double>(c.lr)));
  c.decay_factor = static_cast<Scalar>(
      r.get_real("decay_factor", static_cast<double>(c.decay_factor)));
  c.decay_every = static_cast<int>(r.get_int("decay_every", c.decay_every));
  c.seed = r.get_u64("seed", c.seed);
  c.shuffle = r.get_bool("shuffle", c.shuffle);
  r.finish();
  c.validate();
  return c;
}

std::string format_real(double value) {
  for (int precision = 1; precision <= 17; ++precision) {
    std::ostringstream os;
    os << std::setprecision(precision) << value;
    double back = 0;
    std::istringstream(os.str()) >> back;
    if (back == value) return os.str();
  }
  std::ostringstream os;
  os << std::setprecision(17) << value;
  return os.str();
}

std::string render_resolved(const model::ModelConfig& mc,
                            const train::TrainConfig& tc) {
  std::ostringstream os;
  os << "[model]\n";
  os << "kind = " << model::kind_name(mc.kind) << '\n';
  os << "d_model = " << mc.d_model << '\n';
  os << "max_len = " << mc.max_len << '\n';
  os << "n_heads = " << mc.n_heads << '\n';
  os << "d_ff = " << mc.d_ff << '\n';
  os << "encoder_layers = " << mc.encoder_layers << '\n';
  os << "recurrent_hidden = " << mc.recurrent_hidden << '\n';
  os << "dropout = " << format_real(static_cast<double>(mc.dropout)) << '\n';
  os << "trainable_embeddings = " << (mc.trainable_embeddings ? "true" : "false")
     << '\n';
  os << "gru_bias = " << (mc.gru_bias ? "true" : "false") << '\n';
  os << "attention_mask = " << (mc.attention_mask ? "true" : "false") << '\n';
  os << "seed = " << mc.seed << '\n';
  os << '\n';
  os << "[train]\n";
  os << "batch_size = " << tc.batch_size << '\n';
  os << "epochs = " << tc.epochs << '\n';
  os << "lr = " << format_real(static_cast<double>(tc.lr)) << '\n';
  os << "decay_factor = " << format_real(static_cast<double>(tc.decay_factor))
     << '\n';
  os << "decay_every = " << tc.decay_every << '\n';
  os << "seed = " << tc.seed << '\n';
  os << "shuffle = " << (tc.shuffle ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace tegru::config
