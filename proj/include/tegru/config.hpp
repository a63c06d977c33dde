#pragma once

#include <string>
#include <vector>

#include "tegru/model.hpp"
#include "tegru/train.hpp"

namespace tegru::config {

// Flat "key = value" files with [section] headers and # comments.
struct ConfigFile {
  struct Entry {
    std::string section, key, value;
    int line = 0;
  };
  std::vector<Entry> entries;

  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text,
                                 const std::string& label);
  bool has_section(const std::string& name) const;
  std::vector<std::string> section_names() const;
};

// Typed access that tracks which keys were read; finish() rejects a config
// with unread (unknown) keys instead of silently ignoring typos.
class SectionReader {
 public:
  SectionReader(const ConfigFile& file, std::string section);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback);
  long get_int(const std::string& key, long fallback);
  double get_real(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  // comma-separated list; empty when the key is absent
  std::vector<std::string> get_list(const std::string& key);

  void finish() const;  // throws listing every unconsumed key

 private:
  const std::string* find(const std::string& key);
  std::string section_;
  std::vector<ConfigFile::Entry> entries_;
  std::vector<bool> consumed_;
};

// [model] and [train] sections with every default made explicit; unknown
// keys are errors.
model::ModelConfig read_model_config(const ConfigFile& file);
train::TrainConfig read_train_config(const ConfigFile& file);

// Canonical snapshot: every field explicit, fixed order, round-trippable.
std::string render_resolved(const model::ModelConfig& mc,
                            const train::TrainConfig& tc);

// Shortest decimal rendering that parses back to the same double.
std::string format_real(double value);

}  // namespace tegru::config
