#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace tegru::cli {

// Command implementations return process exit codes; run() wires them to
// argv. They are plain functions so tests can drive them directly.

struct PreprocessOptions {
  std::string corpus_path;
  std::string out_dir;
  int vocab_size = 200000;
  int max_len = 100;
  std::string emb_path;        // pretrained text embeddings (optional)
  std::string reuse_vocab;     // encode against an existing vocabulary
  std::string keep_marks;      // retained punctuation override
  std::string segmented_path;  // pre-segmented one-token-per-line sidecar
  std::string segment_cmd;     // external segmenter command
  std::uint64_t seed = 1;
};
int cmd_preprocess(const PreprocessOptions& opt, std::ostream& log);

struct TrainOptions {
  std::string train_path;
  std::string valid_path;
  std::string config_path;
  std::string out_dir;
  std::string emb_table_path;  // binary table from preprocess (optional)
  std::optional<std::uint64_t> seed_override;
};
int cmd_train(const TrainOptions& opt, std::ostream& log);

struct EvalOptions {
  std::string checkpoint_path;
  std::string test_path;
  std::string out_dir;  // optional; report also goes to the log
};
int cmd_eval(const EvalOptions& opt, std::ostream& log);

struct AblateOptions {
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string config_path;  // [model]/[train] base plus a [sweep] grid
  std::string out_dir;
  std::string emb_table_path;
  std::optional<std::uint64_t> seed_override;
};
int cmd_ablate(const AblateOptions& opt, std::ostream& log);

int run(int argc, const char* const* argv);

}  // namespace tegru::cli
