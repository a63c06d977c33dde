#include "tegru/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tegru/config.hpp"
#include "tegru/model.hpp"
#include "tegru/textpipe.hpp"
#include "tegru/train.hpp"

namespace tegru::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void ensure_out_dir(const std::string& dir) {
  if (dir.empty()) throw std::runtime_error("output directory not set");
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

double percentile(std::vector<int> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double pos = q * static_cast<double>(values.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  std::size_t hi = std::min(lo + 1, values.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return static_cast<double>(values[lo]) +
         frac * static_cast<double>(values[hi] - values[lo]);
}

std::string percent(double fraction) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << fraction * 100.0 << '%';
  return os.str();
}

std::string fixed4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

void check_sections(const config::ConfigFile& file,
                    std::initializer_list<const char*> allowed) {
  for (const std::string& name : file.section_names()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (name == a) ok = true;
    }
    if (!ok) {
      throw std::runtime_error("config: unknown section [" + name + "]");
    }
  }
}

textpipe::EncodedDataset load_dataset_checked(const std::string& path) {
  return textpipe::EncodedDataset::load(path);
}

// Embedding table for training: either the binary table from preprocess or
// a seeded random table sized to the dataset's vocabulary.
textpipe::EmbeddingTable resolve_embedding(const std::string& table_path,
                                           int vocab_size, int d_model,
                                           std::uint64_t seed,
                                           std::ostream& log) {
  if (table_path.empty()) {
    log << "embedding: random init (" << vocab_size << " x " << d_model
        << ", seed " << seed << ")\n";
    return textpipe::EmbeddingTable::random_init_sized(vocab_size, d_model,
                                                       seed);
  }
  textpipe::EmbeddingTable emb = textpipe::EmbeddingTable::load_binary(table_path);
  if (emb.vocab_size != vocab_size) {
    throw std::runtime_error(
        "embedding table covers a vocabulary of " +
        std::to_string(emb.vocab_size) + " entries but the dataset uses " +
        std::to_string(vocab_size));
  }
  log << "embedding: " << table_path << " (coverage "
      << percent(emb.coverage) << ")\n";
  return emb;
}

void require_same_encoding(const textpipe::EncodedDataset& a,
                           const textpipe::EncodedDataset& b,
                           const std::string& what) {
  if (a.vocab_size != b.vocab_size) {
    throw std::runtime_error(what + ": vocabulary sizes differ (" +
                             std::to_string(a.vocab_size) + " vs " +
                             std::to_string(b.vocab_size) + ")");
  }
  if (a.max_len != b.max_len) {
    throw std::runtime_error(what + ": alignment lengths differ (" +
                             std::to_string(a.max_len) + " vs " +
                             std::to_string(b.max_len) + ")");
  }
}

std::string history_jsonl(const std::vector<train::EpochRecord>& history) {
  std::ostringstream os;
  for (const auto& rec : history) {
    json j;
    j["epoch"] = rec.epoch;
    j["lr"] = rec.lr;
    j["train_loss"] = rec.train_loss;
    j["valid_acc"] = rec.valid_acc;
    j["valid_f1"] = rec.valid_f1;
    os << j.dump() << '\n';
  }
  return os.str();
}

json report_json(const std::string& method, const train::EvalReport& r) {
  json j;
  j["method"] = method;
  j["accuracy"] = r.accuracy;
  j["f1"] = r.f1;
  j["f1_degenerate"] = r.f1_degenerate;
  j["test_time_ms"] = r.mean_latency_ms;
  j["latency_batch_size"] = r.latency_batch_size;
  j["tp"] = r.tp;
  j["tn"] = r.tn;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  return j;
}

void print_report_table(std::ostream& log, const std::string& method,
                        const train::EvalReport& r) {
  log << std::left << std::setw(20) << "Method" << std::setw(12) << "Accuracy"
      << std::setw(12) << "F1" << "Test Time(ms)\n";
  log << std::left << std::setw(20) << method << std::setw(12)
      << percent(r.accuracy) << std::setw(12) << percent(r.f1)
      << fixed4(r.mean_latency_ms) << '\n';
}

}  // namespace

// ---- preprocess -----------------------------------------------------------

int cmd_preprocess(const PreprocessOptions& opt, std::ostream& log) {
  ensure_out_dir(opt.out_dir);
  fs::path out(opt.out_dir);

  textpipe::CorpusReadResult corpus = textpipe::read_corpus(opt.corpus_path);
  for (const auto& [line, reason] : corpus.errors) {
    log << opt.corpus_path << " line " << line << ": " << reason
        << " (skipped)\n";
  }

  textpipe::FilterRules rules =
      opt.keep_marks.empty() ? textpipe::FilterRules::defaults()
                             : textpipe::FilterRules::from_marks(opt.keep_marks);

  std::unique_ptr<textpipe::Tokenizer> tokenizer;
  if (!opt.segmented_path.empty()) {
    tokenizer = std::make_unique<textpipe::FileTokenizer>(opt.segmented_path);
  } else if (!opt.segment_cmd.empty()) {
    tokenizer = std::make_unique<textpipe::CommandTokenizer>(opt.segment_cmd);
  } else {
    tokenizer = std::make_unique<textpipe::WhitespaceTokenizer>();
  }

  textpipe::TokenizedCorpus tokens =
      textpipe::tokenize_corpus(corpus.samples, rules, *tokenizer);

  textpipe::Vocabulary vocab =
      opt.reuse_vocab.empty()
          ? textpipe::Vocabulary::build(tokens.samples, opt.vocab_size)
          : textpipe::Vocabulary::load(opt.reuse_vocab);

  textpipe::EncodeStats stats;
  textpipe::EncodedDataset ds =
      textpipe::encode_tokens(tokens, vocab, opt.max_len, &stats);

  ds.save((out / "dataset.txt").string());
  vocab.save((out / "vocab.tsv").string());

  json st;
  st["corpus"] = opt.corpus_path;
  st["samples_total"] =
      corpus.samples.size() + corpus.errors.size();
  st["lines_malformed"] = corpus.errors.size();
  st["samples_dropped_empty"] = stats.dropped_empty;
  st["samples_kept"] = ds.size();
  st["vocab_size"] = vocab.size();
  st["max_len"] = opt.max_len;
  st["retained_marks"] = rules.marks_utf8();
  if (!stats.token_lengths.empty()) {
    json lengths;
    lengths["p50"] = percentile(stats.token_lengths, 0.50);
    lengths["p90"] = percentile(stats.token_lengths, 0.90);
    lengths["p95"] = percentile(stats.token_lengths, 0.95);
    lengths["p99"] = percentile(stats.token_lengths, 0.99);
    lengths["max"] =
        *std::max_element(stats.token_lengths.begin(), stats.token_lengths.end());
    long within = std::count_if(
        stats.token_lengths.begin(), stats.token_lengths.end(),
        [&](int len) { return len <= opt.max_len; });
    lengths["fraction_within_max_len"] =
        static_cast<double>(within) /
        static_cast<double>(stats.token_lengths.size());
    st["token_lengths"] = lengths;
  }

  if (!opt.emb_path.empty()) {
    textpipe::EmbeddingTable emb =
        textpipe::EmbeddingTable::load_text(opt.emb_path, vocab, opt.seed);
    emb.save_binary((out / "embedding.bin").string());
    st["embedding_coverage"] = emb.coverage;
    st["embedding_dim"] = emb.dim;
    log << "embedding coverage: " << percent(emb.coverage) << " of "
        << vocab.size() - 2 << " vocabulary tokens\n";
  }

  write_text(out / "stats.json", st.dump(2) + "\n");

  log << "kept " << ds.size() << " samples (" << stats.dropped_empty
      << " empty after filtering, " << corpus.errors.size()
      << " malformed lines)\n";
  log << "vocabulary: " << vocab.size() << " entries -> "
      << (out / "vocab.tsv").string() << '\n';
  log << "dataset: " << (out / "dataset.txt").string() << '\n';
  return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const TrainOptions& opt, std::ostream& log) {
  config::ConfigFile file = config::ConfigFile::parse_file(opt.config_path);
  check_sections(file, {"model", "train"});
  model::ModelConfig mc = config::read_model_config(file);
  train::TrainConfig tc = config::read_train_config(file);
  if (opt.seed_override) {
    mc.seed = *opt.seed_override;
    tc.seed = *opt.seed_override;
  }

  textpipe::EncodedDataset train_set = load_dataset_checked(opt.train_path);
  textpipe::EncodedDataset valid_set = load_dataset_checked(opt.valid_path);
  require_same_encoding(train_set, valid_set, "train/valid datasets");
  if (train_set.max_len != mc.max_len) {
    throw std::runtime_error(
        "dataset is aligned to " + std::to_string(train_set.max_len) +
        " tokens but the config expects max_len " + std::to_string(mc.max_len));
  }

  textpipe::EmbeddingTable emb = resolve_embedding(
      opt.emb_table_path, train_set.vocab_size, mc.d_model, mc.seed, log);

  ensure_out_dir(opt.out_dir);
  fs::path out(opt.out_dir);
  write_text(out / "resolved.cfg", config::render_resolved(mc, tc));

  model::ModelParams params = model::build(mc, emb);
  log << model::kind_name(mc.kind) << ": " << params.parameter_count()
      << " parameters, " << train_set.size() << " train / "
      << valid_set.size() << " valid samples\n";

  train::FitResult result = train::fit(params, train_set, valid_set, tc, &log);

  write_text(out / "history.jsonl", history_jsonl(result.history));
  model::save(result.best, (out / "checkpoint.ckpt").string());

  log << "best epoch " << result.best_epoch << " (valid accuracy "
      << percent(result.best_valid_acc) << ") -> "
      << (out / "checkpoint.ckpt").string() << '\n';
  return 0;
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const EvalOptions& opt, std::ostream& log) {
  if (!fs::exists(opt.checkpoint_path)) {
    throw std::runtime_error("checkpoint not found: " + opt.checkpoint_path);
  }
  model::ModelParams params = model::load(opt.checkpoint_path);
  textpipe::EncodedDataset test_set = load_dataset_checked(opt.test_path);
  model::check_compatible(params, test_set.vocab_size);
  if (test_set.max_len != params.config.max_len) {
    throw std::runtime_error(
        "dataset is aligned to " + std::to_string(test_set.max_len) +
        " tokens but the checkpoint expects max_len " +
        std::to_string(params.config.max_len));
  }

  train::EvalReport report = train::evaluate(params, test_set);
  std::string method = model::kind_name(params.config.kind);
  print_report_table(log, method, report);

  if (!opt.out_dir.empty()) {
    ensure_out_dir(opt.out_dir);
    write_text(fs::path(opt.out_dir) / "eval.json",
               report_json(method, report).dump(2) + "\n");
  }
  return 0;
}

// ---- ablate -----------------------------------------------------------------

int cmd_ablate(const AblateOptions& opt, std::ostream& log) {
  config::ConfigFile file = config::ConfigFile::parse_file(opt.config_path);
  check_sections(file, {"model", "train", "sweep"});
  model::ModelConfig base_mc = config::read_model_config(file);
  train::TrainConfig tc = config::read_train_config(file);
  if (opt.seed_override) {
    base_mc.seed = *opt.seed_override;
    tc.seed = *opt.seed_override;
  }

  config::SectionReader sweep(file, "sweep");
  std::vector<std::string> kind_names = sweep.get_list("kinds");
  std::vector<std::string> dff_list = sweep.get_list("d_ff");
  std::vector<std::string> heads_list = sweep.get_list("heads");
  std::vector<std::string> dropout_list = sweep.get_list("dropout");
  sweep.finish();

  std::vector<model::ModelKind> kinds;
  if (kind_names.empty()) {
    kinds.push_back(base_mc.kind);
  } else {
    for (const std::string& name : kind_names) {
      auto k = model::parse_kind(name);
      if (!k) {
        throw std::runtime_error("[sweep] kinds: unknown model '" + name + "'");
      }
      kinds.push_back(*k);
    }
  }
  auto to_ints = [](const std::vector<std::string>& in, int fallback,
                    const char* what) {
    std::vector<int> out;
    if (in.empty()) {
      out.push_back(fallback);
      return out;
    }
    for (const std::string& s : in) {
      try {
        out.push_back(std::stoi(s));
      } catch (const std::exception&) {
        throw std::runtime_error(std::string("[sweep] ") + what + ": '" + s +
                                 "' is not an integer");
      }
    }
    return out;
  };
  auto to_reals = [](const std::vector<std::string>& in, double fallback) {
    std::vector<double> out;
    if (in.empty()) {
      out.push_back(fallback);
      return out;
    }
    for (const std::string& s : in) {
      try {
        out.push_back(std::stod(s));
      } catch (const std::exception&) {
        throw std::runtime_error("[sweep] dropout: '" + s +
                                 "' is not a number");
      }
    }
    return out;
  };
  std::vector<int> dffs = to_ints(dff_list, base_mc.d_ff, "d_ff");
  std::vector<int> heads = to_ints(heads_list, base_mc.n_heads, "heads");
  std::vector<double> dropouts =
      to_reals(dropout_list, static_cast<double>(base_mc.dropout));

  textpipe::EncodedDataset train_set = load_dataset_checked(opt.train_path);
  textpipe::EncodedDataset valid_set = load_dataset_checked(opt.valid_path);
  textpipe::EncodedDataset test_set = load_dataset_checked(opt.test_path);
  require_same_encoding(train_set, valid_set, "train/valid datasets");
  require_same_encoding(train_set, test_set, "train/test datasets");

  textpipe::EmbeddingTable emb = resolve_embedding(
      opt.emb_table_path, train_set.vocab_size, base_mc.d_model, base_mc.seed,
      log);

  ensure_out_dir(opt.out_dir);
  fs::path out(opt.out_dir);

  std::ostringstream table;
  table << std::left << std::setw(20) << "Method" << std::setw(8) << "d_ff"
        << std::setw(8) << "Heads" << std::setw(10) << "Dropout"
        << std::setw(12) << "Accuracy" << std::setw(12) << "F1"
        << std::setw(16) << "Test Time(ms)" << "Status\n";
  std::ostringstream rows;

  for (model::ModelKind kind : kinds) {
    for (int dff : dffs) {
      for (int nh : heads) {
        for (double dr : dropouts) {
          model::ModelConfig mc = base_mc;
          mc.kind = kind;
          mc.d_ff = dff;
          mc.n_heads = nh;
          mc.dropout = static_cast<Scalar>(dr);

          json row;
          row["kind"] = model::kind_name(kind);
          row["d_ff"] = dff;
          row["heads"] = nh;
          row["dropout"] = dr;

          std::string status = "ok";
          train::EvalReport report;
          int best_epoch = -1;
          try {
            mc.validate();
            // every cell trains from scratch for comparability
            model::ModelParams params = model::build(mc, emb);
            train::FitResult fitted =
                train::fit(params, train_set, valid_set, tc);
            best_epoch = fitted.best_epoch;
            report = train::evaluate(fitted.best, test_set);
          } catch (const std::exception& e) {
            status = std::string("failed: ") + e.what();
          }

          row["status"] = status;
          if (status == "ok") {
            row["accuracy"] = report.accuracy;
            row["f1"] = report.f1;
            row["test_time_ms"] = report.mean_latency_ms;
            row["best_epoch"] = best_epoch;
          }
          rows << row.dump() << '\n';

          table << std::left << std::setw(20) << model::kind_name(kind)
                << std::setw(8) << dff << std::setw(8) << nh << std::setw(10)
                << config::format_real(dr);
          if (status == "ok") {
            table << std::setw(12) << percent(report.accuracy) << std::setw(12)
                  << percent(report.f1) << std::setw(16)
                  << fixed4(report.mean_latency_ms) << "ok\n";
          } else {
            table << std::setw(12) << "-" << std::setw(12) << "-"
                  << std::setw(16) << "-" << status << '\n';
          }
          log << model::kind_name(kind) << " d_ff=" << dff << " heads=" << nh
              << " dropout=" << config::format_real(dr) << ": " << status
              << '\n';
        }
      }
    }
  }

  write_text(out / "ablation.jsonl", rows.str());
  write_text(out / "ablation.txt", table.str());
  log << table.str();
  return 0;
}

// ---- argv wiring -------------------------------------------------------------

int run(int argc, const char* const* argv) {
  CLI::App app{
      "tegru: sequence classification with a transformer encoder feeding a "
      "recurrent layer, plus the recurrent/attention baseline zoo"};
  app.require_subcommand(1);

  PreprocessOptions pre;
  auto* cp = app.add_subcommand(
      "preprocess", "filter, tokenize and encode a labeled corpus");
  cp->add_option("corpus", pre.corpus_path,
                 "UTF-8 corpus, one 'label<TAB>text' per line")
      ->required();
  cp->add_option("--out", pre.out_dir, "output directory")->required();
  cp->add_option("--vocab-size", pre.vocab_size,
                 "highest-frequency tokens kept (PAD/UNK included)");
  cp->add_option("--max-len", pre.max_len,
                 "row length: front-pad / front-truncate to this");
  cp->add_option("--emb", pre.emb_path,
                 "pretrained word vectors ('count dim' header text format)");
  cp->add_option("--reuse-vocab", pre.reuse_vocab,
                 "encode with an existing vocab.tsv instead of building one");
  cp->add_option("--keep", pre.keep_marks,
                 "punctuation marks to retain (default: clause marks)");
  cp->add_option("--segmented", pre.segmented_path,
                 "pre-segmented tokens, one per line, blank line per sample");
  cp->add_option("--segment-cmd", pre.segment_cmd,
                 "external segmenter command reading stdin, one token per line");
  cp->add_option("--seed", pre.seed, "seed for missing-embedding rows");

  TrainOptions tr;
  auto* ct = app.add_subcommand("train", "train a model on encoded datasets");
  ct->add_option("--train", tr.train_path, "encoded training dataset")
      ->required();
  ct->add_option("--valid", tr.valid_path, "encoded validation dataset")
      ->required();
  ct->add_option("--config", tr.config_path, "[model]/[train] config file")
      ->required();
  ct->add_option("--out", tr.out_dir, "output directory")->required();
  ct->add_option("--emb-table", tr.emb_table_path,
                 "embedding.bin from preprocess (default: random init)");
  std::uint64_t train_seed = 0;
  auto* ts = ct->add_option("--seed", train_seed,
                            "override both model and train seeds");

  EvalOptions ev;
  auto* ce = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
  ce->add_option("--checkpoint", ev.checkpoint_path, "model checkpoint")
      ->required();
  ce->add_option("--test", ev.test_path, "encoded test dataset")->required();
  ce->add_option("--out", ev.out_dir, "optional directory for eval.json");

  AblateOptions ab;
  auto* ca = app.add_subcommand(
      "ablate", "train and evaluate every cell of a [sweep] grid");
  ca->add_option("--train", ab.train_path, "encoded training dataset")
      ->required();
  ca->add_option("--valid", ab.valid_path, "encoded validation dataset")
      ->required();
  ca->add_option("--test", ab.test_path, "encoded test dataset")->required();
  ca->add_option("--config", ab.config_path,
                 "[model]/[train] base config with a [sweep] section")
      ->required();
  ca->add_option("--out", ab.out_dir, "output directory")->required();
  ca->add_option("--emb-table", ab.emb_table_path,
                 "embedding.bin from preprocess (default: random init)");
  std::uint64_t ablate_seed = 0;
  auto* as = ca->add_option("--seed", ablate_seed,
                            "override both model and train seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (cp->parsed()) return cmd_preprocess(pre, std::cout);
    if (ct->parsed()) {
      if (ts->count()) tr.seed_override = train_seed;
      return cmd_train(tr, std::cout);
    }
    if (ce->parsed()) return cmd_eval(ev, std::cout);
    if (ca->parsed()) {
      if (as->count()) ab.seed_override = ablate_seed;
      return cmd_ablate(ab, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace tegru::cli
