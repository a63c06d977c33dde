// Regenerates the synthetic sentiment corpus shipped under data/. The
// output is deterministic for a fixed seed; the committed files were made
// with the defaults below.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tegru/synthdata.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate the synthetic sentiment corpus"};
  std::string out_dir = "data";
  int samples = 5000;
  std::uint64_t seed = 2024;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--samples", samples, "total sample count");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    tegru::synthdata::SynthOptions opt;
    opt.samples = samples;
    opt.seed = seed;
    auto corpus = tegru::synthdata::make_corpus(opt);

    // 70/15/15 split; alternating labels keep every split balanced
    std::size_t n = corpus.size();
    std::size_t n_train = n * 7 / 10;
    std::size_t n_valid = n * 15 / 100;
    using Lines = std::vector<tegru::textpipe::CorpusLine>;
    Lines train(corpus.begin(), corpus.begin() + static_cast<std::ptrdiff_t>(n_train));
    Lines valid(corpus.begin() + static_cast<std::ptrdiff_t>(n_train),
                corpus.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
    Lines test(corpus.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid),
               corpus.end());

    fs::path out(out_dir);
    tegru::synthdata::write_corpus((out / "synthetic_full.tsv").string(), corpus);
    tegru::synthdata::write_corpus((out / "synthetic_train.tsv").string(), train);
    tegru::synthdata::write_corpus((out / "synthetic_valid.tsv").string(), valid);
    tegru::synthdata::write_corpus((out / "synthetic_test.tsv").string(), test);
    std::cout << "wrote " << n << " samples (" << train.size() << " train, "
              << valid.size() << " valid, " << test.size() << " test) to "
              << out_dir << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
