#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tegru/textpipe.hpp"

namespace tegru::synthdata {

// Deterministic synthetic sentiment corpus, pre-segmented (space-separated
// tokens). Sentiment keywords decide the label; a negator token immediately
// before a keyword flips that keyword, so the label genuinely depends on
// token order, with distractors and stray punctuation for noise.
struct SynthOptions {
  int samples = 5000;
  std::uint64_t seed = 2024;
};

std::vector<textpipe::CorpusLine> make_corpus(const SynthOptions& opt);

// Ground-truth labeling rule used by the generator (exposed for tests):
// scan tokens, each keyword contributes +1/-1, flipped when the previous
// token is the negator; the sign of the sum is the label.
int label_of(const std::vector<std::string>& tokens);

void write_corpus(const std::string& path,
                  const std::vector<textpipe::CorpusLine>& lines);

}  // namespace tegru::synthdata
