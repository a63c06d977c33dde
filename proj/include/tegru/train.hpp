#pragma once

#include <iosfwd>
#include <vector>

#include "tegru/model.hpp"

namespace tegru::train {

struct TrainConfig {
  int batch_size = 128;
  int epochs = 100;
  Scalar lr = Scalar(0.002);
  Scalar decay_factor = Scalar(0.5);
  int decay_every = 50;  // epochs between decays
  std::uint64_t seed = 1;
  bool shuffle = true;

  void validate() const;
};

struct EvalReport {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  // 2TP+FP+FN was zero, so F1 is reported as 0 by convention.
  bool f1_degenerate = false;
  double mean_latency_ms = 0.0;
  int latency_batch_size = 1;

  long total() const { return tp + tn + fp + fn; }
  static EvalReport from_counts(long tp, long tn, long fp, long fn);
};

// Mean over the batch of -log_probs[i, label_i]; differentiable.
Tensor nll_loss(const Tensor& log_probs, const std::vector<int>& labels);

// lr(e) = lr0 * decay_factor^floor(e / decay_every), epochs counted from 0.
Scalar schedule_lr(int epoch, const TrainConfig& cfg);

// p <- p - lr * grad for every tensor that received a gradient. Grad
// buffers are left in place; callers clear them.
void sgd_step(const nn::NamedTensors& params, Scalar lr);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double valid_acc = 0.0;
  double valid_f1 = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  model::ModelParams best;  // highest validation accuracy, earliest on ties
  int best_epoch = -1;
  double best_valid_acc = -1.0;
};

// Seeded mini-batch SGD over the training set; per-epoch validation pass;
// deterministic for a fixed seed. A non-finite loss aborts with a
// diagnostic naming the epoch and step.
FitResult fit(model::ModelParams& params,
              const textpipe::EncodedDataset& train_set,
              const textpipe::EncodedDataset& valid_set,
              const TrainConfig& cfg, std::ostream* log = nullptr);

// Batched prediction counts (validation fast path, no latency protocol).
EvalReport counts_only(const model::ModelParams& params,
                       const textpipe::EncodedDataset& data, int batch_size);

// Full test protocol: counts plus per-sample wall time at batch size 1,
// with one untimed warm-up pass. Counts are pure; latency is not.
EvalReport evaluate(const model::ModelParams& params,
                    const textpipe::EncodedDataset& test_set);

}  // namespace tegru::train
