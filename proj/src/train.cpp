#include "tegru/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace tegru::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("train config: " + msg);
  };
  if (batch_size < 1) fail("batch_size must be positive");
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(lr > Scalar(0))) fail("lr must be positive");
  if (!(decay_factor > Scalar(0)) || decay_factor > Scalar(1)) {
    fail("decay_factor must lie in (0, 1]");
  }
  if (decay_every < 1) fail("decay_every must be positive");
}

EvalReport EvalReport::from_counts(long tp, long tn, long fp, long fn) {
  if (tp < 0 || tn < 0 || fp < 0 || fn < 0) {
    throw std::invalid_argument("confusion counts must be nonnegative");
  }
  EvalReport r;
  r.tp = tp;
  r.tn = tn;
  r.fp = fp;
  r.fn = fn;
  long total = r.total();
  r.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  long f1_denom = 2 * tp + fp + fn;
  if (f1_denom > 0) {
    r.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(f1_denom);
  } else {
    r.f1 = 0.0;
    r.f1_degenerate = true;
  }
  return r;
}

Tensor nll_loss(const Tensor& log_probs, const std::vector<int>& labels) {
  if (log_probs.rank() != 2) {
    throw std::invalid_argument("nll_loss: log_probs must be [batch, classes]");
  }
  int b = log_probs.dim(0), classes = log_probs.dim(1);
  if (static_cast<std::size_t>(b) != labels.size()) {
    throw std::invalid_argument("nll_loss: " + std::to_string(labels.size()) +
                                " labels for a batch of " + std::to_string(b));
  }
  std::vector<Scalar> pick(static_cast<std::size_t>(b) *
                               static_cast<std::size_t>(classes),
                           Scalar(0));
  for (int i = 0; i < b; ++i) {
    int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) {
      throw std::invalid_argument("nll_loss: label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(classes) +
                                  ")");
    }
    pick[static_cast<std::size_t>(i) * static_cast<std::size_t>(classes) +
         static_cast<std::size_t>(y)] = Scalar(1);
  }
  Tensor onehot = Tensor::from_values(log_probs.shape(), std::move(pick));
  return scale(sum_all(mul(log_probs, onehot)),
               Scalar(-1) / static_cast<Scalar>(b));
}

Scalar schedule_lr(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("schedule: negative epoch");
  int decays = epoch / cfg.decay_every;
  double lr = static_cast<double>(cfg.lr) *
              std::pow(static_cast<double>(cfg.decay_factor), decays);
  return static_cast<Scalar>(lr);
}

void sgd_step(const nn::NamedTensors& params, Scalar lr) {
  for (const auto& [name, t] : params) {
    Tensor handle = t;
    if (!handle.has_grad()) continue;  // no gradient reached it, g = 0
    const auto& g = handle.grad();
    auto& v = handle.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

namespace {

// argmax with ties resolved to class 0
int predict(const Tensor& log_probs, int row) {
  Scalar lp0 = log_probs.values()[static_cast<std::size_t>(row) * 2];
  Scalar lp1 = log_probs.values()[static_cast<std::size_t>(row) * 2 + 1];
  return lp1 > lp0 ? 1 : 0;
}

void tally(EvalReport& counts, int pred, int label) {
  if (pred == 1 && label == 1) ++counts.tp;
  if (pred == 0 && label == 0) ++counts.tn;
  if (pred == 1 && label == 0) ++counts.fp;
  if (pred == 0 && label == 1) ++counts.fn;
}

}  // namespace

FitResult fit(model::ModelParams& params,
              const textpipe::EncodedDataset& train_set,
              const textpipe::EncodedDataset& valid_set, const TrainConfig& cfg,
              std::ostream* log) {
  cfg.validate();
  if (train_set.size() == 0 || valid_set.size() == 0) {
    throw std::invalid_argument("fit: training and validation sets must be "
                                "non-empty");
  }

  Rng rng(cfg.seed);
  nn::NamedTensors trainable = params.trainable_parameters();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  result.best = params.clone();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Scalar lr = schedule_lr(epoch, cfg);
    if (cfg.shuffle) rng.shuffle(order);

    double loss_sum = 0.0;
    long seen = 0;
    std::size_t steps =
        (train_set.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t step = 0; step < steps; ++step) {
      std::size_t begin = step * static_cast<std::size_t>(cfg.batch_size);
      std::size_t count = std::min(static_cast<std::size_t>(cfg.batch_size),
                                   train_set.size() - begin);
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                    order.begin() + static_cast<std::ptrdiff_t>(begin + count));
      textpipe::EncodedBatch batch = train_set.gather(rows);

      double loss_value;
      try {
        Tape tape;
        Tensor lp = model::forward(params, batch, true, &rng);
        Tensor loss = nll_loss(lp, batch.labels);
        loss_value = static_cast<double>(loss.scalar());
        tape.backward(loss);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("training diverged at epoch " +
                                 std::to_string(epoch) + " step " +
                                 std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("training diverged at epoch " +
                                 std::to_string(epoch) + " step " +
                                 std::to_string(step) + ": non-finite loss");
      }
      sgd_step(trainable, lr);
      for (auto& [name, t] : trainable) t.zero_grad();

      loss_sum += loss_value * static_cast<double>(count);
      seen += static_cast<long>(count);
    }

    EvalReport valid;
    try {
      valid = counts_only(params, valid_set, cfg.batch_size);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("training diverged by epoch " +
                               std::to_string(epoch) +
                               " (validation pass failed): " + e.what());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = static_cast<double>(lr);
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.valid_acc = valid.accuracy;
    rec.valid_f1 = valid.f1;
    result.history.push_back(rec);
    if (log) {
      (*log) << "epoch " << epoch << " lr " << rec.lr << " loss "
             << rec.train_loss << " valid_acc " << rec.valid_acc
             << " valid_f1 " << rec.valid_f1 << '\n';
    }

    if (valid.accuracy > result.best_valid_acc) {
      result.best_valid_acc = valid.accuracy;
      result.best_epoch = epoch;
      result.best = params.clone();
    }
  }
  return result;
}

EvalReport counts_only(const model::ModelParams& params,
                       const textpipe::EncodedDataset& data, int batch_size) {
  if (batch_size < 1) {
    throw std::invalid_argument("counts_only: batch_size must be positive");
  }
  EvalReport counts;
  for (std::size_t begin = 0; begin < data.size();
       begin += static_cast<std::size_t>(batch_size)) {
    textpipe::EncodedBatch batch =
        data.slice(begin, static_cast<std::size_t>(batch_size));
    Tensor lp = model::forward(params, batch, false);
    for (int i = 0; i < batch.batch; ++i) {
      tally(counts, predict(lp, i), batch.labels[static_cast<std::size_t>(i)]);
    }
  }
  return EvalReport::from_counts(counts.tp, counts.tn, counts.fp, counts.fn);
}

EvalReport evaluate(const model::ModelParams& params,
                    const textpipe::EncodedDataset& test_set) {
  if (test_set.size() == 0) {
    throw std::invalid_argument("evaluate: empty test set");
  }
  using clock = std::chrono::steady_clock;

  // untimed warm-up
  (void)model::forward(params, test_set.slice(0, 1), false);

  EvalReport counts;
  double total_ms = 0.0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    textpipe::EncodedBatch one = test_set.slice(i, 1);
    auto t0 = clock::now();
    Tensor lp = model::forward(params, one, false);
    auto t1 = clock::now();
    total_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
    tally(counts, predict(lp, 0), one.labels[0]);
  }
  EvalReport report =
      EvalReport::from_counts(counts.tp, counts.tn, counts.fp, counts.fn);
  report.mean_latency_ms = total_ms / static_cast<double>(test_set.size());
  report.latency_batch_size = 1;
  return report;
}

}  // namespace tegru::train
