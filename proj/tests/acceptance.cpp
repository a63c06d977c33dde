// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// fails. Runs under the f64 build (the gradient checks require it).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "tegru/cli.hpp"
#include "tegru/config.hpp"
#include "tegru/model.hpp"
#include "tegru/synthdata.hpp"
#include "tegru/train.hpp"

using namespace tegru;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "tegru_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("missing file: " + p.string());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::vector<double> to_doubles(const Tensor& t) {
  return std::vector<double>(t.values().begin(), t.values().end());
}

textpipe::EmbeddingTable toy_embedding(int vocab, int dim, double bound,
                                       std::uint64_t seed) {
  textpipe::EmbeddingTable t;
  t.vocab_size = vocab;
  t.dim = dim;
  t.vocab_hash = 1;
  t.data.assign(static_cast<std::size_t>(vocab) * static_cast<std::size_t>(dim),
                0.0);
  Rng rng(seed);
  for (int i = dim; i < vocab * dim; ++i) {
    t.data[static_cast<std::size_t>(i)] = rng.uniform(-bound, bound);
  }
  return t;
}

textpipe::EncodedDataset toy_dataset(int n, int max_len, int vocab,
                                     std::uint64_t seed) {
  textpipe::EncodedDataset ds;
  ds.max_len = max_len;
  ds.vocab_size = vocab;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < max_len; ++t) {
      ds.indices.push_back(2 + static_cast<int>(rng.uniform_int(
                                   static_cast<std::uint64_t>(vocab - 2))));
    }
    ds.labels.push_back(i % 2);
    ds.lengths.push_back(max_len);
  }
  return ds;
}

model::ModelConfig toy_model_config(model::ModelKind kind) {
  model::ModelConfig c;
  c.kind = kind;
  c.d_model = 8;
  c.max_len = 6;
  c.n_heads = 2;
  c.d_ff = 16;
  c.recurrent_hidden = 8;
  c.dropout = Scalar(0);
  c.seed = 11;
  return c;
}

Tensor permute_positions(const Tensor& x, const std::vector<int>& perm) {
  int b = x.dim(0), n = x.dim(1), d = x.dim(2);
  std::vector<Scalar> out(x.numel());
  for (int bi = 0; bi < b; ++bi) {
    for (int t = 0; t < n; ++t) {
      for (int j = 0; j < d; ++j) {
        out[(static_cast<std::size_t>(bi) * n + t) * d + j] =
            x.values()[(static_cast<std::size_t>(bi) * n +
                        static_cast<std::size_t>(
                            perm[static_cast<std::size_t>(t)])) *
                           d +
                       j];
      }
    }
  }
  return Tensor::from_values({b, n, d}, std::move(out));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.values()[i]) -
                             static_cast<double>(b.values()[i])));
  }
  return m;
}

struct Check {
  bool ok = true;
  std::ostringstream detail;
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (detail.tellp() > 0) detail << "; ";
      detail << what;
    }
  }
};

// ---- criterion 1: gradient suite ------------------------------------------

bool criterion_gradient_suite(std::string& detail) {
  Check c;
  Rng rng(2025);
  oracle::GradCheckOptions opt;  // step 1e-5, rel tol 1e-4

  auto leaf = [&](Shape shape) {
    return Tensor::uniform(std::move(shape), -1, 1, rng).set_requires_grad(true);
  };
  // The loss must be a pure function of the leaves, so the weighting
  // coefficients are drawn once per op, outside the loss closure.
  auto run_op = [&](const char* name, std::vector<Tensor> leaves,
                    std::function<Tensor()> op_output) {
    Tensor coeff = Tensor::uniform(op_output().shape(), -1, 1, rng);
    auto loss = [&op_output, coeff] { return sum_all(mul(op_output(), coeff)); };
    auto rep = oracle::check_gradients(std::move(leaves), loss, opt);
    c.require(rep.ok, std::string(name) + " rel err " +
                          std::to_string(rep.max_rel_err) + " (" + rep.worst +
                          ")");
  };

  {
    auto a = leaf({3, 4});
    auto b = leaf({4, 2});
    run_op("matmul", {a, b}, [&] { return matmul(a, b); });
    auto ab = leaf({2, 3, 4});
    auto bb = leaf({4, 5});
    run_op("matmul-batched", {ab, bb}, [&] { return matmul(ab, bb); });
  }
  {
    auto a = leaf({2, 5});
    auto b = leaf({2, 5});
    run_op("add", {a, b}, [&] { return add(a, b); });
    run_op("sub", {a, b}, [&] { return sub(a, b); });
    run_op("mul", {a, b}, [&] { return mul(a, b); });
    run_op("scale", {a}, [&] { return scale(a, Scalar(0.7)); });
  }
  {
    auto x = leaf({3, 4});
    auto bias = leaf({4});
    run_op("add_rowwise", {x, bias},
           [&] { return add_rowwise(x, bias); });
  }
  {
    std::vector<Scalar> vals;
    Rng r2(7);
    for (int i = 0; i < 12; ++i) {
      double v = r2.uniform(0.15, 1.0);
      vals.push_back(static_cast<Scalar>(r2.uniform() < 0.5 ? -v : v));
    }
    auto x = Tensor::from_values({3, 4}, vals).set_requires_grad(true);
    run_op("relu", {x}, [&] { return relu(x); });
    run_op("sigmoid", {x}, [&] { return sigmoid(x); });
    run_op("tanh", {x}, [&] { return tegru::tanh(x); });
  }
  {
    auto x = leaf({2, 6});
    run_op("softmax", {x}, [&] { return softmax(x, -1); });
    run_op("log_softmax", {x}, [&] { return log_softmax(x, -1); });
    auto gain = leaf({6});
    auto bias = leaf({6});
    run_op("layernorm", {x, gain, bias},
           [&] { return layernorm(x, gain, bias, Scalar(1e-5)); });
  }
  {
    auto a = leaf({2, 3});
    auto b = leaf({2, 2});
    run_op("concat_last_axis", {a, b},
           [&] { return concat_last_axis({a, b}); });
    auto x = leaf({2, 3, 4});
    run_op("transpose_last_two", {x},
           [&] { return transpose_last_two(x); });
    run_op("reshape", {x}, [&] { return reshape(x, {6, 4}); });
    run_op("select_axis1", {x}, [&] { return select_axis1(x, 1); });
    auto s0 = leaf({2, 4});
    auto s1 = leaf({2, 4});
    run_op("stack_axis1", {s0, s1},
           [&] { return stack_axis1({s0, s1}); });
    run_op("sum_all", {x}, [&] { return sum_all(x); });
    run_op("mean_all", {x}, [&] { return mean_all(x); });
  }
  {
    auto table = leaf({6, 3});
    std::vector<int> idx = {1, 3, 5, 2, 4, 1};
    run_op("embedding_lookup", {table},
           [&] { return embedding_lookup(table, idx, 2, 3); });
  }
  {
    auto lp = leaf({3, 2});
    std::vector<int> labels = {0, 1, 0};
    run_op("nll_loss", {lp}, [&] { return train::nll_loss(lp, labels); });
  }

  // every ModelKind end to end at toy shapes; heads 1 and 2 for the flagship
  auto batch = [&](std::uint64_t seed) {
    textpipe::EncodedBatch b;
    b.batch = 2;
    b.max_len = 4;
    b.vocab_size = 10;
    Rng r(seed);
    for (int i = 0; i < 8; ++i) {
      b.indices.push_back(1 + static_cast<int>(r.uniform_int(9)));
    }
    b.labels = {0, 1};
    b.lengths = {4, 4};
    return b;
  }(77);
  auto emb = toy_embedding(10, 8, 0.1, 5);
  auto coeff = Tensor::uniform({2, 2}, -1, 1, rng);

  auto check_model = [&](model::ModelConfig mc, const std::string& tag) {
    auto params = model::build(mc, emb);
    std::vector<Tensor> leaves;
    for (auto& [name, t] : params.trainable_parameters()) leaves.push_back(t);
    auto rep = oracle::check_gradients(leaves, [&] {
      return sum_all(mul(model::forward(params, batch, false), coeff));
    });
    c.require(rep.ok, tag + " rel err " + std::to_string(rep.max_rel_err));
  };

  for (model::ModelKind kind : model::all_kinds()) {
    check_model(toy_model_config(kind), model::kind_name(kind));
  }
  auto single_head = toy_model_config(model::ModelKind::TEGRU);
  single_head.n_heads = 1;
  check_model(single_head, "T-E-GRU(heads=1)");

  detail = c.ok ? "all primitives and 21 model kinds within 1e-4"
                : c.detail.str();
  return c.ok;
}

// ---- criterion 2: attention oracle -------------------------------------------

bool criterion_attention_oracle(std::string& detail) {
  Rng rng(929);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    int b = 1 + static_cast<int>(rng.uniform_int(2));
    int n = 1 + static_cast<int>(rng.uniform_int(4));
    int heads = rng.uniform_int(2) == 0 ? 1 : 2;
    int d = heads == 1 ? 1 + static_cast<int>(rng.uniform_int(4))
                       : 2 * (1 + static_cast<int>(rng.uniform_int(2)));
    auto p = nn::MultiHeadAttentionParams::init(d, heads, rng);
    auto x = Tensor::uniform({b, n, d}, -2, 2, rng);
    auto got = nn::multi_head_self_attention(x, p, nullptr);

    std::vector<std::vector<double>> wq, wk, wv;
    for (int h = 0; h < heads; ++h) {
      wq.push_back(to_doubles(p.w_q[static_cast<std::size_t>(h)]));
      wk.push_back(to_doubles(p.w_k[static_cast<std::size_t>(h)]));
      wv.push_back(to_doubles(p.w_v[static_cast<std::size_t>(h)]));
    }
    auto expect = oracle::brute_force_mha(to_doubles(x), b, n, d, wq, wk, wv,
                                          to_doubles(p.w_out), heads);
    for (std::size_t i = 0; i < expect.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(got.values()[i]) -
                                       expect[i]));
    }
  }
  std::ostringstream os;
  os << "200 instances, max deviation " << worst;
  detail = os.str();
  return worst < 1e-6;
}

// ---- criterion 3: equivariance + order sensitivity ---------------------------

bool criterion_permutation(std::string& detail) {
  Check c;
  Rng rng(31);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(5));
    int heads = rng.uniform_int(2) == 0 ? 1 : 2;
    int d = heads * 3;
    auto p = nn::EncoderBlockParams::init(d, heads, 8, Scalar(0), rng);
    auto x = Tensor::uniform({2, n, d}, -2, 2, rng);
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);
    auto direct = nn::encoder_block(permute_positions(x, perm), p, false, nullptr);
    auto permuted =
        permute_positions(nn::encoder_block(x, p, false, nullptr), perm);
    worst = std::max(worst, max_abs_diff(direct, permuted));
  }
  c.require(worst < 1e-5, "encoder equivariance deviation " +
                              std::to_string(worst));

  // the recurrent scan breaks the symmetry: some permutation changes the
  // full model's output
  auto emb = toy_embedding(10, 8, 0.1, 5);
  auto params = model::build(toy_model_config(model::ModelKind::TEGRU), emb);
  textpipe::EncodedBatch batch;
  batch.batch = 1;
  batch.max_len = 6;
  batch.vocab_size = 10;
  batch.indices = {2, 5, 3, 8, 6, 9};
  batch.labels = {1};
  batch.lengths = {6};
  auto base = model::forward(params, batch, false);
  double best_change = 0;
  for (int rot = 1; rot < 6; ++rot) {
    auto moved = batch;
    std::rotate(moved.indices.begin(), moved.indices.begin() + rot,
                moved.indices.end());
    best_change =
        std::max(best_change, max_abs_diff(model::forward(params, moved, false),
                                           base));
  }
  c.require(best_change > 1e-6,
            "model output insensitive to permutations (max change " +
                std::to_string(best_change) + ")");

  std::ostringstream os;
  os << "equivariance within " << worst << ", order sensitivity "
     << best_change;
  detail = c.ok ? os.str() : c.detail.str();
  return c.ok;
}

// ---- criterion 4: GRU invariants ---------------------------------------------

bool criterion_gru(std::string& detail) {
  Check c;
  Rng rng(41);

  // gates strictly inside (0,1)
  auto cell = nn::GruCell::init(4, 4, true, rng);
  auto h = Tensor::uniform({3, 4}, -1, 1, rng);
  for (int step = 0; step < 10; ++step) {
    auto x = Tensor::uniform({3, 4}, -5, 5, rng);
    Tensor u, r;
    h = nn::gru_step(x, h, cell, &u, &r);
    for (std::size_t i = 0; i < u.numel(); ++i) {
      c.require(u.values()[i] > Scalar(0) && u.values()[i] < Scalar(1),
                "update gate left (0,1)");
      c.require(r.values()[i] > Scalar(0) && r.values()[i] < Scalar(1),
                "reset gate left (0,1)");
    }
  }

  // zero-weight step: exactly half the previous state
  auto zero_cell = nn::GruCell::init(3, 3, true, rng);
  for (Tensor* t : {&zero_cell.w_z, &zero_cell.w_r, &zero_cell.w_h,
                    &zero_cell.u_z, &zero_cell.u_r, &zero_cell.u_h,
                    &zero_cell.b_z, &zero_cell.b_r, &zero_cell.b_h}) {
    auto& v = t->mutable_values();
    std::fill(v.begin(), v.end(), Scalar(0));
  }
  auto h_prev = Tensor::uniform({2, 3}, -1, 1, rng);
  auto x = Tensor::uniform({2, 3}, -1, 1, rng);
  auto h_next = nn::gru_step(x, h_prev, zero_cell);
  for (std::size_t i = 0; i < h_next.numel(); ++i) {
    c.require(h_next.values()[i] == Scalar(0.5) * h_prev.values()[i],
              "zero-weight step is not exactly 0.5 * h_prev");
  }

  // unrolled layer == chained steps, bitwise
  auto p = nn::RecurrentParams::init(nn::CellKind::GRU, false, 3, 4, true, rng);
  auto seq = Tensor::uniform({2, 5, 3}, -1, 1, rng);
  auto out = nn::run_recurrent(seq, p);
  const auto& fwd = std::get<nn::GruCell>(p.forward);
  Tensor hh = Tensor::zeros({2, 4});
  for (int t = 0; t < 5; ++t) {
    hh = nn::gru_step(select_axis1(seq, t), hh, fwd);
    c.require(select_axis1(out.states, t).values() == hh.values(),
              "unrolled state differs from chained step at t=" +
                  std::to_string(t));
  }
  c.require(out.final.values() == hh.values(), "final state mismatch");

  detail = c.ok ? "gates in (0,1); halving exact; unrolled == chained bitwise"
                : c.detail.str();
  return c.ok;
}

// ---- criterion 5: overfit capacity -------------------------------------------

bool criterion_overfit(std::string& detail) {
  Check c;
  auto ds = toy_dataset(64, 8, 64, 51);

  struct Recipe {
    double lr;
    int batch;
    int epochs;  // epochs * ceil(64/batch) == 296..300 optimizer steps
    int d_model;
    double emb_bound;
  };
  auto recipe_for = [](model::ModelKind kind) -> Recipe {
    using MK = model::ModelKind;
    if (kind_has_encoder(kind)) return {0.25, 64, 300, 16, 0.1};
    switch (model::kind_attention(kind)) {
      case model::AttPlacement::None:
        if (kind == MK::RNN) return {0.5, 8, 37, 16, 0.1};
        return {1.0, 8, 37, 16, 0.1};
      case model::AttPlacement::AfterRecurrent:
        return {1.0, 64, 300, 16, 0.1};
      case model::AttPlacement::BeforeRecurrent:
        if (kind == MK::AttLSTM) return {1.5, 64, 300, 16, 0.3};
        return {1.0, 64, 300, 32, 0.1};
    }
    return {1.0, 64, 300, 16, 0.1};
  };

  for (model::ModelKind kind : model::all_kinds()) {
    Recipe r = recipe_for(kind);
    auto emb = toy_embedding(64, r.d_model, r.emb_bound, 5);
    model::ModelConfig mc;
    mc.kind = kind;
    mc.d_model = r.d_model;
    mc.max_len = 8;
    mc.n_heads = 2;
    mc.d_ff = 32;
    mc.recurrent_hidden = 16;
    mc.dropout = Scalar(0);
    mc.seed = 3;
    train::TrainConfig tc;
    tc.batch_size = r.batch;
    tc.epochs = r.epochs;
    tc.lr = static_cast<Scalar>(r.lr);
    tc.decay_every = 10000;
    tc.seed = 5;

    auto params = model::build(mc, emb);
    auto result = train::fit(params, ds, ds, tc);
    double final_loss = result.history.back().train_loss;
    int steps_per_epoch = (64 + r.batch - 1) / r.batch;
    int total_steps = steps_per_epoch * r.epochs;
    c.require(total_steps <= 300, std::string(model::kind_name(kind)) +
                                      " recipe exceeds 300 steps");
    c.require(final_loss < 0.05, std::string(model::kind_name(kind)) +
                                     " loss " + std::to_string(final_loss));
  }
  detail = c.ok ? "all 21 kinds under 0.05 within 300 steps" : c.detail.str();
  return c.ok;
}

// ---- criterion 6: desk-scale relative claim -----------------------------------

bool criterion_desk_scale(std::string& detail) {
  Check c;

  auto read_split = [&](const char* name) {
    auto result =
        textpipe::read_corpus(std::string(TEGRU_DATA_DIR) + "/" + name);
    c.require(result.errors.empty(), std::string(name) + " has parse errors");
    return result.samples;
  };
  auto train_lines = read_split("synthetic_train.tsv");
  auto valid_lines = read_split("synthetic_valid.tsv");
  auto test_lines = read_split("synthetic_test.tsv");
  c.require(train_lines.size() + valid_lines.size() + test_lines.size() == 5000,
            "synthetic corpus is not 5000 samples");

  auto rules = textpipe::FilterRules::defaults();
  textpipe::WhitespaceTokenizer tok;
  auto train_tok = textpipe::tokenize_corpus(train_lines, rules, tok);
  auto vocab = textpipe::Vocabulary::build(train_tok.samples, 400);

  auto tegru_file =
      config::ConfigFile::parse_file(std::string(TEGRU_CONFIG_DIR) +
                                     "/desk-synthetic-tegru.cfg");
  auto gru_file = config::ConfigFile::parse_file(std::string(TEGRU_CONFIG_DIR) +
                                                 "/desk-synthetic-gru.cfg");
  auto mc_tegru = config::read_model_config(tegru_file);
  auto mc_gru = config::read_model_config(gru_file);
  auto tc_tegru = config::read_train_config(tegru_file);
  auto tc_gru = config::read_train_config(gru_file);
  c.require(mc_tegru.kind == model::ModelKind::TEGRU, "tegru config kind");
  c.require(mc_gru.kind == model::ModelKind::GRU, "gru config kind");
  // the criterion pins the TrainConfig: identical for both models
  c.require(config::render_resolved(mc_tegru, tc_tegru) ==
                config::render_resolved(mc_tegru, tc_gru),
            "desk train configs are not identical");

  int max_len = mc_tegru.max_len;
  auto train_set = textpipe::encode_tokens(train_tok, vocab, max_len);
  auto valid_set = textpipe::encode_corpus(valid_lines, vocab, rules, tok,
                                           max_len);
  auto test_set = textpipe::encode_corpus(test_lines, vocab, rules, tok,
                                          max_len);

  auto run = [&](const model::ModelConfig& mc, const train::TrainConfig& tc) {
    auto emb = textpipe::EmbeddingTable::random_init(vocab, mc.d_model, mc.seed);
    auto params = model::build(mc, emb);
    auto fitted = train::fit(params, train_set, valid_set, tc);
    return train::evaluate(fitted.best, test_set);
  };
  auto tegru_report = run(mc_tegru, tc_tegru);
  auto gru_report = run(mc_gru, tc_gru);

  c.require(tegru_report.accuracy >= 0.90,
            "T-E-GRU accuracy " + std::to_string(tegru_report.accuracy) +
                " below 0.90");
  c.require(tegru_report.accuracy >= gru_report.accuracy - 0.01,
            "T-E-GRU " + std::to_string(tegru_report.accuracy) +
                " more than 1pt behind GRU " +
                std::to_string(gru_report.accuracy));

  std::ostringstream os;
  os << "T-E-GRU " << tegru_report.accuracy * 100 << "% vs GRU "
     << gru_report.accuracy * 100 << "% on " << test_set.size()
     << " test samples";
  detail = c.ok ? os.str() : c.detail.str() + " (" + os.str() + ")";
  return c.ok;
}

// ---- criterion 7: metrics against exact rationals ------------------------------

bool criterion_metrics(std::string& detail) {
  struct Case {
    long tp, tn, fp, fn;
    long acc_num, acc_den;
    long f1_num, f1_den;
    bool degenerate;
  };
  // Acc = (TP+TN)/total, F1 = 2TP/(2TP+FP+FN), exact fractions
  const Case cases[] = {
      {3, 4, 2, 1, 7, 10, 6, 9, false},
      {5, 5, 0, 0, 1, 1, 1, 1, false},
      {7, 0, 7, 0, 1, 2, 2, 3, false},
      {0, 5, 0, 0, 1, 1, 0, 1, true},
      {0, 0, 5, 5, 0, 1, 0, 10, false},
      {1, 1, 1, 1, 1, 2, 1, 2, false},
      {10, 20, 5, 15, 3, 5, 1, 2, false},
      {2, 0, 0, 3, 2, 5, 4, 7, false},
      {9, 1, 0, 0, 1, 1, 1, 1, false},
      {1, 0, 99, 0, 1, 100, 2, 101, false},
  };
  Check c;
  for (const Case& k : cases) {
    auto r = train::EvalReport::from_counts(k.tp, k.tn, k.fp, k.fn);
    double acc = static_cast<double>(k.acc_num) / static_cast<double>(k.acc_den);
    double f1 = static_cast<double>(k.f1_num) / static_cast<double>(k.f1_den);
    std::ostringstream tag;
    tag << "(" << k.tp << "," << k.tn << "," << k.fp << "," << k.fn << ")";
    c.require(std::abs(r.accuracy - acc) < 1e-12, tag.str() + " accuracy");
    c.require(std::abs(r.f1 - f1) < 1e-12, tag.str() + " f1");
    c.require(r.f1_degenerate == k.degenerate, tag.str() + " degenerate flag");
  }
  detail = c.ok ? "10 confusion matrices exact at 1e-12" : c.detail.str();
  return c.ok;
}

// ---- criterion 8: preprocessing goldens ----------------------------------------

bool criterion_preprocessing(std::string& detail) {
  Check c;
  auto out = scratch("golden");
  std::ostringstream log;
  cli::PreprocessOptions opt;
  opt.corpus_path = std::string(TEGRU_FIXTURE_DIR) + "/corpus_20.tsv";
  opt.out_dir = out.string();
  opt.vocab_size = 30;
  opt.max_len = 8;
  c.require(cli::cmd_preprocess(opt, log) == 0, "preprocess failed");
  c.require(file_bytes(out / "dataset.txt") ==
                file_bytes(std::string(TEGRU_FIXTURE_DIR) +
                           "/golden_dataset.txt"),
            "encoded dataset differs from the frozen golden");
  c.require(file_bytes(out / "vocab.tsv") ==
                file_bytes(std::string(TEGRU_FIXTURE_DIR) +
                           "/golden_vocab.tsv"),
            "vocabulary differs from the frozen golden");

  // front-truncation and front-padding hand cases
  c.require(textpipe::align({11, 12, 13, 14, 15}, 3) ==
                std::vector<int>({13, 14, 15}),
            "front truncation");
  c.require(textpipe::align({11, 12}, 4) == std::vector<int>({0, 0, 11, 12}),
            "front padding");
  c.require(textpipe::align({11, 12, 13}, 3) == std::vector<int>({11, 12, 13}),
            "identity alignment");

  detail = c.ok ? "golden dataset and vocabulary byte-exact; alignment "
                  "hand cases hold"
                : c.detail.str();
  return c.ok;
}

// ---- criterion 9: schedule + determinism ---------------------------------------

bool criterion_schedule(std::string& detail) {
  Check c;
  train::TrainConfig cfg;
  cfg.lr = Scalar(0.002);
  cfg.decay_factor = Scalar(0.5);
  cfg.decay_every = 50;
  cfg.epochs = 100;

  // transitions at the right epochs, one distinct rate per 50-epoch block
  std::set<double> plateaus;
  int transitions = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    double lr = static_cast<double>(train::schedule_lr(e, cfg));
    plateaus.insert(lr);
    if (e > 0 &&
        lr != static_cast<double>(train::schedule_lr(e - 1, cfg))) {
      ++transitions;
      c.require(e % cfg.decay_every == 0,
                "decay event at epoch " + std::to_string(e));
      c.require(lr == static_cast<double>(train::schedule_lr(e - 1, cfg)) * 0.5,
                "decay is not a halving");
    }
  }
  c.require(static_cast<int>(plateaus.size()) == cfg.epochs / cfg.decay_every,
            "expected floor(epochs/50) distinct rates, got " +
                std::to_string(plateaus.size()));
  c.require(transitions == (cfg.epochs - 1) / cfg.decay_every,
            "unexpected number of decay transitions: " +
                std::to_string(transitions));

  // identical seeded runs -> identical history files
  auto dir = scratch("determinism");
  synthdata::SynthOptions so;
  so.samples = 96;
  so.seed = 321;
  auto corpus = synthdata::make_corpus(so);
  synthdata::write_corpus((dir / "c.tsv").string(), corpus);
  std::ostringstream sink;
  cli::PreprocessOptions pre;
  pre.corpus_path = (dir / "c.tsv").string();
  pre.out_dir = (dir / "enc").string();
  pre.vocab_size = 300;
  pre.max_len = 16;
  c.require(cli::cmd_preprocess(pre, sink) == 0, "preprocess failed");

  std::ofstream cfgf(dir / "t.cfg");
  cfgf << "[model]\nkind = T-E-GRU\nd_model = 16\nmax_len = 16\nn_heads = 2\n"
          "d_ff = 16\nrecurrent_hidden = 8\ndropout = 0.2\nseed = 3\n\n"
          "[train]\nbatch_size = 16\nepochs = 3\nlr = 0.25\nseed = 3\n";
  cfgf.close();
  cli::TrainOptions tr;
  tr.train_path = (dir / "enc" / "dataset.txt").string();
  tr.valid_path = (dir / "enc" / "dataset.txt").string();
  tr.config_path = (dir / "t.cfg").string();
  tr.out_dir = (dir / "run_a").string();
  c.require(cli::cmd_train(tr, sink) == 0, "first training run failed");
  tr.out_dir = (dir / "run_b").string();
  c.require(cli::cmd_train(tr, sink) == 0, "second training run failed");
  c.require(file_bytes(dir / "run_a" / "history.jsonl") ==
                file_bytes(dir / "run_b" / "history.jsonl"),
            "seeded reruns produced different histories");

  detail = c.ok ? "decay at epoch 50 only; identical seeded history files"
                : c.detail.str();
  return c.ok;
}

// ---- criterion 10: ablation table shape ----------------------------------------

bool criterion_ablation(std::string& detail) {
  Check c;
  auto dir = scratch("ablation");
  synthdata::SynthOptions so;
  so.samples = 96;
  so.seed = 654;
  auto corpus = synthdata::make_corpus(so);
  synthdata::write_corpus((dir / "c.tsv").string(), corpus);
  std::ostringstream sink;
  cli::PreprocessOptions pre;
  pre.corpus_path = (dir / "c.tsv").string();
  pre.out_dir = (dir / "enc").string();
  pre.vocab_size = 300;
  pre.max_len = 16;
  c.require(cli::cmd_preprocess(pre, sink) == 0, "preprocess failed");

  std::ofstream cfgf(dir / "sweep.cfg");
  cfgf << "[model]\nkind = T-E-GRU\nd_model = 16\nmax_len = 16\nn_heads = 2\n"
          "d_ff = 16\nrecurrent_hidden = 8\ndropout = 0.0\nseed = 3\n\n"
          "[train]\nbatch_size = 32\nepochs = 1\nlr = 0.25\nseed = 3\n\n"
          "[sweep]\nkinds = T-E-GRU, T-E-RNN, T-E-LSTM, T-E-BiRNN, "
          "T-E-BiLSTM, T-E-BiGRU\nd_ff = 16\nheads = 2\ndropout = 0.0\n";
  cfgf.close();

  cli::AblateOptions ab;
  ab.train_path = (dir / "enc" / "dataset.txt").string();
  ab.valid_path = (dir / "enc" / "dataset.txt").string();
  ab.test_path = (dir / "enc" / "dataset.txt").string();
  ab.config_path = (dir / "sweep.cfg").string();
  ab.out_dir = (dir / "out").string();
  c.require(cli::cmd_ablate(ab, sink) == 0, "ablate failed");

  std::set<std::string> expected = {"T-E-GRU",   "T-E-RNN",    "T-E-LSTM",
                                    "T-E-BiRNN", "T-E-BiLSTM", "T-E-BiGRU"};
  std::set<std::string> seen;
  std::istringstream rows(file_bytes(dir / "out" / "ablation.jsonl"));
  std::string line;
  while (std::getline(rows, line)) {
    auto j = nlohmann::json::parse(line);
    seen.insert(j["kind"].get<std::string>());
    c.require(j["status"] == "ok",
              j["kind"].get<std::string>() + " cell failed");
  }
  c.require(seen == expected, "row set does not match the recurrent-swap "
                              "table");

  detail = c.ok ? "6-row recurrent-swap table with the expected kinds"
                : c.detail.str();
  return c.ok;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    bool (*run)(std::string&);
  };
  const Criterion criteria[] = {
      {"gradient-suite", criterion_gradient_suite},
      {"attention-oracle", criterion_attention_oracle},
      {"encoder-equivariance-and-order-sensitivity", criterion_permutation},
      {"gru-invariants", criterion_gru},
      {"overfit-capacity", criterion_overfit},
      {"desk-scale-relative-claim", criterion_desk_scale},
      {"metrics-exact", criterion_metrics},
      {"preprocessing-goldens", criterion_preprocessing},
      {"schedule-and-determinism", criterion_schedule},
      {"ablation-table-shape", criterion_ablation},
  };

  int failed = 0;
  for (const Criterion& crit : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = crit.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    auto t1 = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(t1 - t0).count();
    std::printf("[%s] %-44s (%.1fs) %s\n", ok ? "PASS" : "FAIL", crit.name,
                secs, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  }
  if (failed) {
    std::printf("%d criterion(s) failed\n", failed);
    return 1;
  }
  std::printf("all %zu criteria passed\n", std::size(criteria));
  return 0;
}
