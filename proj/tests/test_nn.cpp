#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "tegru/nn.hpp"
#include "tegru/tensor.hpp"

using namespace tegru;
using namespace tegru::nn;

namespace {

std::vector<double> to_doubles(const Tensor& t) {
  return std::vector<double>(t.values().begin(), t.values().end());
}

void fill_zero(Tensor& t) {
  auto& v = t.mutable_values();
  std::fill(v.begin(), v.end(), Scalar(0));
}

// Permutes the position axis of a [b, n, d] tensor.
Tensor permute_positions(const Tensor& x, const std::vector<int>& perm) {
  int b = x.dim(0), n = x.dim(1), d = x.dim(2);
  std::vector<Scalar> out(x.numel());
  for (int bi = 0; bi < b; ++bi) {
    for (int t = 0; t < n; ++t) {
      for (int j = 0; j < d; ++j) {
        out[(static_cast<std::size_t>(bi) * n + t) * d + j] =
            x.values()[(static_cast<std::size_t>(bi) * n +
                        static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])) *
                           d +
                       j];
      }
    }
  }
  return Tensor::from_values({b, n, d}, std::move(out));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.numel() == b.numel());
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.values()[i]) -
                             static_cast<double>(b.values()[i])));
  }
  return m;
}

}  // namespace

TEST_CASE("attention rejects head counts that do not divide d_model") {
  Rng rng(2);
  CHECK_THROWS_AS(MultiHeadAttentionParams::init(8, 3, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(MultiHeadAttentionParams::init(0, 1, rng),
                  std::invalid_argument);
}

TEST_CASE("single-position attention passes the value vector through w_out") {
  Rng rng(3);
  auto p = MultiHeadAttentionParams::init(4, 2, rng);
  auto x = Tensor::uniform({1, 1, 4}, -1, 1, rng);
  auto out = multi_head_self_attention(x, p, nullptr);
  // softmax over one key is 1, so each head yields x W_v
  auto expect = matmul(
      concat_last_axis({matmul(x, p.w_v[0]), matmul(x, p.w_v[1])}), p.w_out);
  CHECK(max_abs_diff(out, expect) < 1e-12);
}

TEST_CASE("identity-projection attention follows the dominant key") {
  // two keys with score gap >> 1: q.k1 = 10, q.k2 = 0
  auto p = MultiHeadAttentionParams::identity(2);
  Scalar s = Scalar(std::sqrt(2.0) * 10.0 / 4.0);  // undo the 1/sqrt(d_k)
  auto x = Tensor::from_values(
      {1, 2, 2}, {4, 0, s, 0});  // row1 dominates when queried by itself
  auto out = multi_head_self_attention(x, p, nullptr);
  // row 0's scores: (x0.x0, x0.x1)/sqrt(2) = (16, 4s)/sqrt(2); gap >> 1
  double w_other =
      1.0 / (1.0 + std::exp((16.0 - 4.0 * static_cast<double>(s)) /
                            std::sqrt(2.0)));
  CHECK(out.values()[0] ==
        doctest::Approx(4 * (1 - w_other) + static_cast<double>(s) * w_other)
            .epsilon(1e-6));
}

TEST_CASE("attention equals the brute-force evaluation on random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    int b = 1 + static_cast<int>(rng.uniform_int(2));
    int n = 1 + static_cast<int>(rng.uniform_int(4));
    int heads = rng.uniform_int(2) == 0 ? 1 : 2;
    int d = heads * (1 + static_cast<int>(rng.uniform_int(2)));
    auto p = MultiHeadAttentionParams::init(d, heads, rng);
    auto x = Tensor::uniform({b, n, d}, -2, 2, rng);

    auto got = multi_head_self_attention(x, p, nullptr);

    std::vector<std::vector<double>> wq, wk, wv;
    for (int h = 0; h < heads; ++h) {
      wq.push_back(to_doubles(p.w_q[static_cast<std::size_t>(h)]));
      wk.push_back(to_doubles(p.w_k[static_cast<std::size_t>(h)]));
      wv.push_back(to_doubles(p.w_v[static_cast<std::size_t>(h)]));
    }
    auto expect = oracle::brute_force_mha(to_doubles(x), b, n, d, wq, wk, wv,
                                          to_doubles(p.w_out), heads);
    double worst = 0;
    for (std::size_t i = 0; i < expect.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(got.values()[i]) -
                                       expect[i]));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("attention weights are distributions; masked keys vanish") {
  Rng rng(9);
  auto p = MultiHeadAttentionParams::init(4, 2, rng);
  auto x = Tensor::uniform({2, 3, 4}, -3, 3, rng);
  std::vector<unsigned char> mask = {0, 0, 1, 0, 1, 0};  // one PAD per row

  std::vector<Tensor> att;
  (void)multi_head_self_attention(x, p, &mask, &att);
  REQUIRE(att.size() == 2);
  for (const Tensor& a : att) {
    for (int bi = 0; bi < 2; ++bi) {
      for (int i = 0; i < 3; ++i) {
        double sum = 0;
        for (int j = 0; j < 3; ++j) {
          double w = static_cast<double>(
              a.values()[(static_cast<std::size_t>(bi) * 3 + i) * 3 + j]);
          CHECK(w >= 0.0);
          sum += w;
          bool masked = mask[static_cast<std::size_t>(bi) * 3 +
                             static_cast<std::size_t>(j)] != 0;
          if (masked) CHECK(w < 1e-9);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("encoder block is deterministic outside training") {
  Rng rng(11);
  auto p = EncoderBlockParams::init(6, 2, 12, Scalar(0.5), rng);
  auto x = Tensor::uniform({2, 4, 6}, -1, 1, rng);
  auto a = encoder_block(x, p, false, nullptr);
  auto b = encoder_block(x, p, false, nullptr);
  CHECK(a.values() == b.values());
}

TEST_CASE("encoder block is permutation-equivariant without a mask") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(rng.uniform_int(5));
    int heads = rng.uniform_int(2) == 0 ? 1 : 2;
    int d = heads * 3;
    auto p = EncoderBlockParams::init(d, heads, 8, Scalar(0), rng);
    auto x = Tensor::uniform({2, n, d}, -2, 2, rng);
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);

    auto direct = encoder_block(permute_positions(x, perm), p, false, nullptr);
    auto permuted = permute_positions(encoder_block(x, p, false, nullptr), perm);
    CHECK(max_abs_diff(direct, permuted) < 1e-5);
  }
}

TEST_CASE("encoder block with a zeroed FFN is two stacked norms around MHA") {
  Rng rng(17);
  auto p = EncoderBlockParams::init(4, 2, 8, Scalar(0), rng);
  fill_zero(p.ffn_w1);
  fill_zero(p.ffn_b1);
  fill_zero(p.ffn_w2);
  fill_zero(p.ffn_b2);
  auto x = Tensor::uniform({1, 3, 4}, -1, 1, rng);
  auto got = encoder_block(x, p, false, nullptr);

  auto att = multi_head_self_attention(x, p.mha, nullptr);
  auto r = layernorm(add(att, x), p.norm_att.gain, p.norm_att.bias,
                     kLayerNormEps);
  auto expect = layernorm(r, p.norm_ffn.gain, p.norm_ffn.bias, kLayerNormEps);
  // ffn contributes exactly zero, the second residual add is r + 0
  CHECK(max_abs_diff(got, expect) < 1e-12);
}

TEST_CASE("gru step at zero weights halves the previous state") {
  Rng rng(19);
  auto cell = GruCell::init(3, 3, true, rng);
  for (Tensor* t : {&cell.w_z, &cell.w_r, &cell.w_h, &cell.u_z, &cell.u_r,
                    &cell.u_h, &cell.b_z, &cell.b_r, &cell.b_h}) {
    fill_zero(*t);
  }
  auto x = Tensor::uniform({2, 3}, -1, 1, rng);
  auto h_prev = Tensor::uniform({2, 3}, -1, 1, rng);
  Tensor u, r;
  auto h = gru_step(x, h_prev, cell, &u, &r);
  for (std::size_t i = 0; i < h.numel(); ++i) {
    CHECK(u.values()[i] == Scalar(0.5));
    CHECK(r.values()[i] == Scalar(0.5));
    // exact: 0.5 * h is a power-of-two scale
    CHECK(h.values()[i] == Scalar(0.5) * h_prev.values()[i]);
  }
}

TEST_CASE("gru step from a zero state follows the direct formula") {
  Rng rng(23);
  auto cell = GruCell::init(2, 2, true, rng);
  auto x = Tensor::from_values({1, 2}, {Scalar(0.7), Scalar(-0.4)});
  auto h0 = Tensor::zeros({1, 2});
  auto h = gru_step(x, h0, cell);
  // h = u (*) tanh(x W_h + b_h) with u = sigmoid(x W_z + b_z)
  for (int j = 0; j < 2; ++j) {
    double zu = 0, zh = 0;
    for (int i = 0; i < 2; ++i) {
      zu += static_cast<double>(x.values()[static_cast<std::size_t>(i)]) *
            static_cast<double>(cell.w_z.values()[static_cast<std::size_t>(i * 2 + j)]);
      zh += static_cast<double>(x.values()[static_cast<std::size_t>(i)]) *
            static_cast<double>(cell.w_h.values()[static_cast<std::size_t>(i * 2 + j)]);
    }
    double u = 1.0 / (1.0 + std::exp(-zu));
    double expect = u * std::tanh(zh);
    CHECK(static_cast<double>(h.values()[static_cast<std::size_t>(j)]) ==
          doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("gru gates stay strictly inside (0,1); states stay bounded") {
  Rng rng(29);
  auto cell = GruCell::init(4, 4, true, rng);
  auto h = Tensor::uniform({3, 4}, -1, 1, rng);
  for (int step = 0; step < 8; ++step) {
    auto x = Tensor::uniform({3, 4}, -5, 5, rng);
    Tensor u, r;
    h = gru_step(x, h, cell, &u, &r);
    for (std::size_t i = 0; i < u.numel(); ++i) {
      CHECK(u.values()[i] > Scalar(0));
      CHECK(u.values()[i] < Scalar(1));
      CHECK(r.values()[i] > Scalar(0));
      CHECK(r.values()[i] < Scalar(1));
      // convex blend of h_prev (<=1 here) and tanh output (<=1)
      CHECK(std::abs(static_cast<double>(h.values()[i])) <= 1.0);
    }
  }
}

TEST_CASE("run_recurrent: single step equals the final state") {
  Rng rng(31);
  for (CellKind kind : {CellKind::RNN, CellKind::LSTM, CellKind::GRU}) {
    auto p = RecurrentParams::init(kind, false, 3, 5, true, rng);
    auto x = Tensor::uniform({2, 1, 3}, -1, 1, rng);
    auto out = run_recurrent(x, p);
    CHECK(out.states.shape() == Shape{2, 1, 5});
    CHECK(out.final.shape() == Shape{2, 5});
    CHECK(max_abs_diff(reshape(out.states, {2, 5}), out.final) == 0.0);
  }
}

TEST_CASE("run_recurrent GRU equals chained gru_step calls bitwise") {
  Rng rng(37);
  auto p = RecurrentParams::init(CellKind::GRU, false, 3, 4, true, rng);
  auto x = Tensor::uniform({2, 3, 3}, -1, 1, rng);
  auto out = run_recurrent(x, p);

  const auto& cell = std::get<GruCell>(p.forward);
  Tensor h = Tensor::zeros({2, 4});
  for (int t = 0; t < 3; ++t) {
    h = gru_step(select_axis1(x, t), h, cell);
    auto st = select_axis1(out.states, t);
    CHECK(st.values() == h.values());
  }
  CHECK(out.final.values() == h.values());
}

TEST_CASE("run_recurrent rejects empty sequences") {
  Rng rng(41);
  auto p = RecurrentParams::init(CellKind::GRU, false, 3, 4, true, rng);
  CHECK_THROWS_AS(run_recurrent(Tensor::zeros({2, 3}), p),
                  std::invalid_argument);
}

TEST_CASE("front PAD steps leave a bias-free recurrent state untouched") {
  Rng rng(43);
  // bias-free GRU: zero input from a zero state stays exactly zero
  auto p = RecurrentParams::init(CellKind::GRU, false, 3, 4, false, rng);
  auto tail = Tensor::uniform({1, 2, 3}, -1, 1, rng);
  std::vector<Scalar> padded(3, Scalar(0));
  padded.insert(padded.end(), tail.values().begin(), tail.values().end());
  auto with_pad = Tensor::from_values({1, 3, 3}, padded);

  auto plain = run_recurrent(tail, p);
  auto front = run_recurrent(with_pad, p);
  CHECK(plain.final.values() == front.final.values());

  // fresh RNN biases are zero, so the same holds there
  auto pr = RecurrentParams::init(CellKind::RNN, false, 3, 4, true, rng);
  CHECK(run_recurrent(tail, pr).final.values() ==
        run_recurrent(with_pad, pr).final.values());
}

TEST_CASE("bidirectional scan concatenates directions") {
  Rng rng(47);
  auto p = RecurrentParams::init(CellKind::GRU, true, 3, 8, true, rng);
  auto x = Tensor::uniform({2, 4, 3}, -1, 1, rng);
  auto out = run_recurrent(x, p);
  CHECK(out.states.shape() == Shape{2, 4, 8});
  CHECK(out.final.shape() == Shape{2, 8});

  // forward half of `final` equals the forward half of the last position;
  // backward half equals the backward half of the first position.
  auto last = select_axis1(out.states, 3);
  auto first = select_axis1(out.states, 0);
  for (int bi = 0; bi < 2; ++bi) {
    for (int j = 0; j < 4; ++j) {
      CHECK(out.final.values()[static_cast<std::size_t>(bi * 8 + j)] ==
            last.values()[static_cast<std::size_t>(bi * 8 + j)]);
      CHECK(out.final.values()[static_cast<std::size_t>(bi * 8 + 4 + j)] ==
            first.values()[static_cast<std::size_t>(bi * 8 + 4 + j)]);
    }
  }

  CHECK_THROWS_AS(RecurrentParams::init(CellKind::GRU, true, 3, 7, true, rng),
                  std::invalid_argument);
}

TEST_CASE("attention pool: single row, uniform mean, dominant row") {
  Rng rng(53);
  auto p = AttentionPoolParams::init(3, rng);

  auto single = Tensor::uniform({2, 1, 3}, -1, 1, rng);
  auto pooled = attention_pool(single, p);
  CHECK(max_abs_diff(pooled, reshape(single, {2, 3})) < 1e-12);

  // zero scoring matrix -> uniform weights -> arithmetic mean
  auto pz = AttentionPoolParams::init(3, rng);
  fill_zero(pz.w);
  auto states = Tensor::uniform({1, 4, 3}, -1, 1, rng);
  auto mean = attention_pool(states, pz);
  for (int j = 0; j < 3; ++j) {
    double m = 0;
    for (int t = 0; t < 4; ++t)
      m += static_cast<double>(states.values()[static_cast<std::size_t>(t * 3 + j)]);
    m /= 4;
    CHECK(static_cast<double>(mean.values()[static_cast<std::size_t>(j)]) ==
          doctest::Approx(m).epsilon(1e-6));
  }

  // score gap of 20: loser weight ~ e^-20, output within 1e-6 of the winner
  AttentionPoolParams pd;
  pd.w = Tensor::from_values({2, 2}, {30, 0, 0, 0});
  pd.v = Tensor::from_values({2}, {10, 0});
  auto two = Tensor::from_values({1, 2, 2}, {1, 5, -1, -5});
  auto win = attention_pool(two, pd);
  CHECK(static_cast<double>(win.values()[0]) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(static_cast<double>(win.values()[1]) == doctest::Approx(5.0).epsilon(1e-6));

  Tensor weights;
  (void)attention_pool(states, p, &weights);
  double sum = 0;
  for (Scalar w : weights.values()) {
    CHECK(w >= Scalar(0));
    sum += static_cast<double>(w);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("classify head: symmetry, bias-only odds, shift invariance") {
  Rng rng(59);
  auto p = ClassifyHeadParams::init(3, rng);
  fill_zero(p.w);
  auto h = Tensor::uniform({2, 3}, -1, 1, rng);

  auto lp = classify_head(h, p);
  for (Scalar v : lp.values()) {
    CHECK(static_cast<double>(v) == doctest::Approx(std::log(0.5)).epsilon(1e-6));
  }

  p.b = Tensor::from_values({2}, {Scalar(std::log(3.0)), 0});
  auto odds = classify_head(h, p);
  CHECK(std::exp(static_cast<double>(odds.values()[0])) ==
        doctest::Approx(0.75).epsilon(1e-6));
  CHECK(std::exp(static_cast<double>(odds.values()[1])) ==
        doctest::Approx(0.25).epsilon(1e-6));

  p.b = Tensor::from_values({2}, {Scalar(std::log(3.0) + 5.0), Scalar(5.0)});
  auto shifted = classify_head(h, p);
  CHECK(max_abs_diff(shifted, odds) < 1e-6);

  // rows exponentiate to valid distributions
  for (int r = 0; r < 2; ++r) {
    double sum = std::exp(static_cast<double>(odds.values()[static_cast<std::size_t>(r * 2)])) +
                 std::exp(static_cast<double>(odds.values()[static_cast<std::size_t>(r * 2 + 1)]));
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("dropout: identity outside training, scaled mask inside") {
  Rng rng(61);
  auto x = Tensor::uniform({4, 4}, 1, 2, rng);
  CHECK(dropout(x, Scalar(0.5), false, nullptr).values() == x.values());
  CHECK(dropout(x, Scalar(0), true, &rng).values() == x.values());

  Rng r2(7);
  auto y = dropout(x, Scalar(0.5), true, &r2);
  for (std::size_t i = 0; i < y.numel(); ++i) {
    bool dropped = y.values()[i] == Scalar(0);
    if (!dropped) {
      CHECK(static_cast<double>(y.values()[i]) ==
            doctest::Approx(2.0 * static_cast<double>(x.values()[i])));
    }
  }
  CHECK_THROWS_AS(dropout(x, Scalar(1), true, &rng), std::invalid_argument);
}

#if defined(TEGRU_SCALAR_F64)

TEST_CASE("gradients flow end to end: encoder -> GRU -> head") {
  Rng rng(67);
  const int d = 4, n = 3, b = 2;
  auto enc = EncoderBlockParams::init(d, 2, 6, Scalar(0), rng);
  auto rec = RecurrentParams::init(CellKind::GRU, false, d, 4, true, rng);
  auto head = ClassifyHeadParams::init(4, rng);
  auto x = Tensor::uniform({b, n, d}, -1, 1, rng).set_requires_grad(true);
  auto coeff = Tensor::uniform({b, 2}, -1, 1, rng);

  NamedTensors named;
  enc.collect("enc", named);
  rec.collect("rec", named);
  head.collect("head", named);
  std::vector<Tensor> leaves{x};
  for (auto& [name, t] : named) leaves.push_back(t);

  auto rep = oracle::check_gradients(leaves, [&] {
    auto h = encoder_block(x, enc, false, nullptr);
    auto out = run_recurrent(h, rec);
    auto lp = classify_head(out.final, head);
    return sum_all(mul(lp, coeff));
  });
  INFO(rep.worst);
  CHECK(rep.ok);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("gradients flow through bidirectional LSTM and attention pool") {
  Rng rng(71);
  const int d = 3, n = 3, b = 2;
  auto rec = RecurrentParams::init(CellKind::LSTM, true, d, 4, true, rng);
  auto pool = AttentionPoolParams::init(4, rng);
  auto head = ClassifyHeadParams::init(4, rng);
  auto x = Tensor::uniform({b, n, d}, -1, 1, rng).set_requires_grad(true);
  auto coeff = Tensor::uniform({b, 2}, -1, 1, rng);

  NamedTensors named;
  rec.collect("rec", named);
  pool.collect("pool", named);
  head.collect("head", named);
  std::vector<Tensor> leaves{x};
  for (auto& [name, t] : named) leaves.push_back(t);

  auto rep = oracle::check_gradients(leaves, [&] {
    auto out = run_recurrent(x, rec);
    auto pooled = attention_pool(out.states, pool);
    return sum_all(mul(classify_head(pooled, head), coeff));
  });
  INFO(rep.worst);
  CHECK(rep.ok);
}

#endif  // TEGRU_SCALAR_F64
