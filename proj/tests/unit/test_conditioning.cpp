#include <cmath>
#include <random>

#include "doctest.h"
#include "lingua/autodiff/ops.hpp"
#include "lingua/conditioning/conditioning.hpp"
#include "support/gradcheck.hpp"

using namespace lingua;
using ad::Tensor;

TEST_CASE("add conditioning") {
  auto frames = Tensor::from({1, 2}, {1.0, 1.0});
  auto emb = Tensor::from({2, 2}, {9.0, 9.0, 0.5, -0.5});
  auto y = cond::condition_add(frames, 1, emb);
  CHECK(y.at(0, 0) == 1.5);
  CHECK(y.at(0, 1) == 0.5);

  std::mt19937_64 rng(1);
  auto x = testing::random_tensor(rng, {4, 3});
  auto zero = Tensor::zeros({2, 3});
  auto same = cond::condition_add(x, 0, zero);
  CHECK(std::equal(same.values().begin(), same.values().end(), x.values().begin()));
  auto e = testing::random_tensor(rng, {2, 3});
  auto back = ad::sub(cond::condition_add(x, 1, e), cond::condition_add(Tensor::zeros({4, 3}), 1, e));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-15));
  CHECK_THROWS(cond::condition_add(x, 2, e));
}

TEST_CASE("attention conditioning") {
  std::mt19937_64 rng(2);
  auto w = testing::random_tensor(rng, {3, 3});
  auto v = testing::random_tensor(rng, {3, 1});
  auto row = testing::random_tensor(rng, {1, 3});
  auto emb = ad::concat({Tensor::zeros({1, 3}), row}, 0);
  auto frames = ad::repeat_rows(row, 4);
  auto y = cond::condition_attention(frames, 1, emb, w, v);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.values()[i] == doctest::Approx(frames.values()[i]).epsilon(1e-14));

  auto x = testing::random_tensor(rng, {5, 3});
  auto e2 = testing::random_tensor(rng, {2, 3});
  auto mid = cond::condition_attention(x, 0, e2, w, Tensor::zeros({3, 1}));
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(mid.at(t, c) == doctest::Approx(0.5 * x.at(t, c) + 0.5 * e2.at(0, c)).epsilon(1e-14));
    }
  }
  for (int trial = 0; trial < 5; ++trial) {
    auto xs = testing::random_tensor(rng, {4, 3});
    const double err = testing::max_gradient_error(
        [](const std::vector<Tensor>& in) {
          return testing::weighted_sum(cond::condition_attention(in[0], 1, in[1], in[2], in[3]));
        },
        {xs, testing::random_tensor(rng, {2, 3}), testing::random_tensor(rng, {3, 3}),
         testing::random_tensor(rng, {3, 1})});
    CHECK(err < 1e-6);
  }
}

TEST_CASE("concat conditioning") {
  auto f = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto y = cond::concat_onehot(f, 1, 3);
  REQUIRE(y.shape() == ad::Shape{2, 5});
  CHECK(y.at(0, 2) == 0.0);
  CHECK(y.at(0, 3) == 1.0);
  CHECK(y.at(1, 4) == 0.0);
  CHECK(y.at(1, 1) == 4.0);
  auto emb = Tensor::from({2, 2}, {0.1, 0.2, 0.3, 0.4});
  auto z = cond::concat_embedding(f, 1, emb);
  REQUIRE(z.shape() == ad::Shape{2, 4});
  CHECK(z.at(1, 2) == 0.3);
  CHECK(z.at(1, 3) == 0.4);
}

TEST_CASE("prompt tokens") {
  const std::size_t d = 4;
  std::mt19937_64 rng(3);
  auto frames = testing::random_tensor(rng, {5, d});
  auto emb1 = testing::random_tensor(rng, {3, d});
  auto pre = cond::attach_prompts(frames, 2, emb1, 1, cond::PromptPosition::prefix);
  CHECK(pre.sequence.rows() == 6);
  CHECK(pre.acoustic_begin == 1);
  for (std::size_t c = 0; c < d; ++c) CHECK(pre.sequence.at(0, c) == emb1.at(2, c));
  auto suf = cond::attach_prompts(frames, 2, emb1, 1, cond::PromptPosition::suffix);
  CHECK(suf.acoustic_begin == 0);
  for (std::size_t c = 0; c < d; ++c) CHECK(suf.sequence.at(5, c) == emb1.at(2, c));
  auto emb2 = testing::random_tensor(rng, {3, 2 * d});
  auto both = cond::attach_prompts(frames, 0, emb2, 1, cond::PromptPosition::both);
  CHECK(both.sequence.rows() == 7);
  auto sliced = ad::slice(both.sequence, 0, both.acoustic_begin, both.acoustic_begin + both.acoustic_frames);
  CHECK(std::equal(sliced.values().begin(), sliced.values().end(), frames.values().begin()));
  auto emb3 = testing::random_tensor(rng, {3, 3 * d});
  CHECK(cond::attach_prompts(frames, 1, emb3, 3, cond::PromptPosition::prefix).sequence.rows() == 8);
  CHECK_THROWS(cond::attach_prompts(frames, 1, emb1, 2, cond::PromptPosition::prefix));
}

TEST_CASE("prefix encoder output layout") {
  std::mt19937_64 rng(4);
  const std::size_t L = 2, d = 8, e = 3;
  for (std::size_t np : {1u, 5u}) {
    auto emb = testing::random_tensor(rng, {2, e});
    auto w = testing::random_tensor(rng, {e, L * 2 * np * d});
    auto b = testing::random_tensor(rng, {L * 2 * np * d});
    auto table = cond::prefix_table(1, emb, w, b, L, np, d);
    CHECK(table.size() == L * d * 2 * np);
    if (np == 1) CHECK(table.size() == 32);
    auto [k1, v1] = cond::prefix_kv(table, 1, np);
    CHECK(k1.rows() == np);
    CHECK(v1.rows() == np);
    CHECK(v1.at(np - 1, d - 1) == table.values().back());
    CHECK(k1.at(0, 0) == table.at(2 * np, 0));
    CHECK_THROWS(cond::prefix_kv(table, 2, np));
  }
}

TEST_CASE("fl adapter") {
  std::mt19937_64 rng(5);
  const std::size_t d = 6, K = 7;
  auto h = testing::random_tensor(rng, {4, d});
  auto out = cond::fl_adapter(h, testing::random_tensor(rng, {d, K + 1}), testing::random_tensor(rng, {K + 1}),
                              Tensor::zeros({K + 1, d}), Tensor::zeros({d}));
  CHECK(out.lid_logits.cols() == 8);
  CHECK(std::equal(out.hidden.values().begin(), out.hidden.values().end(), h.values().begin()));
}

TEST_CASE("residual adapter") {
  std::mt19937_64 rng(6);
  const std::size_t d = 5, a = 3;
  auto x = testing::random_tensor(rng, {4, d});
  auto y = cond::residual_adapter(x, testing::random_tensor(rng, {d, a}), testing::random_tensor(rng, {a}),
                                  Tensor::zeros({a, d}), Tensor::zeros({d}));
  CHECK(std::equal(y.values().begin(), y.values().end(), x.values().begin()));
  for (int trial = 0; trial < 5; ++trial) {
    const double err = testing::max_gradient_error(
        [](const std::vector<Tensor>& in) {
          return testing::weighted_sum(cond::residual_adapter(in[0], in[1], in[2], in[3], in[4]));
        },
        {testing::random_tensor(rng, {4, d}), testing::random_tensor(rng, {d, a}), testing::random_tensor(rng, {a}),
         testing::random_tensor(rng, {a, d}), testing::random_tensor(rng, {d})});
    CHECK(err < 1e-6);
  }
}
