#include <gtest/gtest.h>

#include <random>

#include "cascade/cascade.hpp"
#include "cascade/length_relax.hpp"
#include "oracle.hpp"

using namespace cascade;

namespace {

// base potentials: -1 everywhere, so any wrapper override is visible
oracle::FunctionProvider flat(const Vocabulary& v, int order) {
  return oracle::FunctionProvider(v, order, [](std::size_t, std::span<const TokenId>) { return -1.0; });
}

Tokens all_candidates(const Vocabulary& v) {
  auto c = v.output_ids();
  c.push_back(v.pad_id());
  std::sort(c.begin(), c.end());
  return c;
}

}  // namespace

TEST(LengthWindow, Geometry) {
  const LengthWindow w(6, 2);
  EXPECT_EQ(w.lattice_length(), 9u);
  EXPECT_EQ(w.earliest_eos(), 3u);
  EXPECT_EQ(w.latest_eos(), 7u);
  EXPECT_THROW(LengthWindow(2, 2), Error);
  EXPECT_NO_THROW(LengthWindow(3, 2));
}

TEST(Wrapper, EosThenPadIsFreeAnywhereInside) {
  const Vocabulary v({"woman"});
  auto base = flat(v, 2);
  const LengthRelaxedProvider w(base, LengthWindow(5, 2));
  const TokenId pair[] = {v.eos_id(), v.pad_id()};
  for (std::size_t l = 1; l + 2 < w.window().lattice_length(); ++l) EXPECT_EQ(w.score(l, pair), 0.0) << l;
}

TEST(Wrapper, NothingElseMayPrecedePad) {
  const Vocabulary v({"woman"});
  auto base = flat(v, 2);
  const LengthRelaxedProvider w(base, LengthWindow(5, 2));
  const TokenId pair[] = {v.id("woman"), v.pad_id()};
  for (std::size_t l = 0; l + 1 < 8; ++l) EXPECT_EQ(w.score(l, pair), kNegInf);
  const TokenId pad_pad[] = {v.pad_id(), v.pad_id()};
  EXPECT_EQ(w.score(3, pad_pad), 0.0);
  const TokenId pad_word[] = {v.pad_id(), v.id("woman")};
  EXPECT_EQ(w.score(3, pad_word), kNegInf);
  const TokenId eos_word[] = {v.eos_id(), v.id("woman")};
  EXPECT_EQ(w.score(3, eos_word), kNegInf);
}

TEST(Wrapper, EosCannotAppearTooEarly) {
  // 1-based lattice position p = 0-based index p-1
  const Vocabulary v({"woman"});
  auto base = flat(v, 2);
  const std::size_t L = 6, dL = 2;
  const LengthRelaxedProvider w(base, LengthWindow(L, dL));
  const TokenId span[] = {v.id("woman"), v.eos_id()};
  const std::size_t one_based_early = L - dL - 1;
  const std::size_t one_based_ok = L - dL;
  EXPECT_EQ(w.score(one_based_early - 2, span), kNegInf);
  EXPECT_EQ(w.score(one_based_ok - 2, span), -1.0);
  EXPECT_EQ(w.score(L + dL - 2, span), -1.0);  // the latest eos slot
  const TokenId eos[] = {v.eos_id()};
  EXPECT_EQ(w.score(one_based_early - 1, eos), kNegInf);
  EXPECT_EQ(w.score(one_based_ok - 1, eos), -1.0);
}

TEST(Wrapper, LastPositionMustBePad) {
  const Vocabulary v({"woman"});
  auto base = flat(v, 2);
  const LengthRelaxedProvider w(base, LengthWindow(4, 1));
  const std::size_t last = w.window().lattice_length() - 1;
  const TokenId eos_pad[] = {v.eos_id(), v.pad_id()};
  const TokenId pad_pad[] = {v.pad_id(), v.pad_id()};
  const TokenId word_eos[] = {v.id("woman"), v.eos_id()};
  EXPECT_EQ(w.score(last - 1, eos_pad), 0.0);
  EXPECT_EQ(w.score(last - 1, pad_pad), 0.0);
  EXPECT_EQ(w.score(last - 1, word_eos), kNegInf);
  const TokenId pad[] = {v.pad_id()};
  const TokenId word[] = {v.id("woman")};
  EXPECT_EQ(w.score(last, pad), 0.0);
  EXPECT_EQ(w.score(last, word), kNegInf);
}

TEST(Wrapper, WordsStopWhereEosCanNoLongerFit) {
  const Vocabulary v({"woman"});
  auto base = flat(v, 1);
  const LengthRelaxedProvider w(base, LengthWindow(4, 1));
  const std::size_t latest = w.window().latest_eos();
  const TokenId word[] = {v.id("woman")};
  const TokenId eos[] = {v.eos_id()};
  EXPECT_EQ(w.score(latest - 1, word), -1.0);
  EXPECT_EQ(w.score(latest, word), kNegInf);
  EXPECT_EQ(w.score(latest, eos), -1.0);
  const TokenId word_word[] = {v.id("woman"), v.id("woman")};
  EXPECT_EQ(w.score(latest - 1, word_word), kNegInf);
}

TEST(Wrapper, ReservedTokensNeverReachTheBase) {
  const Vocabulary v({"a", "b"});
  oracle::FunctionProvider base(v, 2, [&](std::size_t, std::span<const TokenId> s) {
    for (const auto t : s) EXPECT_TRUE(t != v.pad_id() && t != v.epsilon_id());
    return -1.0;
  });
  const LengthRelaxedProvider w(base, LengthWindow(4, 2));
  const auto cands = all_candidates(v);
  for (std::size_t m = 0; m <= 2; ++m)
    for (std::size_t l = 0; l + m < w.window().lattice_length(); ++l)
      oracle::for_each_sequence(m + 1, cands, [&](const Tokens& s) { (void)w.score(l, s); });
  const TokenId eps[] = {v.epsilon_id()};
  EXPECT_EQ(w.score(1, eps), kNegInf);
  const TokenId pad0[] = {v.pad_id()};
  EXPECT_EQ(w.score(0, pad0), kNegInf);
}

TEST(Wrapper, BatchMatchesSingleScores) {
  const auto v = oracle::word_vocab(3);
  oracle::RandomProvider base(v, 2, 5);
  const LengthRelaxedProvider w(base, LengthWindow(4, 1));
  std::vector<SpanQuery> qs;
  const auto cands = all_candidates(v);
  for (std::size_t l = 0; l + 1 < 6; ++l)
    oracle::for_each_sequence(2, cands, [&](const Tokens& s) { qs.push_back({l, s}); });
  const auto batch = w.score_batch(qs);
  for (std::size_t i = 0; i < qs.size(); ++i) EXPECT_EQ(batch[i], w.score(qs[i].position, qs[i].tokens));
}

TEST(StripPadding, Examples) {
  const Vocabulary v({"an", "amazing", "woman", "."});
  const auto path = v.encode("an amazing woman . <eos> <pad> <pad> <pad>");
  EXPECT_EQ(v.decode(strip_padding(path, v)), "an amazing woman .");
  EXPECT_TRUE(strip_padding(v.encode("<eos> <pad> <pad>"), v).empty());
  try {
    strip_padding(v.encode("an woman"), v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "unterminated hypothesis");
  }
  EXPECT_THROW(strip_padding(v.encode("an <pad> <eos>"), v), Error);
}

namespace {

// every finite-score lattice path of the wrapped order-m model
template <typename Fn>
void for_each_finite_path(const LengthRelaxedProvider& w, std::size_t m, Fn&& fn) {
  const auto cands = all_candidates(w.vocab());
  oracle::for_each_sequence(w.window().lattice_length(), cands, [&](const Tokens& x) {
    const double s = oracle::nested_score(w, x, m);
    if (std::isfinite(s)) fn(x, s);
  });
}

}  // namespace

TEST(Wrapper, WindowSoundnessAndPadNeutralityByEnumeration) {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t V = 1 + rng() % 2;
    const std::size_t dL = rng() % 3;
    const std::size_t L = dL + 1 + rng() % 3;
    const std::size_t m = 1 + rng() % 2;  // order 0 alone does not constrain neighbours
    const auto v = oracle::word_vocab(V);
    oracle::RandomProvider base(v, 2, rng());
    const LengthRelaxedProvider w(base, LengthWindow(L, dL));
    std::size_t paths = 0;
    for_each_finite_path(w, m, [&](const Tokens& x, double s) {
      ++paths;
      const auto out = strip_padding(x, v);
      EXPECT_GE(out.size(), L - dL - 1);
      EXPECT_LE(out.size(), L + dL - 1);
      for (std::size_t i = out.size() + 1; i < x.size(); ++i) EXPECT_EQ(x[i], v.pad_id());
      // the score is the base score of words+eos: pads add nothing
      Tokens prefix(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(out.size() + 1));
      if (prefix.size() > m) {
        EXPECT_EQ(s, oracle::sequence_score(base, prefix, m));
      }
    });
    // exactly one finite path per (length, words) choice
    std::size_t want = 0;
    for (std::size_t n = L - dL - 1; n <= L + dL - 1; ++n) want += static_cast<std::size_t>(std::pow(V, n));
    EXPECT_EQ(paths, want);
    EXPECT_GT(paths, 0u);
  }
}

TEST(Wrapper, TrailingPadsAreNeutralAcrossWindows) {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 30; ++trial) {
    const auto v = oracle::word_vocab(3);
    oracle::RandomProvider base(v, 2, rng());
    const std::size_t L = 4;
    const auto words = oracle::word_ids(v);
    // a length-L sentence padded in a wider window scores the same as in the tight one
    Tokens sentence;
    for (std::size_t i = 0; i + 1 < L; ++i) sentence.push_back(words[rng() % words.size()]);
    sentence.push_back(v.eos_id());
    for (std::size_t m = 0; m <= 2; ++m) {
      double prev = 0;
      for (std::size_t dL = 0; dL <= 3; ++dL) {
        const LengthRelaxedProvider w(base, LengthWindow(L, dL));
        Tokens x = sentence;
        x.resize(w.window().lattice_length(), v.pad_id());
        const double s = oracle::sequence_score(w, x, m);
        EXPECT_TRUE(std::isfinite(s));
        if (dL > 0) {
          EXPECT_EQ(s, prev);
        }
        prev = s;
      }
    }
  }
}

TEST(Decode, DeltaZeroEqualsHardLengthConstraint) {
  std::mt19937_64 rng(85);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t V = 2 + rng() % 2;
    const std::size_t L = 1 + rng() % 5;
    const int M = 1 + static_cast<int>(rng() % 2);
    const auto v = oracle::word_vocab(V);
    oracle::RandomProvider base(v, 2, rng());
    // enumerate words^(L-1) + eos directly on the base model
    const auto words = oracle::word_ids(v);
    Tokens with_eos = words;
    with_eos.insert(with_eos.begin(), v.eos_id());
    oracle::BestSequence best;
    oracle::for_each_sequence(L - 1, words, [&](const Tokens& w) {
      Tokens x = w;
      x.push_back(v.eos_id());
      const std::size_t m = std::min<std::size_t>(M, x.size() - 1);
      const double s = oracle::nested_score(base, x, m);
      if (s > best.score) best = {w, s};
    });
    DecodeConfig cfg;
    cfg.fixed_length = L;
    cfg.iterations = M + 1;
    cfg.k_limit = 64;
    const auto r = decode(Tokens{}, 0, base, cfg);
    EXPECT_EQ(r.tokens, best.tokens) << trial;
    EXPECT_EQ(r.log_score, best.score) << trial;
  }
}

TEST(Decode, OutputLengthStaysInsideTheWindow) {
  std::mt19937_64 rng(87);
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = oracle::word_vocab(2 + rng() % 5);
    oracle::RandomProvider base(v, 3, rng());
    DecodeConfig cfg;
    cfg.delta_l = rng() % 4;
    cfg.fixed_length = cfg.delta_l + 1 + rng() % 6;
    cfg.iterations = 1 + static_cast<int>(rng() % 4);
    cfg.k_limit = 1 + rng() % 8;
    const auto r = decode(Tokens{}, 0, base, cfg);
    EXPECT_GE(r.tokens.size() + 1, *cfg.fixed_length - cfg.delta_l);
    EXPECT_LE(r.tokens.size() + 1, *cfg.fixed_length + cfg.delta_l);
    EXPECT_EQ(r.lattice_path.size(), *cfg.fixed_length + cfg.delta_l + 1);
    EXPECT_TRUE(std::isfinite(r.log_score));
  }
}
