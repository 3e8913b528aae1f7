#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cascade/analysis.hpp"
#include "cascade/ngram.hpp"
#include "oracle.hpp"

using namespace cascade;

TEST(RepetitionRatio, HandValues) {
  const Vocabulary v({"the", "cat", "a", "b", "c"});
  EXPECT_EQ(repetition_ratio(v.encode("the cat the cat"), 1), 0.5);
  EXPECT_EQ(repetition_ratio(v.encode("a b c"), 2), 1.0);
  EXPECT_EQ(repetition_ratio(v.encode("the cat the cat"), 2), 2.0 / 3.0);
  EXPECT_THROW(repetition_ratio(v.encode("a b"), 3), Error);
  EXPECT_THROW(repetition_ratio(v.encode("a b"), 0), Error);
}

TEST(RepetitionRatio, MatchesSetRecount) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    Tokens x(1 + rng() % 30);
    for (auto& t : x) t = static_cast<TokenId>(rng() % 4);
    const std::size_t n = 1 + rng() % x.size();
    const double r = repetition_ratio(x, n);
    EXPECT_EQ(r, oracle::unique_ratio(x, n));
    EXPECT_GT(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Beam, ExhaustiveWidthEqualsBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t V = 2 + rng() % 3;
    const std::size_t L = 1 + rng() % 5;
    const int m = static_cast<int>(rng() % 3);
    const auto v = oracle::word_vocab(V);
    oracle::RandomProvider p(v, 2, rng(), 0.15);
    const auto words = oracle::word_ids(v);
    const auto mm = static_cast<std::size_t>(std::min<int>(m, static_cast<int>(L) - 1));
    const auto want = oracle::brute_best(p, L, words, mm);
    if (!std::isfinite(want.score)) continue;
    const auto got = beam_search(p, L, words, static_cast<std::size_t>(std::pow(V, L)), m);
    EXPECT_EQ(got.path, want.tokens) << trial;
    EXPECT_EQ(got.log_score, want.score) << trial;
    const auto ex = exhaustive_optimum(p, L, words, m);
    ASSERT_TRUE(ex);
    EXPECT_EQ(ex->log_score, want.score);
    EXPECT_EQ(ex->path, want.tokens);
  }
}

TEST(Beam, WidthOneIsGreedy) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 60; ++trial) {
    const auto v = oracle::word_vocab(2 + rng() % 5);
    oracle::RandomProvider p(v, 2, rng());
    const auto words = oracle::word_ids(v);
    const std::size_t L = 1 + rng() % 7;
    const std::size_t m = std::min<std::size_t>(2, L - 1);
    Tokens greedy;
    double objective = 0;
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t ctx = std::min(m, t);
      double best = oracle::kNegInf;
      TokenId arg = 0;
      for (const auto w : words) {
        Tokens span(greedy.end() - static_cast<std::ptrdiff_t>(ctx), greedy.end());
        span.push_back(w);
        const double s = p.score(t - ctx, span);
        if (s > best) best = s, arg = w;
      }
      greedy.push_back(arg);
      if (t >= m) objective += best;
    }
    const auto got = beam_search(p, L, words, 1);
    EXPECT_EQ(got.path, greedy);
    EXPECT_DOUBLE_EQ(got.log_score, objective);
  }
}

TEST(Beam, Errors) {
  const auto v = oracle::word_vocab(2);
  oracle::RandomProvider p(v, 1, 1);
  const auto words = oracle::word_ids(v);
  EXPECT_THROW(beam_search(p, 3, words, 0), Error);
  EXPECT_THROW(beam_search(p, 0, words, 2), Error);
  EXPECT_THROW(beam_search(p, 3, words, 2, 2), Error);
  oracle::FunctionProvider dead(v, 1, [](std::size_t, std::span<const TokenId>) { return oracle::kNegInf; });
  EXPECT_THROW(beam_search(dead, 3, words, 2), Error);
}

TEST(Beam, DecodeRespectsTheLengthWindow) {
  const auto v = oracle::word_vocab(4);
  oracle::RandomProvider p(v, 2, 17);
  DecodeConfig cfg;
  cfg.fixed_length = 6;
  cfg.delta_l = 2;
  cfg.iterations = 3;
  const auto r = beam_decode(Tokens{}, 0, p, cfg, 5);
  EXPECT_EQ(r.lattice_path.size(), 9u);
  EXPECT_GE(r.tokens.size(), 3u);
  EXPECT_LE(r.tokens.size(), 7u);
  EXPECT_TRUE(std::isfinite(r.log_score));
}

namespace {

std::set<Tokens> tokens_at(const SpanSet& s, std::size_t l) {
  std::set<Tokens> out;
  for (const auto& span : s.at(l)) out.insert(span.tokens);
  return out;
}

SpanSet all_unigrams(const Tokens& words, std::size_t length) {
  std::vector<std::vector<Span>> u(length);
  for (auto& p : u)
    for (const auto w : words) p.push_back({{w}, 0.0});
  return SpanSet(0, u);
}

}  // namespace

TEST(NgramPruning, HighRawSpanWithoutFutureIsKeptOnlyByNgram) {
  // (a,a) at 0 has the best raw score but nothing may follow a at 1
  const Vocabulary v({"a", "b", "c"});
  const TokenId a = v.id("a"), c = v.id("c");
  oracle::FunctionProvider p(v, 1, [=](std::size_t l, std::span<const TokenId> s) {
    if (s.size() == 1) return 0.0;
    if (l == 0 && s[0] == a && s[1] == a) return 0.0;
    if (l == 1 && s[0] == a) return oracle::kNegInf;
    if (s[0] == c && s[1] == c) return -1.0;
    return -2.0;
  });
  const Tokens words{a, v.id("b"), c};
  const auto mm_oracle = oracle::brute_span_max_marginals(p, 3, words, 1);
  EXPECT_FALSE(mm_oracle.contains({0, Tokens{a, a}}));  // max-marginal is -inf

  const auto states = all_unigrams(words, 3);
  const auto by_mm = prune_step(states, p, 1);
  EXPECT_FALSE(by_mm.stats.disconnected);
  EXPECT_EQ(tokens_at(by_mm.next, 0), (std::set<Tokens>{{c, c}}));
  const auto by_ngram = prune_by_ngram_score(states, p, 1);
  EXPECT_TRUE(by_ngram.stats.disconnected);  // (a,a) emptied position 0; fell back
  EXPECT_EQ(tokens_at(by_ngram.next, 0), (std::set<Tokens>{{c, c}}));
  // with two slots the ngram criterion wastes one on (a,a)
  EXPECT_EQ(prune_step(states, p, 2).next.at(0).size(), 2u);
  EXPECT_EQ(prune_by_ngram_score(states, p, 2).next.at(0).size(), 1u);
}

TEST(NgramPruning, SingleEdgeChainsRankIdentically) {
  // one span position: the max-marginal is the potential itself
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 40; ++trial) {
    const auto v = oracle::word_vocab(2 + rng() % 4);
    oracle::RandomProvider p(v, 1, rng());
    const auto states = all_unigrams(oracle::word_ids(v), 2);
    const std::size_t k = 1 + rng() % 6;
    EXPECT_EQ(tokens_at(prune_step(states, p, k).next, 0), tokens_at(prune_by_ngram_score(states, p, k).next, 0));
  }
}

TEST(NgramPruning, TrapFamilyNeverFavoursNgram) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t V = 2 + rng() % 2;
    const auto trap = oracle::make_trap(rng, V, 4 + rng() % 3);
    auto p = trap.provider();
    CascadeOptions opt;
    opt.k_limit = V;
    opt.iterations = 3;
    opt.candidates = oracle::word_ids(trap.vocab);
    const auto mm = cascade_search(p, trap.length, opt);
    opt.criterion = PruneCriterion::kNgramScore;
    const auto ng = cascade_search(p, trap.length, opt);
    const auto best = oracle::brute_best(p, trap.length, opt.candidates, 2);
    EXPECT_EQ(mm.log_score, best.score);
    EXPECT_GE(mm.log_score, ng.log_score);
  }
}

TEST(Sweep, RowsFollowGridOrderWithMonotonePathCounts) {
  const auto model = train_ngram({{"a", "b", "c"}, {"b", "c", "a", "a"}, {"c", "a", "b"}}, 3, 0.2);
  NgramModel scorer = model;
  SweepGrid grid{{2}, {1, 2}, {0}};
  SweepOptions opt;
  opt.base.fixed_length = 5;
  const auto rows = sweep({SweepSource{}}, scorer, grid, opt);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].iterations, 1);
  EXPECT_EQ(rows[1].iterations, 2);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.error.empty()) << r.error;
    EXPECT_EQ(r.paths.size(), static_cast<std::size_t>(r.iterations));
    for (std::size_t i = 1; i < r.paths.size(); ++i) EXPECT_LE(r.paths[i], r.paths[i - 1]);
  }
  grid.delta_l = {0, 1, 3};
  grid.k = {2, 4};
  EXPECT_EQ(sweep({SweepSource{}}, scorer, grid, opt).size(), 12u);
  EXPECT_THROW(sweep({SweepSource{}}, scorer, SweepGrid{{}, {1}, {0}}, opt), Error);
}

TEST(Sweep, WiderWindowNeverLowersTheOptimum) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const auto v = oracle::word_vocab(2 + rng() % 2);
    oracle::RandomProvider p(v, 1, rng(), 0.0, false);
    SweepOptions opt;
    opt.base.fixed_length = 5 + rng() % 2;  // keeps order 1 reachable at delta_l = 3
    opt.oracle = true;
    opt.jobs = 3;
    // K covers every bigram, so the decode is exact and equals the oracle
    const auto rows = sweep({SweepSource{}}, p, SweepGrid{{64}, {2}, {0, 1, 2, 3}}, opt);
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ASSERT_TRUE(rows[i].oracle);
      EXPECT_EQ(rows[i].score, *rows[i].oracle);
      if (i > 0) {
        EXPECT_GE(rows[i].score, rows[i - 1].score);
      }
    }
  }
}

TEST(Sweep, FailedCellsAreRecordedAndTheRestRun) {
  const auto v = oracle::word_vocab(2);
  oracle::RandomProvider p(v, 1, 3);
  SweepOptions opt;
  opt.base.fixed_length = 4;
  const auto rows = sweep({SweepSource{}, SweepSource{}}, p, SweepGrid{{2}, {2, 5}, {0}}, opt);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_TRUE(rows[0].error.empty());
  EXPECT_NE(rows[1].error.find("exceed"), std::string::npos);
  EXPECT_EQ(rows[2].sentence, 1u);
  EXPECT_NE(rows[1].to_line().find("error="), std::string::npos);
}

TEST(Report, FixedKeys) {
  const auto v = oracle::word_vocab(3);
  oracle::RandomProvider p(v, 2, 31);
  DecodeConfig cfg;
  cfg.fixed_length = 5;
  cfg.iterations = 3;
  cfg.k_limit = 4;
  cfg.delta_l = 1;
  const auto line = make_report(decode(Tokens{}, 0, p, cfg), v, cfg).to_line();
  std::map<std::string, std::string> kv;
  std::istringstream in(line);
  for (std::string field; std::getline(in, field, '\t');) {
    const auto eq = field.find('=');
    ASSERT_NE(eq, std::string::npos) << field;
    kv[field.substr(0, eq)] = field.substr(eq + 1);
  }
  for (const char* key : {"k", "iters", "delta_l", "score", "paths_iter0", "paths_iter2", "spans_iter0", "spans_iter2",
                          "depth_iter0", "depth_iter2", "ms_total", "ms_scan", "tokens"})
    EXPECT_TRUE(kv.contains(key)) << key;
  EXPECT_EQ(kv["k"], "4");
  EXPECT_EQ(kv["iters"], "3");
  EXPECT_EQ(kv["delta_l"], "1");
  EXPECT_EQ(line.find('\n'), std::string::npos);
}
