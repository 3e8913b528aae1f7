#pragma once

// Cascaded decoding over increasing Markov orders.
//
// Iteration 0 keeps the top-K tokens per position by unary score. Iteration
// m >= 1 relabels the surviving m-token spans at each position as chain
// states, scores every overlap-consistent pair with the order-m potential of
// their (m+1)-token union, computes edge max-marginals with the tree scan and
// keeps the top-K unions per position. The last iteration returns the Viterbi
// path of its chain instead of pruning.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cascade/chain.hpp"
#include "cascade/error.hpp"
#include "cascade/length_relax.hpp"
#include "cascade/provider.hpp"
#include "cascade/semiring.hpp"

namespace cascade {

struct Span {
  Tokens tokens;
  double score = kNegInf;  // ranking value at selection time (max-marginal for m >= 1)
};

/// Surviving spans of one order: position l holds (order+1)-token spans
/// starting at l, sorted by token tuple. A span's index in that order is its
/// relabeled chain state.
class SpanSet {
 public:
  SpanSet() = default;
  SpanSet(int order, std::vector<std::vector<Span>> positions) : order_(order), positions_(std::move(positions)) {
    for (auto& p : positions_) {
      std::sort(p.begin(), p.end(), [](const Span& a, const Span& b) { return a.tokens < b.tokens; });
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i].tokens.size() != static_cast<std::size_t>(order_) + 1) throw Error("span length does not match order");
        if (i > 0 && p[i].tokens == p[i - 1].tokens) throw Error("duplicate span");
      }
    }
  }

  int order() const noexcept { return order_; }
  std::size_t position_count() const noexcept { return positions_.size(); }
  const std::vector<Span>& at(std::size_t l) const { return positions_.at(l); }
  const std::vector<std::vector<Span>>& positions() const noexcept { return positions_; }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& p : positions_) n += p.size();
    return n;
  }

  std::size_t max_count() const {
    std::size_t n = 0;
    for (const auto& p : positions_) n = std::max(n, p.size());
    return n;
  }

  /// Relabeled state of `tokens` at position l.
  std::optional<std::size_t> phi(std::size_t l, std::span<const TokenId> tokens) const {
    const auto& p = positions_.at(l);
    const Tokens key(tokens.begin(), tokens.end());
    const auto it = std::lower_bound(p.begin(), p.end(), key, [](const Span& s, const Tokens& k) { return s.tokens < k; });
    if (it == p.end() || it->tokens != key) return std::nullopt;
    return static_cast<std::size_t>(it - p.begin());
  }

  /// `right` (at l+1) continues `left` (at l): they share `order` tokens.
  static bool overlaps(const Tokens& left, const Tokens& right) {
    return std::equal(left.begin() + 1, left.end(), right.begin(), right.end() - 1);
  }

  bool non_empty() const {
    return !positions_.empty() && std::none_of(positions_.begin(), positions_.end(), [](const auto& p) { return p.empty(); });
  }

  /// Every span has an overlapping partner on each side that exists.
  bool adjacency_consistent() const {
    if (order_ == 0) return true;
    for (std::size_t l = 0; l < positions_.size(); ++l)
      for (const auto& s : positions_[l]) {
        if (l > 0 && std::none_of(positions_[l - 1].begin(), positions_[l - 1].end(),
                                  [&](const Span& o) { return overlaps(o.tokens, s.tokens); }))
          return false;
        if (l + 1 < positions_.size() && std::none_of(positions_[l + 1].begin(), positions_[l + 1].end(),
                                                      [&](const Span& o) { return overlaps(s.tokens, o.tokens); }))
          return false;
      }
    return true;
  }

 private:
  int order_ = 0;
  std::vector<std::vector<Span>> positions_;
};

enum class PruneCriterion {
  kMaxMarginal,  // rank spans by max-marginal (the cascade)
  kNgramScore,   // rank spans by their own potential (ablation baseline)
};

struct IterationStats {
  int order = 0;
  std::size_t spans = 0;      // finite-potential spans scored at this order
  std::size_t survivors = 0;  // spans kept for the next iteration (0 on the last one)
  BigCount paths = 0;         // sequences in the search space with a finite score at this order
  ScanTrace trace;
  double ms_potentials = 0;
  double ms_scan = 0;
  double ms_prune = 0;
  bool disconnected = false;  // n-gram pruning broke the lattice and fell back to max-marginals
};

struct Diagnostics {
  std::vector<IterationStats> iterations;
  int effective_iterations = 0;
  double ms_total = 0;

  double ms_scan() const {
    double t = 0;
    for (const auto& it : iterations) t += it.ms_scan;
    return t;
  }
  double ms_potentials() const {
    double t = 0;
    for (const auto& it : iterations) t += it.ms_potentials;
    return t;
  }
};

/// Admissibility of adjacent tokens for the order-0-only decode.
using PairFilter = std::function<bool(std::size_t position, TokenId left, TokenId right)>;

struct CascadeOptions {
  std::size_t k_limit = 16;
  int iterations = 2;  // M+1
  PruneCriterion criterion = PruneCriterion::kMaxMarginal;
  Tokens candidates;   // token alphabet of the lattice
  Tokens forced;       // kept at every position where their unary score is finite
  PairFilter order0_pairs;
  TreeOptions tree;
};

struct CascadeResult {
  Tokens path;
  double log_score = kNegInf;
  Diagnostics diagnostics;
  SpanSet final_states;  // states of the last chain (order iterations-2), empty when iterations == 1
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

inline bool ranks_before(double score_a, const Tokens& a, double score_b, const Tokens& b) {
  if (score_a != score_b) return score_a > score_b;
  return a < b;
}

inline std::vector<double> score_all(const PotentialProvider& provider, std::span<const SpanQuery> queries) {
  auto values = provider.score_batch(queries);
  if (values.size() != queries.size()) throw Error("scorer returned " + std::to_string(values.size()) + " values for " +
                                                   std::to_string(queries.size()) + " spans");
  for (const auto v : values)
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) throw Error("scorer returned a non-finite potential");
  return values;
}

}  // namespace detail

/// Top-K tokens per position by order-0 potential (ties: smaller id first),
/// plus every forced token with a finite score. Forced tokens do not use up
/// any of the K slots.
inline SpanSet init_unigram_set(const PotentialProvider& provider, std::size_t lattice_length, const Tokens& candidates,
                                std::size_t k, const Tokens& forced = {}, IterationStats* stats = nullptr) {
  if (lattice_length == 0) throw Error("empty lattice");
  if (k == 0) throw Error("K must be positive");
  const auto t0 = detail::Clock::now();
  std::vector<SpanQuery> queries;
  queries.reserve(lattice_length * candidates.size());
  for (std::size_t l = 0; l < lattice_length; ++l)
    for (const auto x : candidates) queries.push_back({l, Tokens{x}});
  const auto values = detail::score_all(provider, queries);
  const double ms_potentials = detail::ms_since(t0);

  const auto t1 = detail::Clock::now();
  std::vector<std::vector<Span>> positions(lattice_length);
  BigCount paths = 1;
  std::size_t finite = 0;
  for (std::size_t l = 0; l < lattice_length; ++l) {
    std::vector<Span> ranked;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double v = values[l * candidates.size() + i];
      if (std::isfinite(v)) ranked.push_back({Tokens{candidates[i]}, v});
    }
    if (ranked.empty()) throw Error("no feasible token at position " + std::to_string(l));
    finite += ranked.size();
    paths *= ranked.size();
    const auto is_forced = [&](const Span& s) { return std::find(forced.begin(), forced.end(), s.tokens[0]) != forced.end(); };
    std::vector<Span> kept;
    std::copy_if(ranked.begin(), ranked.end(), std::back_inserter(kept), is_forced);
    std::erase_if(ranked, is_forced);
    std::sort(ranked.begin(), ranked.end(),
              [](const Span& a, const Span& b) { return detail::ranks_before(a.score, a.tokens, b.score, b.tokens); });
    kept.insert(kept.end(), ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked.size())));
    positions[l] = std::move(kept);
  }
  SpanSet set(0, std::move(positions));
  if (stats) {
    stats->order = 0;
    stats->spans = finite;
    stats->survivors = set.total();
    stats->paths = paths;
    stats->ms_potentials = ms_potentials;
    stats->ms_prune = detail::ms_since(t1);
  }
  return set;
}

struct ChainCell {
  std::size_t left = 0;
  std::size_t right = 0;
  Tokens span;  // union of the two states
  double potential = kNegInf;
};

struct BuiltChain {
  ChainScores chain;
  std::vector<std::vector<ChainCell>> cells;  // finite cells per edge
  std::size_t scored = 0;                     // spans sent to the scorer
};

/// First-order chain over the relabeled spans of `states` (order s). Edge l
/// joins states at l and l+1 that share s tokens and carries the order-(s+1)
/// potential of their union, i.e. f_l^(s+1)(x_{l:l+s+1}).
inline BuiltChain build_chain(const SpanSet& states, const PotentialProvider& provider) {
  if (states.position_count() < 2) throw Error("degenerate chain");
  const std::size_t edges = states.position_count() - 1;
  const std::size_t order = static_cast<std::size_t>(states.order());

  std::vector<SpanQuery> queries;
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> where;  // edge, left, right
  for (std::size_t l = 0; l < edges; ++l) {
    const auto& left = states.at(l);
    const auto& right = states.at(l + 1);
    std::map<Tokens, std::vector<std::size_t>> by_prefix;
    for (std::size_t b = 0; b < right.size(); ++b)
      by_prefix[Tokens(right[b].tokens.begin(), right[b].tokens.begin() + static_cast<std::ptrdiff_t>(order))].push_back(b);
    for (std::size_t a = 0; a < left.size(); ++a) {
      const Tokens suffix(left[a].tokens.begin() + 1, left[a].tokens.end());
      const auto it = by_prefix.find(suffix);
      if (it == by_prefix.end()) continue;
      for (const auto b : it->second) {
        Tokens span = left[a].tokens;
        span.push_back(right[b].tokens.back());
        queries.push_back({l, std::move(span)});
        where.emplace_back(l, a, b);
      }
    }
  }
  const auto values = detail::score_all(provider, queries);

  BuiltChain built;
  built.chain = ChainScores(edges, std::max<std::size_t>(states.max_count(), 1));
  built.cells.resize(edges);
  built.scored = queries.size();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!std::isfinite(values[i])) continue;
    const auto [e, a, b] = where[i];
    built.chain.set(e, a, b, values[i]);
    built.cells[e].push_back({a, b, std::move(queries[i].tokens), values[i]});
  }
  for (std::size_t e = 0; e < edges; ++e)
    if (built.cells[e].empty()) throw Error("lattice disconnected at position " + std::to_string(e));
  return built;
}

/// Removes spans without an overlapping partner on either side until none
/// remain. Returns false if some position ends up empty.
inline bool repair_adjacency(std::vector<std::vector<Span>>& positions) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t l = 0; l < positions.size(); ++l) {
      auto& here = positions[l];
      const auto before = here.size();
      std::erase_if(here, [&](const Span& s) {
        const bool left_ok = l == 0 || std::any_of(positions[l - 1].begin(), positions[l - 1].end(),
                                                   [&](const Span& o) { return SpanSet::overlaps(o.tokens, s.tokens); });
        const bool right_ok = l + 1 == positions.size() ||
                              std::any_of(positions[l + 1].begin(), positions[l + 1].end(),
                                          [&](const Span& o) { return SpanSet::overlaps(s.tokens, o.tokens); });
        return !(left_ok && right_ok);
      });
      changed = changed || here.size() != before;
    }
  }
  return std::none_of(positions.begin(), positions.end(), [](const auto& p) { return p.empty(); });
}

struct PruneResult {
  SpanSet next;
  MaxMarginalTable max_marginals;
  IterationStats stats;
};

namespace detail {

// Top-k cells of one edge by (key desc, span asc); with an anchor cell the
// anchor is guaranteed a slot.
inline std::vector<Span> select_edge(const std::vector<ChainCell>& cells, const MaxMarginalTable& mm, std::size_t edge,
                                     std::size_t k, PruneCriterion criterion,
                                     std::optional<std::pair<std::size_t, std::size_t>> anchor) {
  struct Ranked {
    double key;
    const ChainCell* cell;
  };
  std::vector<Ranked> ranked;
  for (const auto& c : cells) {
    const double m = mm.at(edge, c.left, c.right);
    if (criterion == PruneCriterion::kMaxMarginal) {
      if (std::isfinite(m)) ranked.push_back({m, &c});
    } else {
      ranked.push_back({c.potential, &c});
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return ranks_before(a.key, a.cell->span, b.key, b.cell->span);
  });
  if (ranked.size() > k) {
    if (anchor) {
      const auto pos = std::find_if(ranked.begin(), ranked.end(), [&](const Ranked& r) {
        return r.cell->left == anchor->first && r.cell->right == anchor->second;
      });
      if (pos != ranked.end() && pos - ranked.begin() >= static_cast<std::ptrdiff_t>(k)) std::iter_swap(ranked.begin() + static_cast<std::ptrdiff_t>(k) - 1, pos);
    }
    ranked.resize(k);
  }
  std::vector<Span> out;
  out.reserve(ranked.size());
  for (const auto& r : ranked) out.push_back({r.cell->span, mm.at(edge, r.cell->left, r.cell->right)});
  return out;
}

}  // namespace detail

/// One cascade iteration: scores the order-(s+1) unions of `states` (order s),
/// computes their max-marginals and keeps the top `k` per position.
///
/// With kMaxMarginal the Viterbi path's spans always keep a slot, so the
/// result is non-empty and adjacency-consistent. kNgramScore ranks by raw
/// potential; when that empties a position after adjacency repair, the
/// affected positions switch to max-marginal ranking and `disconnected` is set.
inline PruneResult prune_step(const SpanSet& states, const PotentialProvider& provider, std::size_t k,
                              PruneCriterion criterion = PruneCriterion::kMaxMarginal, TreeOptions tree = {}) {
  if (k == 0) throw Error("K must be positive");
  PruneResult result;
  auto& stats = result.stats;
  stats.order = states.order() + 1;

  auto t = detail::Clock::now();
  const auto built = build_chain(states, provider);
  stats.ms_potentials = detail::ms_since(t);
  for (const auto& c : built.cells) stats.spans += c.size();

  t = detail::Clock::now();
  auto [mm, trace] = tree_max_marginals(built.chain, tree);
  const auto best = viterbi(built.chain);
  stats.ms_scan = detail::ms_since(t);
  stats.trace = trace;

  t = detail::Clock::now();
  stats.paths = count_paths(built.chain);
  const std::size_t edges = built.chain.edge_count();
  std::vector<bool> use_mm(edges, criterion == PruneCriterion::kMaxMarginal);
  std::vector<std::vector<Span>> positions;
  while (true) {
    positions.assign(edges, {});
    for (std::size_t e = 0; e < edges; ++e) {
      const auto c = use_mm[e] ? PruneCriterion::kMaxMarginal : PruneCriterion::kNgramScore;
      std::optional<std::pair<std::size_t, std::size_t>> anchor;
      if (use_mm[e]) anchor = std::pair{best.path[e], best.path[e + 1]};
      positions[e] = detail::select_edge(built.cells[e], mm, e, k, c, anchor);
    }
    auto repaired = positions;
    const bool ok = repair_adjacency(repaired);
    if (ok) {
      positions = std::move(repaired);
      break;
    }
    stats.disconnected = true;
    bool switched = false;
    for (std::size_t e = 0; e < edges; ++e)
      if (repaired[e].empty() && !use_mm[e]) use_mm[e] = switched = true;
    if (!switched) {
      if (std::all_of(use_mm.begin(), use_mm.end(), [](bool b) { return b; }))
        throw Error("pruning emptied the lattice");  // unreachable: the anchor path survives
      std::fill(use_mm.begin(), use_mm.end(), true);
    }
  }
  result.next = SpanSet(states.order() + 1, std::move(positions));
  stats.survivors = result.next.total();
  stats.ms_prune = detail::ms_since(t);
  result.max_marginals = std::move(mm);
  return result;
}

/// Runs the whole cascade over a lattice of `lattice_length` positions.
/// The order is capped at lattice_length-1 (longer spans do not fit).
inline CascadeResult cascade_search(PotentialProvider& provider, std::size_t lattice_length, const CascadeOptions& options) {
  if (options.iterations < 1) throw Error("iterations must be >= 1");
  if (options.k_limit == 0) throw Error("K must be positive");
  if (options.candidates.empty()) throw Error("empty candidate alphabet");
  const auto start = detail::Clock::now();
  const int last = std::min(options.iterations - 1, static_cast<int>(lattice_length) - 1);
  if (last > provider.max_order())
    throw Error("scorer supports orders up to " + std::to_string(provider.max_order()) + ", cascade needs " +
                std::to_string(last));

  CascadeResult result;
  auto& diag = result.diagnostics;
  diag.effective_iterations = last + 1;

  auto wrap = [](int m, auto&& fn) -> decltype(auto) {
    try {
      return fn();
    } catch (const TransportError& e) {
      throw TransportError("iteration " + std::to_string(m) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("iteration " + std::to_string(m) + ": " + e.what());
    }
  };

  provider.begin_iteration(0);
  IterationStats first;
  if (last == 0) {
    // Non-autoregressive decode: best token per position, subject to the optional pair filter.
    const auto unary = wrap(0, [&] {
      return init_unigram_set(provider, lattice_length, options.candidates, options.candidates.size(), {}, &first);
    });
    const auto t = detail::Clock::now();
    if (lattice_length == 1 || !options.order0_pairs) {
      for (std::size_t l = 0; l < lattice_length; ++l) {
        const auto& p = unary.at(l);
        const auto best = std::min_element(p.begin(), p.end(), [](const Span& a, const Span& b) {
          return detail::ranks_before(a.score, a.tokens, b.score, b.tokens);
        });
        result.path.push_back(best->tokens[0]);
      }
    } else {
      ChainScores chain(lattice_length - 1, unary.max_count());
      for (std::size_t l = 0; l + 1 < lattice_length; ++l)
        for (std::size_t a = 0; a < unary.at(l).size(); ++a)
          for (std::size_t b = 0; b < unary.at(l + 1).size(); ++b) {
            const auto& x = unary.at(l)[a];
            const auto& y = unary.at(l + 1)[b];
            if (!options.order0_pairs(l, x.tokens[0], y.tokens[0])) continue;
            chain.set(l, a, b, l + 2 == lattice_length ? x.score + y.score : x.score);
          }
      const auto v = wrap(0, [&] { return viterbi(chain); });
      for (std::size_t l = 0; l < lattice_length; ++l) result.path.push_back(unary.at(l)[v.path[l]].tokens[0]);
    }
    double total = 0.0;
    for (std::size_t l = 0; l < lattice_length; ++l) total += unary.at(l)[*unary.phi(l, Tokens{result.path[l]})].score;
    result.log_score = total;
    first.ms_scan = detail::ms_since(t);
    first.survivors = 0;
    diag.iterations.push_back(first);
    diag.ms_total = detail::ms_since(start);
    return result;
  }

  SpanSet states = wrap(0, [&] {
    return init_unigram_set(provider, lattice_length, options.candidates, options.k_limit, options.forced, &first);
  });
  first.survivors = states.total();
  diag.iterations.push_back(first);
  for (int m = 1; m < last; ++m) {
    provider.begin_iteration(m);
    auto step = wrap(m, [&] { return prune_step(states, provider, options.k_limit, options.criterion, options.tree); });
    diag.iterations.push_back(step.stats);
    states = std::move(step.next);
  }

  provider.begin_iteration(last);
  IterationStats final_stats;
  final_stats.order = last;
  auto t = detail::Clock::now();
  const auto built = wrap(last, [&] { return build_chain(states, provider); });
  final_stats.ms_potentials = detail::ms_since(t);
  for (const auto& c : built.cells) final_stats.spans += c.size();
  t = detail::Clock::now();
  const auto scan = wrap(last, [&] { return tree_max_marginals(built.chain, options.tree); });
  const auto best = wrap(last, [&] { return viterbi(built.chain); });
  final_stats.trace = scan.second;
  final_stats.ms_scan = detail::ms_since(t);
  final_stats.paths = count_paths(built.chain);
  diag.iterations.push_back(final_stats);

  result.path = states.at(0)[best.path[0]].tokens;
  for (std::size_t l = 1; l < best.path.size(); ++l) result.path.push_back(states.at(l)[best.path[l]].tokens.back());
  result.log_score = best.log_score;
  result.final_states = std::move(states);
  diag.ms_total = detail::ms_since(start);
  return result;
}

/// Affine length prediction: L = round(slope * source_length + intercept),
/// where source_length counts the source's terminating eos.
struct LengthRule {
  double slope = 1.0;
  double intercept = 0.0;

  std::size_t predict(std::size_t source_length) const {
    const double l = std::round(slope * static_cast<double>(source_length) + intercept);
    return l < 1 ? 1 : static_cast<std::size_t>(l);
  }
};

struct DecodeConfig {
  std::size_t k_limit = 16;
  int iterations = 2;  // M+1
  std::size_t delta_l = 0;
  LengthRule length_rule;
  std::optional<std::size_t> fixed_length;  // overrides length_rule
  PruneCriterion criterion = PruneCriterion::kMaxMarginal;
  TreeOptions tree;

  void validate(const PotentialProvider& scorer) const {
    if (k_limit == 0) throw Error("K must be positive");
    if (iterations < 1) throw Error("iterations must be >= 1");
    if (iterations > scorer.max_order() + 1)
      throw Error("iterations (" + std::to_string(iterations) + ") exceed scorer's max order + 1 (" +
                  std::to_string(scorer.max_order() + 1) + ")");
  }

  std::size_t predicted_length(std::size_t source_length) const {
    return fixed_length ? *fixed_length : length_rule.predict(source_length);
  }
};

struct DecodeResult {
  Tokens tokens;        // output before eos
  Tokens lattice_path;  // full lattice path including eos and pads
  double log_score = kNegInf;
  std::size_t predicted_length = 0;
  std::size_t lattice_length = 0;
  Diagnostics diagnostics;
};

/// Cascade options for decoding `scorer` through a length window.
inline CascadeOptions relaxed_options(const LengthRelaxedProvider& wrapped, const DecodeConfig& cfg) {
  const auto& vocab = wrapped.vocab();
  CascadeOptions options;
  options.k_limit = cfg.k_limit;
  // Every admissible sentence (at least L-dL tokens with eos) must contain a
  // whole span, or (eos, pad) spans would hide its words from the scorer.
  const auto& w = wrapped.window();
  options.iterations = std::min<int>(cfg.iterations, static_cast<int>(w.predicted_length() - w.delta()));
  options.criterion = cfg.criterion;
  options.tree = cfg.tree;
  options.candidates = vocab.output_ids();
  options.candidates.push_back(vocab.pad_id());
  std::sort(options.candidates.begin(), options.candidates.end());
  options.forced = {vocab.eos_id(), vocab.pad_id()};
  options.order0_pairs = [&wrapped](std::size_t l, TokenId a, TokenId b) {
    const TokenId pair[2] = {a, b};
    const auto r = wrapped.rule(l, pair);
    return !(r && std::isinf(*r));
  };
  return options;
}

/// Decodes one sentence: predicts the length, wraps the scorer with the
/// length window, runs the cascade and strips eos and padding.
inline DecodeResult decode(std::span<const TokenId> context, std::size_t source_length, PotentialProvider& scorer,
                           const DecodeConfig& cfg) {
  cfg.validate(scorer);
  scorer.set_context(context);
  const LengthWindow window(cfg.predicted_length(source_length), cfg.delta_l);
  LengthRelaxedProvider wrapped(scorer, window);
  auto found = cascade_search(wrapped, window.lattice_length(), relaxed_options(wrapped, cfg));

  DecodeResult out;
  out.tokens = strip_padding(found.path, scorer.vocab());
  out.lattice_path = std::move(found.path);
  out.log_score = found.log_score;
  out.predicted_length = window.predicted_length();
  out.lattice_length = window.lattice_length();
  out.diagnostics = std::move(found.diagnostics);
  return out;
}

/// `source` is a token sequence; its length (plus a terminating eos) feeds the length rule.
inline DecodeResult decode(std::span<const TokenId> source, PotentialProvider& scorer, const DecodeConfig& cfg) {
  const bool has_eos = !source.empty() && source.back() == scorer.vocab().eos_id();
  return decode(source, source.size() + (has_eos ? 0 : 1), scorer, cfg);
}

}  // namespace cascade
