#pragma once

// Baselines and measurement instruments around the cascade.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cascade/cascade.hpp"
#include "cascade/error.hpp"
#include "cascade/length_relax.hpp"
#include "cascade/provider.hpp"
#include "cascade/text.hpp"

namespace cascade {

struct BeamResult {
  Tokens path;
  double log_score = kNegInf;  // objective: sum over l of f_l^(order)
};

/// Left-to-right beam search for argmax of sum_l f_l^(order)(x_{l:l+order})
/// over sequences of `length` tokens from `candidates`.
///
/// Hypotheses are ranked by that objective plus, while the prefix is still
/// shorter than order+1, the lower-order potential f_0^(t)(x_{0:t}) of each
/// new token (the objective alone cannot tell short prefixes apart). The
/// finished beam is re-ranked by the objective alone. A -inf heuristic term
/// only demotes a hypothesis; -inf objective terms and pairs rejected by
/// `pairs` drop it. order < 0 means "as much context as the scorer allows".
/// Ties: lexicographically smaller prefix.
inline BeamResult beam_search(const PotentialProvider& provider, std::size_t length, const Tokens& candidates,
                              std::size_t beam, int order = -1, const PairFilter& pairs = {}) {
  if (beam == 0) throw Error("beam must be >= 1");
  if (length == 0) throw Error("empty lattice");
  int m = order < 0 ? provider.max_order() : order;
  if (m > provider.max_order()) throw Error("beam order exceeds scorer's maximum");
  m = std::min<int>(m, static_cast<int>(length) - 1);
  const auto om = static_cast<std::size_t>(m);

  struct Hyp {
    Tokens prefix;
    double rank = 0.0;
    double objective = 0.0;
  };
  std::vector<Hyp> hyps{Hyp{}};
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t ctx = std::min(om, t);
    std::vector<SpanQuery> queries;
    queries.reserve(hyps.size() * candidates.size());
    for (const auto& h : hyps)
      for (const auto w : candidates) {
        Tokens span(h.prefix.end() - static_cast<std::ptrdiff_t>(ctx), h.prefix.end());
        span.push_back(w);
        queries.push_back({t - ctx, std::move(span)});
      }
    const auto values = provider.score_batch(queries);
    std::vector<Hyp> next;
    for (std::size_t h = 0; h < hyps.size(); ++h)
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const double v = values[h * candidates.size() + c];
        if (t >= om && !std::isfinite(v)) continue;
        if (pairs && t > 0 && !pairs(t - 1, hyps[h].prefix.back(), candidates[c])) continue;
        Hyp n = hyps[h];
        n.prefix.push_back(candidates[c]);
        n.rank += std::isfinite(v) ? v : kSentinel;
        if (t >= om) n.objective += v;
        next.push_back(std::move(n));
      }
    if (next.empty()) throw Error("beam search found no feasible continuation at position " + std::to_string(t));
    auto by_rank = [](const Hyp& a, const Hyp& b) { return detail::ranks_before(a.rank, a.prefix, b.rank, b.prefix); };
    if (next.size() > beam) {
      std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(beam), next.end(), by_rank);
      next.resize(beam);
    }
    hyps = std::move(next);
  }
  const auto best = std::min_element(hyps.begin(), hyps.end(), [](const Hyp& a, const Hyp& b) {
    return detail::ranks_before(a.objective, a.prefix, b.objective, b.prefix);
  });
  return {best->prefix, best->objective};
}

/// Beam counterpart of decode(): same length window and wrapper, scored at
/// order cfg.iterations-1.
inline DecodeResult beam_decode(std::span<const TokenId> context, std::size_t source_length, PotentialProvider& scorer,
                                const DecodeConfig& cfg, std::size_t beam) {
  cfg.validate(scorer);
  scorer.set_context(context);
  const LengthWindow window(cfg.predicted_length(source_length), cfg.delta_l);
  LengthRelaxedProvider wrapped(scorer, window);
  const auto options = relaxed_options(wrapped, cfg);
  auto found = beam_search(wrapped, window.lattice_length(), options.candidates, beam, options.iterations - 1,
                           options.order0_pairs);
  DecodeResult out;
  out.tokens = strip_padding(found.path, scorer.vocab());
  out.lattice_path = std::move(found.path);
  out.log_score = found.log_score;
  out.predicted_length = window.predicted_length();
  out.lattice_length = window.lattice_length();
  return out;
}

/// Fraction of distinct n-grams among all n-grams of `tokens`.
inline double repetition_ratio(std::span<const TokenId> tokens, std::size_t n) {
  if (n == 0) throw Error("n-gram size must be >= 1");
  if (tokens.size() < n) throw Error("sequence shorter than n-gram size");
  std::set<Tokens> unique;
  const std::size_t total = tokens.size() - n + 1;
  for (std::size_t i = 0; i < total; ++i) unique.emplace(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                                         tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

/// prune_step ranking spans by their own potential instead of max-marginal.
inline PruneResult prune_by_ngram_score(const SpanSet& states, const PotentialProvider& provider, std::size_t k) {
  return prune_step(states, provider, k, PruneCriterion::kNgramScore);
}

/// Exact max of sum_l f_l^(order) over all sequences of `length` tokens from
/// `candidates`, by depth-first enumeration (a -inf term or a pair rejected by
/// `pairs` cuts the branch). Returns empty when more than `budget` nodes would
/// be visited.
inline std::optional<BeamResult> exhaustive_optimum(const PotentialProvider& provider, std::size_t length,
                                                    const Tokens& candidates, int order, std::size_t budget = 5'000'000,
                                                    const PairFilter& pairs = {}) {
  const auto m = static_cast<std::size_t>(std::min<int>(order, static_cast<int>(length) - 1));
  BeamResult best;
  Tokens prefix;
  std::size_t visited = 0;
  bool exhausted = false;
  auto dfs = [&](auto&& self, double score) -> void {
    if (exhausted) return;
    if (++visited > budget) {
      exhausted = true;
      return;
    }
    const std::size_t t = prefix.size();
    if (t == length) {
      if (score > best.log_score || (score == best.log_score && prefix < best.path)) best = {prefix, score};
      return;
    }
    for (const auto w : candidates) {
      if (pairs && t > 0 && !pairs(t - 1, prefix.back(), w)) continue;
      prefix.push_back(w);
      double next = score;
      if (t >= m) next += provider.score(t - m, std::span<const TokenId>(prefix).subspan(t - m));
      if (std::isfinite(next)) self(self, next);
      prefix.pop_back();
    }
  };
  dfs(dfs, 0.0);
  if (exhausted) return std::nullopt;
  if (!std::isfinite(best.log_score)) throw Error("no feasible sequence");
  return best;
}

/// One decode under one grid cell.
struct RunReport {
  std::size_t sentence = 0;
  std::size_t k = 0;
  int iterations = 0;
  std::size_t delta_l = 0;
  double score = kNegInf;
  std::vector<BigCount> paths;
  std::vector<std::size_t> spans;
  std::vector<std::size_t> depths;
  double ms_total = 0;
  double ms_scan = 0;
  double ms_potentials = 0;
  std::string tokens;
  std::optional<double> oracle;
  std::string error;

  /// Tab-separated key=value pairs on one line.
  std::string to_line() const {
    std::ostringstream out;
    out << "sent=" << sentence << "\tk=" << k << "\titers=" << iterations << "\tdelta_l=" << delta_l;
    if (!error.empty()) {
      out << "\terror=" << error;
      return out.str();
    }
    out << "\tscore=" << format_double(score);
    for (std::size_t i = 0; i < paths.size(); ++i) out << "\tpaths_iter" << i << '=' << paths[i];
    for (std::size_t i = 0; i < spans.size(); ++i) out << "\tspans_iter" << i << '=' << spans[i];
    for (std::size_t i = 0; i < depths.size(); ++i) out << "\tdepth_iter" << i << '=' << depths[i];
    out << "\tms_total=" << format_double(ms_total) << "\tms_scan=" << format_double(ms_scan)
        << "\tms_potentials=" << format_double(ms_potentials);
    if (oracle) {
      out << "\toracle=" << format_double(*oracle) << "\toptimal=" << (std::abs(*oracle - score) <= 1e-9 ? 1 : 0);
    }
    out << "\ttokens=" << tokens;
    return out.str();
  }
};

inline RunReport make_report(const DecodeResult& r, const Vocabulary& vocab, const DecodeConfig& cfg) {
  RunReport rep;
  rep.k = cfg.k_limit;
  rep.iterations = cfg.iterations;
  rep.delta_l = cfg.delta_l;
  rep.score = r.log_score;
  for (const auto& it : r.diagnostics.iterations) {
    rep.paths.push_back(it.paths);
    rep.spans.push_back(it.spans);
    rep.depths.push_back(it.trace.levels_up);
  }
  rep.ms_total = r.diagnostics.ms_total;
  rep.ms_scan = r.diagnostics.ms_scan();
  rep.ms_potentials = r.diagnostics.ms_potentials();
  rep.tokens = vocab.decode(r.tokens);
  return rep;
}

struct SweepGrid {
  std::vector<std::size_t> k;
  std::vector<int> iterations;
  std::vector<std::size_t> delta_l;

  std::size_t size() const { return k.size() * iterations.size() * delta_l.size(); }
};

struct SweepSource {
  Tokens context;
  std::size_t length = 0;  // source length including eos
};

struct SweepOptions {
  DecodeConfig base;     // length rule, criterion, tree options
  bool oracle = false;   // add the exhaustive optimum of the same wrapped model
  unsigned jobs = 1;
};

/// Decodes every source under every grid cell (k-major, then iterations,
/// then delta_l). Failed cells carry an error string; the sweep continues.
/// Cells of one sentence may run concurrently; rows keep grid order.
inline std::vector<RunReport> sweep(const std::vector<SweepSource>& sources, PotentialProvider& scorer,
                                    const SweepGrid& grid, const SweepOptions& options = {}) {
  if (grid.size() == 0) throw Error("empty sweep grid");
  struct Cell {
    std::size_t k;
    int iterations;
    std::size_t delta_l;
  };
  std::vector<Cell> cells;
  for (const auto k : grid.k)
    for (const auto it : grid.iterations)
      for (const auto d : grid.delta_l) cells.push_back({k, it, d});

  std::vector<RunReport> rows;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    scorer.set_context(sources[s].context);
    std::vector<RunReport> out(cells.size());
    auto run = [&](std::size_t c) {
      DecodeConfig cfg = options.base;
      cfg.k_limit = cells[c].k;
      cfg.iterations = cells[c].iterations;
      cfg.delta_l = cells[c].delta_l;
      RunReport rep;
      try {
        cfg.validate(scorer);
        const LengthWindow window(cfg.predicted_length(sources[s].length), cfg.delta_l);
        LengthRelaxedProvider wrapped(scorer, window);
        auto found = cascade_search(wrapped, window.lattice_length(), relaxed_options(wrapped, cfg));
        DecodeResult r;
        r.tokens = strip_padding(found.path, scorer.vocab());
        r.log_score = found.log_score;
        r.diagnostics = std::move(found.diagnostics);
        rep = make_report(r, scorer.vocab(), cfg);
        if (options.oracle) {
          const auto ro = relaxed_options(wrapped, cfg);
          if (const auto best = exhaustive_optimum(wrapped, window.lattice_length(), ro.candidates,
                                                   r.diagnostics.effective_iterations - 1, 5'000'000, ro.order0_pairs))
            rep.oracle = best->log_score;
        }
      } catch (const std::exception& e) {
        rep = RunReport{};
        rep.k = cfg.k_limit;
        rep.iterations = cfg.iterations;
        rep.delta_l = cfg.delta_l;
        rep.error = e.what();
        std::replace(rep.error.begin(), rep.error.end(), '\t', ' ');
      }
      rep.sentence = s;
      out[c] = std::move(rep);
    };
    detail::parallel_for(cells.size(), std::max(1u, options.jobs), run);
    for (auto& r : out) rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace cascade
