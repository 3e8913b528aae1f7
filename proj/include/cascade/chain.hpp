#pragma once

// First-order chain kernels over relabeled lattices.
//
// A chain has E edges between E+1 positions, each position carrying up to K
// states. Cell (e, k1, k2) scores the transition from state k1 at position e
// to state k2 at position e+1. Everything is in natural-log space.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "cascade/error.hpp"
#include "cascade/parallel.hpp"
#include "cascade/semiring.hpp"

namespace cascade {

class ChainScores {
 public:
  ChainScores() = default;

  /// All cells start infeasible.
  ChainScores(std::size_t edges, std::size_t states)
      : edges_(edges),
        states_(states),
        scores_(edges * states * states, kSentinel),
        mask_(edges * states * states, 0) {}

  std::size_t edge_count() const noexcept { return edges_; }
  std::size_t state_count() const noexcept { return states_; }

  /// A non-finite negative score marks the cell infeasible.
  void set(std::size_t e, std::size_t k1, std::size_t k2, double score) {
    const auto i = index(e, k1, k2);
    if (std::isfinite(score)) {
      scores_[i] = score;
      mask_[i] = 1;
    } else {
      scores_[i] = kSentinel;
      mask_[i] = 0;
    }
  }

  void set_infeasible(std::size_t e, std::size_t k1, std::size_t k2) { set(e, k1, k2, kNegInf); }

  bool feasible(std::size_t e, std::size_t k1, std::size_t k2) const {
    return mask_[index(e, k1, k2)] != 0;
  }

  /// Public view: -inf for infeasible cells.
  double score(std::size_t e, std::size_t k1, std::size_t k2) const {
    const auto i = index(e, k1, k2);
    return mask_[i] ? scores_[i] : kNegInf;
  }

  /// Arithmetic view: the sentinel for infeasible cells.
  double raw(std::size_t e, std::size_t k1, std::size_t k2) const { return scores_[index(e, k1, k2)]; }

  bool edge_has_feasible_cell(std::size_t e) const {
    const auto begin = mask_.begin() + static_cast<std::ptrdiff_t>(e * states_ * states_);
    return std::find(begin, begin + static_cast<std::ptrdiff_t>(states_ * states_), 1) !=
           begin + static_cast<std::ptrdiff_t>(states_ * states_);
  }

 private:
  std::size_t index(std::size_t e, std::size_t k1, std::size_t k2) const {
    return (e * states_ + k1) * states_ + k2;
  }

  std::size_t edges_ = 0;
  std::size_t states_ = 0;
  std::vector<double> scores_;
  std::vector<std::uint8_t> mask_;
};

class MaxMarginalTable {
 public:
  MaxMarginalTable() = default;
  MaxMarginalTable(std::size_t edges, std::size_t states)
      : edges_(edges), states_(states), values_(edges * states * states, kNegInf) {}

  std::size_t edge_count() const noexcept { return edges_; }
  std::size_t state_count() const noexcept { return states_; }

  double at(std::size_t e, std::size_t k1, std::size_t k2) const { return values_[(e * states_ + k1) * states_ + k2]; }
  double& at(std::size_t e, std::size_t k1, std::size_t k2) { return values_[(e * states_ + k1) * states_ + k2]; }

  double edge_max(std::size_t e) const {
    const auto begin = values_.begin() + static_cast<std::ptrdiff_t>(e * states_ * states_);
    return *std::max_element(begin, begin + static_cast<std::ptrdiff_t>(states_ * states_));
  }

 private:
  std::size_t edges_ = 0;
  std::size_t states_ = 0;
  std::vector<double> values_;
};

/// Work counters of one tree scan. cell_ops counts cells written (each K x K
/// chart cell, each prefix/suffix vector entry, each output cell).
struct ScanTrace {
  std::size_t levels_up = 0;
  std::size_t levels_down = 0;
  std::size_t padded_edges = 0;
  std::uint64_t cell_ops = 0;
};

struct TreeOptions {
  unsigned threads = 1;
};

struct ViterbiResult {
  std::vector<std::size_t> path;  // one state per position, E+1 entries
  double log_score = kNegInf;
};

namespace detail {

inline void check_chain(const ChainScores& chain) {
  if (chain.edge_count() == 0 || chain.state_count() == 0) throw Error("degenerate chain");
  for (std::size_t e = 0; e < chain.edge_count(); ++e)
    if (!chain.edge_has_feasible_cell(e)) throw Error("empty max-marginal set");
}

inline std::size_t ceil_log2(std::size_t n) {
  return n <= 1 ? 0 : static_cast<std::size_t>(std::bit_width(n - 1));
}

// Dense K x K max-plus block, row-major.
using Block = std::vector<double>;

}  // namespace detail

/// Max-marginals of every edge cell by a balanced-tree max-plus scan.
///
/// The edge list is padded to a power of two with all-zero edges appended
/// after the true last edge. Charts are merged bottom-up; prefix and suffix
/// best scores are then pushed top-down, one vector per tree node, and
/// combined with the leaf scores. Sequential depth is 2 * log2(padded edges).
inline std::pair<MaxMarginalTable, ScanTrace> tree_max_marginals(const ChainScores& chain,
                                                                 TreeOptions options = {}) {
  detail::check_chain(chain);
  const std::size_t edges = chain.edge_count();
  const std::size_t k = chain.state_count();
  const std::size_t padded = std::bit_ceil(edges);
  const std::size_t height = detail::ceil_log2(padded);

  ScanTrace trace;
  trace.padded_edges = padded;

  // chart[i][j] covers leaves j*2^i .. (j+1)*2^i - 1
  std::vector<std::vector<detail::Block>> chart(height + 1);
  chart[0].assign(padded, detail::Block(k * k, 0.0));
  for (std::size_t e = 0; e < edges; ++e)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) chart[0][e][a * k + b] = chain.raw(e, a, b);

  for (std::size_t i = 0; i < height; ++i) {
    const std::size_t nodes = padded >> (i + 1);
    chart[i + 1].assign(nodes, detail::Block(k * k, MaxPlus::zero()));
    detail::parallel_for(nodes, options.threads, [&](std::size_t j) {
      const auto& left = chart[i][2 * j];
      const auto& right = chart[i][2 * j + 1];
      auto& out = chart[i + 1][j];
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t c = 0; c < k; ++c) {
          const double l = left[a * k + c];
          if (l <= kSentinel) continue;
          for (std::size_t b = 0; b < k; ++b)
            out[a * k + b] = MaxPlus::plus(out[a * k + b], MaxPlus::times(l, right[c * k + b]));
        }
    });
    trace.cell_ops += nodes * k * k;
    ++trace.levels_up;
  }
  if (!is_feasible_value(*std::max_element(chart[height][0].begin(), chart[height][0].end())))
    throw Error("empty max-marginal set");

  // prefix[j][s]: best score from the chain start to the left boundary of node j, ending in s.
  // suffix[j][s]: best score from the right boundary of node j, starting in s, to the end.
  std::vector<std::vector<double>> prefix(1, std::vector<double>(k, MaxPlus::one()));
  std::vector<std::vector<double>> suffix(1, std::vector<double>(k, MaxPlus::one()));
  for (std::size_t i = height; i > 0; --i) {
    const std::size_t parents = padded >> i;
    std::vector<std::vector<double>> next_prefix(2 * parents, std::vector<double>(k, MaxPlus::zero()));
    std::vector<std::vector<double>> next_suffix(2 * parents, std::vector<double>(k, MaxPlus::zero()));
    const auto& below = chart[i - 1];
    detail::parallel_for(parents, options.threads, [&](std::size_t j) {
      next_prefix[2 * j] = prefix[j];
      next_suffix[2 * j + 1] = suffix[j];
      const auto& left = below[2 * j];
      const auto& right = below[2 * j + 1];
      auto& p = next_prefix[2 * j + 1];
      auto& s = next_suffix[2 * j];
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) {
          p[b] = MaxPlus::plus(p[b], MaxPlus::times(prefix[j][a], left[a * k + b]));
          s[a] = MaxPlus::plus(s[a], MaxPlus::times(right[a * k + b], suffix[j][b]));
        }
    });
    trace.cell_ops += 4 * parents * k;
    ++trace.levels_down;
    prefix = std::move(next_prefix);
    suffix = std::move(next_suffix);
  }

  MaxMarginalTable table(edges, k);
  for (std::size_t e = 0; e < edges; ++e)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        if (!chain.feasible(e, a, b)) continue;
        const double v = MaxPlus::times(MaxPlus::times(prefix[e][a], chain.raw(e, a, b)), suffix[e][b]);
        if (is_feasible_value(v)) table.at(e, a, b) = v;
      }
  trace.cell_ops += edges * k * k;
  return {std::move(table), trace};
}

/// O(K^2 E) forward-backward reference for tree_max_marginals.
inline MaxMarginalTable serial_max_marginals(const ChainScores& chain) {
  detail::check_chain(chain);
  const std::size_t edges = chain.edge_count();
  const std::size_t k = chain.state_count();
  std::vector<std::vector<double>> alpha(edges + 1, std::vector<double>(k, MaxPlus::zero()));
  std::vector<std::vector<double>> beta(edges + 1, std::vector<double>(k, MaxPlus::zero()));
  std::fill(alpha[0].begin(), alpha[0].end(), MaxPlus::one());
  std::fill(beta[edges].begin(), beta[edges].end(), MaxPlus::one());
  for (std::size_t e = 0; e < edges; ++e)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        alpha[e + 1][b] = MaxPlus::plus(alpha[e + 1][b], MaxPlus::times(alpha[e][a], chain.raw(e, a, b)));
  for (std::size_t e = edges; e-- > 0;)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        beta[e][a] = MaxPlus::plus(beta[e][a], MaxPlus::times(chain.raw(e, a, b), beta[e + 1][b]));
  if (!is_feasible_value(*std::max_element(beta[0].begin(), beta[0].end())))
    throw Error("empty max-marginal set");

  MaxMarginalTable table(edges, k);
  for (std::size_t e = 0; e < edges; ++e)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        if (!chain.feasible(e, a, b)) continue;
        const double v = MaxPlus::times(MaxPlus::times(alpha[e][a], chain.raw(e, a, b)), beta[e + 1][b]);
        if (is_feasible_value(v)) table.at(e, a, b) = v;
      }
  return table;
}

/// Best path with its score. Among equal-scoring paths the lexicographically
/// smallest state sequence wins. The returned score is the left-to-right sum
/// of the chosen cells.
inline ViterbiResult viterbi(const ChainScores& chain) {
  if (chain.edge_count() == 0 || chain.state_count() == 0) throw Error("degenerate chain");
  const std::size_t edges = chain.edge_count();
  const std::size_t k = chain.state_count();
  std::vector<std::vector<double>> best(edges + 1, std::vector<double>(k, MaxPlus::zero()));
  std::fill(best[edges].begin(), best[edges].end(), MaxPlus::one());
  for (std::size_t e = edges; e-- > 0;)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        best[e][a] = MaxPlus::plus(best[e][a], MaxPlus::times(chain.raw(e, a, b), best[e + 1][b]));

  const auto first = std::max_element(best[0].begin(), best[0].end());  // first maximum
  if (!is_feasible_value(*first)) throw Error("no feasible path");

  ViterbiResult result;
  result.path.reserve(edges + 1);
  result.path.push_back(static_cast<std::size_t>(first - best[0].begin()));
  double total = 0.0;
  for (std::size_t e = 0; e < edges; ++e) {
    const std::size_t a = result.path.back();
    for (std::size_t b = 0; b < k; ++b) {
      if (MaxPlus::times(chain.raw(e, a, b), best[e + 1][b]) == best[e][a]) {
        result.path.push_back(b);
        total += chain.raw(e, a, b);
        break;
      }
    }
  }
  result.log_score = total;
  return result;
}

/// Semiring forward pass: sum over paths of the product of weight(e, k1, k2).
template <typename Semiring, typename Weight>
typename Semiring::value_type chain_total(const ChainScores& chain, Weight&& weight) {
  using V = typename Semiring::value_type;
  const std::size_t k = chain.state_count();
  std::vector<V> alpha(k, Semiring::one());
  for (std::size_t e = 0; e < chain.edge_count(); ++e) {
    std::vector<V> next(k, Semiring::zero());
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        next[b] = Semiring::plus(next[b], Semiring::times(alpha[a], weight(e, a, b)));
    alpha = std::move(next);
  }
  V total = Semiring::zero();
  for (const auto& v : alpha) total = Semiring::plus(total, v);
  return total;
}

/// Exact number of feasible paths. Zero-edge chains count their states.
inline BigCount count_paths(const ChainScores& chain) {
  if (chain.edge_count() == 0) return chain.state_count();
  return chain_total<Counting>(chain, [&](std::size_t e, std::size_t a, std::size_t b) {
    return chain.feasible(e, a, b) ? Counting::one() : Counting::zero();
  });
}

}  // namespace cascade
