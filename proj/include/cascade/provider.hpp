#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cascade/vocabulary.hpp"

namespace cascade {

/// One log-potential request: the span tokens[0..m] starting at `position`.
/// The span's Markov order is tokens.size() - 1.
struct SpanQuery {
  std::size_t position = 0;
  Tokens tokens;
};

/// Source of log potentials f_l^(m)(x_{l:l+m}).
///
/// score() and score_batch() must be deterministic and safe to call from
/// several threads at once. -inf marks a forbidden span. set_context() and
/// begin_iteration() are called by a single driver thread between batches.
class PotentialProvider {
 public:
  virtual ~PotentialProvider() = default;

  virtual const Vocabulary& vocab() const = 0;
  virtual int max_order() const = 0;
  virtual double score(std::size_t position, std::span<const TokenId> span) const = 0;

  virtual std::vector<double> score_batch(std::span<const SpanQuery> queries) const {
    std::vector<double> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(score(q.position, q.tokens));
    return out;
  }

  /// Conditioning input (e.g. the source sentence); ignored by unconditional scorers.
  virtual void set_context(std::span<const TokenId> /*source*/) {}

  /// Hint that the cascade moved to iteration `iteration`; lets remote scorers reuse state.
  virtual void begin_iteration(int /*iteration*/) {}
};

}  // namespace cascade
