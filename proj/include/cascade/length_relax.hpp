#pragma once

// Variable-length decoding in a single lattice.
//
// Candidates of lengths L-dL .. L+dL (eos included) are padded to a common
// lattice of L+dL+1 positions. Positions here are 0-based; a span starting at
// l with order m ends at absolute index a = l+m, and the 1-based rule
// "l+m < L-dL" becomes a+1 < L-dL.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cascade/error.hpp"
#include "cascade/provider.hpp"
#include "cascade/semiring.hpp"

namespace cascade {

class LengthWindow {
 public:
  LengthWindow(std::size_t predicted_length, std::size_t delta) : predicted_(predicted_length), delta_(delta) {
    if (predicted_ < delta_ + 1) throw Error("invalid length window: predicted length - delta must be >= 1");
  }

  std::size_t predicted_length() const noexcept { return predicted_; }
  std::size_t delta() const noexcept { return delta_; }
  std::size_t lattice_length() const noexcept { return predicted_ + delta_ + 1; }

  /// 0-based lattice indices where the (single) eos may sit.
  std::size_t earliest_eos() const noexcept { return predicted_ - delta_ - 1; }
  std::size_t latest_eos() const noexcept { return predicted_ + delta_ - 1; }

 private:
  std::size_t predicted_;
  std::size_t delta_;
};

/// Rewrites a base scorer's potentials so that every finite-score lattice
/// path is `words eos pad...pad` with eos inside the window.
///
/// Rules, first match wins (last pair = the span's final two tokens):
///   eos -> pad: 0        eos -> other: -inf
///   pad -> pad: 0        pad -> other: -inf
///   other -> pad: -inf
///   eos before the window: -inf
///   final lattice position: pad 0, anything else -inf
///   otherwise the base potential.
/// Every earlier pair inside the span gets the same -inf checks, as does an
/// early eos inside a span at l=0. Pad at index 0 is -inf, and an order-0
/// pad scores 0. None of these can change a finite path score; they keep
/// pad/eps away from the base scorer and rule out the all-pad lattice path.
class LengthRelaxedProvider final : public PotentialProvider {
 public:
  LengthRelaxedProvider(PotentialProvider& base, LengthWindow window) : base_(&base), window_(window) {}

  const Vocabulary& vocab() const override { return base_->vocab(); }
  int max_order() const override { return base_->max_order(); }
  const LengthWindow& window() const noexcept { return window_; }
  const PotentialProvider& base() const noexcept { return *base_; }

  double score(std::size_t position, std::span<const TokenId> span) const override {
    const auto r = rule(position, span);
    return r ? *r : base_->score(position, span);
  }

  std::vector<double> score_batch(std::span<const SpanQuery> queries) const override {
    std::vector<double> out(queries.size(), 0.0);
    std::vector<SpanQuery> forwarded;
    std::vector<std::size_t> slot;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      if (const auto r = rule(queries[i].position, queries[i].tokens)) {
        out[i] = *r;
      } else {
        forwarded.push_back(queries[i]);
        slot.push_back(i);
      }
    }
    if (!forwarded.empty()) {
      const auto values = base_->score_batch(forwarded);
      for (std::size_t j = 0; j < slot.size(); ++j) out[slot[j]] = values[j];
    }
    return out;
  }

  void set_context(std::span<const TokenId> source) override {
    base_->set_context(source);
  }
  void begin_iteration(int iteration) override { base_->begin_iteration(iteration); }

  /// The structural verdict for a span, or empty when the base scorer decides.
  std::optional<double> rule(std::size_t position, std::span<const TokenId> span) const {
    const auto& v = base_->vocab();
    const TokenId eos = v.eos_id();
    const TokenId pad = v.pad_id();
    const std::size_t n = window_.lattice_length();
    if (span.empty() || position + span.size() > n) return kNegInf;

    auto bad_pair = [&](TokenId prev, TokenId cur) {
      if (prev == eos || prev == pad) return cur != pad;
      return cur == pad;
    };
    auto too_early = [&](std::size_t abs) { return abs < window_.earliest_eos(); };

    for (std::size_t i = 0; i < span.size(); ++i) {
      const TokenId t = span[i];
      const std::size_t abs = position + i;
      if (t == v.epsilon_id() || t >= v.size()) return kNegInf;
      if (t == pad && abs == 0) return kNegInf;
      if (i + 1 < span.size()) {
        if (bad_pair(t, span[i + 1])) return kNegInf;
        // Leading tokens are the last token of no span; spans at l=0 vouch for them.
        if (position == 0 && t == eos && too_early(abs)) return kNegInf;
      }
    }

    const TokenId last = span.back();
    const std::size_t abs_last = position + span.size() - 1;
    if (span.size() >= 2) {
      const TokenId prev = span[span.size() - 2];
      if (prev == eos) return last == pad ? 0.0 : kNegInf;
      if (prev == pad) return last == pad ? 0.0 : kNegInf;
      if (last == pad) return kNegInf;
    }
    if (last == eos && too_early(abs_last)) return kNegInf;
    if (last != eos && last != pad && abs_last >= window_.latest_eos()) return kNegInf;  // no room left for eos
    if (abs_last == n - 1) return last == pad ? 0.0 : kNegInf;
    if (last == pad) return 0.0;  // order 0 only
    return std::nullopt;
  }

 private:
  PotentialProvider* base_;
  LengthWindow window_;
};

/// Tokens before the first eos. Throws if there is none or a pad precedes it.
inline Tokens strip_padding(std::span<const TokenId> path, const Vocabulary& vocab) {
  Tokens out;
  for (const auto t : path) {
    if (t == vocab.eos_id()) return out;
    if (t == vocab.pad_id()) throw Error("pad before eos in hypothesis");
    out.push_back(t);
  }
  throw Error("unterminated hypothesis");
}

}  // namespace cascade
