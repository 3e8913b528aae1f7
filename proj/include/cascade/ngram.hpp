#pragma once

// Count-based m-gram scorer with add-k smoothing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cascade/error.hpp"
#include "cascade/provider.hpp"
#include "cascade/semiring.hpp"

namespace cascade {

class NgramModel final : public PotentialProvider {
 public:
  struct ContextCounts {
    std::uint64_t total = 0;
    std::map<TokenId, std::uint64_t> next;
  };

  NgramModel(Vocabulary vocab, int order, double add_k) : vocab_(std::move(vocab)), order_(order), add_k_(add_k) {
    if (order_ < 1) throw Error("n-gram order must be >= 1");
    if (!(add_k_ > 0)) throw Error("add-k constant must be positive");
    outcomes_ = vocab_.output_ids().size();
  }

  /// Adds every (context, token) event of one sentence; contexts never cross
  /// the sentence start.
  void observe(std::span<const TokenId> sentence) {
    for (std::size_t i = 0; i < sentence.size(); ++i) {
      const std::size_t max_ctx = std::min<std::size_t>(static_cast<std::size_t>(order_ - 1), i);
      for (std::size_t c = 0; c <= max_ctx; ++c) {
        auto& counts = counts_[Tokens(sentence.begin() + static_cast<std::ptrdiff_t>(i - c),
                                      sentence.begin() + static_cast<std::ptrdiff_t>(i))];
        ++counts.total;
        ++counts.next[sentence[i]];
      }
    }
    ++sentences_;
  }

  const Vocabulary& vocab() const override { return vocab_; }
  int max_order() const override { return order_ - 1; }
  int order() const noexcept { return order_; }
  double add_k() const noexcept { return add_k_; }
  std::size_t sentences() const noexcept { return sentences_; }
  const std::map<Tokens, ContextCounts>& counts() const noexcept { return counts_; }

  /// log P(token | context) with the context cut to its last order-1 tokens.
  double log_prob(std::span<const TokenId> context, TokenId token) const {
    if (token >= vocab_.size() || token == vocab_.pad_id() || token == vocab_.epsilon_id()) return kNegInf;
    const std::size_t keep = std::min<std::size_t>(context.size(), static_cast<std::size_t>(order_ - 1));
    const Tokens ctx(context.end() - static_cast<std::ptrdiff_t>(keep), context.end());
    double hits = 0.0;
    double total = 0.0;
    if (const auto it = counts_.find(ctx); it != counts_.end()) {
      total = static_cast<double>(it->second.total);
      if (const auto n = it->second.next.find(token); n != it->second.next.end()) hits = static_cast<double>(n->second);
    }
    return std::log((hits + add_k_) / (total + add_k_ * static_cast<double>(outcomes_)));
  }

  /// Position-independent: f_l^(m)(x_{l:l+m}) = log P(x_{l+m} | x_{l:l+m-1}).
  double score(std::size_t /*position*/, std::span<const TokenId> span) const override {
    if (span.empty()) return kNegInf;
    for (const auto t : span.first(span.size() - 1))
      if (t == vocab_.pad_id() || t == vocab_.epsilon_id()) return kNegInf;
    return log_prob(span.first(span.size() - 1), span.back());
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "ngram-model 1\n";
    out << "order " << order_ << "\n";
    out.precision(17);
    out << "add_k " << add_k_ << "\n";
    out << "sentences " << sentences_ << "\n";
    out << "vocab " << vocab_.size() << "\n";
    for (TokenId i = 0; i < vocab_.size(); ++i) out << i << ' ' << vocab_.token(i) << "\n";
    std::size_t records = 0;
    for (const auto& [ctx, c] : counts_) records += c.next.size();
    out << "counts " << records << "\n";
    for (const auto& [ctx, c] : counts_)
      for (const auto& [tok, n] : c.next) {
        out << "c " << ctx.size();
        for (const auto t : ctx) out << ' ' << t;
        out << ' ' << tok << ' ' << n << "\n";
      }
    if (!out) throw Error("write failed: " + path);
  }

  static NgramModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::size_t line_no = 0;
    std::string line;
    auto next = [&](const char* what) {
      while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line[0] != '#') return std::istringstream(line);
      }
      throw ParseError(line_no, std::string("unexpected end of file, expected ") + what);
    };
    auto keyword = [&](std::istringstream& s, const char* key) {
      std::string k;
      if (!(s >> k) || k != key) throw ParseError(line_no, std::string("expected '") + key + "'");
    };

    auto s = next("header");
    int version = 0;
    keyword(s, "ngram-model");
    if (!(s >> version) || version != 1) throw ParseError(line_no, "unsupported model version");
    int order = 0;
    double add_k = 0;
    std::size_t sentences = 0, vsize = 0, records = 0;
    s = next("order");
    keyword(s, "order");
    if (!(s >> order)) throw ParseError(line_no, "bad order");
    s = next("add_k");
    keyword(s, "add_k");
    if (!(s >> add_k)) throw ParseError(line_no, "bad add_k");
    s = next("sentences");
    keyword(s, "sentences");
    if (!(s >> sentences)) throw ParseError(line_no, "bad sentence count");
    s = next("vocab");
    keyword(s, "vocab");
    if (!(s >> vsize)) throw ParseError(line_no, "bad vocab size");
    std::vector<std::string> tokens(vsize);
    for (std::size_t i = 0; i < vsize; ++i) {
      s = next("vocab entry");
      std::size_t id = 0;
      if (!(s >> id >> tokens[i]) || id != i) throw ParseError(line_no, "bad vocab entry");
    }
    NgramModel model(Vocabulary::from_table(std::move(tokens)), order, add_k);
    s = next("counts");
    keyword(s, "counts");
    if (!(s >> records)) throw ParseError(line_no, "bad count total");
    for (std::size_t r = 0; r < records; ++r) {
      s = next("count record");
      keyword(s, "c");
      std::size_t len = 0;
      if (!(s >> len) || len >= static_cast<std::size_t>(order)) throw ParseError(line_no, "bad context length");
      Tokens ctx(len);
      TokenId tok = 0;
      std::uint64_t n = 0;
      for (auto& t : ctx)
        if (!(s >> t)) throw ParseError(line_no, "bad context");
      if (!(s >> tok >> n)) throw ParseError(line_no, "bad count record");
      for (const auto t : ctx)
        if (t >= model.vocab_.size()) throw ParseError(line_no, "token id out of range");
      if (tok >= model.vocab_.size()) throw ParseError(line_no, "token id out of range");
      auto& c = model.counts_[ctx];
      c.total += n;
      c.next[tok] += n;
    }
    model.sentences_ = sentences;
    return model;
  }

 private:
  Vocabulary vocab_;
  int order_;
  double add_k_;
  std::size_t outcomes_ = 0;
  std::size_t sentences_ = 0;
  std::map<Tokens, ContextCounts> counts_;
};

/// Builds the vocabulary from the corpus (sorted regular tokens) and trains.
/// Each sentence is terminated with eos unless it already ends with one.
inline NgramModel train_ngram(const std::vector<std::vector<std::string>>& corpus, int order, double add_k) {
  std::set<std::string> words;
  bool any = false;
  for (const auto& s : corpus)
    for (const auto& w : s) {
      words.insert(w);
      any = true;
    }
  if (!any) throw Error("empty corpus");
  NgramModel model(Vocabulary(std::vector<std::string>(words.begin(), words.end())), order, add_k);
  for (const auto& s : corpus) {
    if (s.empty()) continue;
    Tokens ids;
    for (const auto& w : s) ids.push_back(model.vocab().id(w));
    if (ids.back() != model.vocab().eos_id()) ids.push_back(model.vocab().eos_id());
    model.observe(ids);
  }
  return model;
}

/// One whitespace-tokenized sentence per line; blank lines are skipped.
inline std::vector<std::vector<std::string>> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::vector<std::string>> corpus;
  for (std::string line; std::getline(in, line);) {
    std::istringstream s(line);
    std::vector<std::string> words;
    for (std::string w; s >> w;) words.push_back(w);
    if (!words.empty()) corpus.push_back(std::move(words));
  }
  return corpus;
}

}  // namespace cascade
