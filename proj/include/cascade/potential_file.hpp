#pragma once

// Static potential tables and the `markov-potentials 1` text format:
//
//   markov-potentials 1
//   vocab N
//   <id> <token>            (N lines)
//   orders M
//   length L
//   p <m> <l> <id_0> ... <id_m> <logp>
//
// `#` starts a comment. Records not present in the file score -inf.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cascade/error.hpp"
#include "cascade/provider.hpp"
#include "cascade/semiring.hpp"
#include "cascade/text.hpp"

namespace cascade {

class TableProvider final : public PotentialProvider {
 public:
  TableProvider(Vocabulary vocab, int max_order, std::size_t length)
      : vocab_(std::move(vocab)), max_order_(max_order), length_(length) {}

  const Vocabulary& vocab() const override { return vocab_; }
  int max_order() const override { return max_order_; }
  std::size_t length() const noexcept { return length_; }
  std::size_t size() const noexcept { return table_.size(); }

  /// Returns false if the key was already present (the stored value is kept).
  bool insert(std::size_t position, Tokens span, double value) {
    return table_.emplace(Key{position, std::move(span)}, value).second;
  }

  double score(std::size_t position, std::span<const TokenId> span) const override {
    const auto it = table_.find(Key{position, Tokens(span.begin(), span.end())});
    return it == table_.end() ? kNegInf : it->second;
  }

  /// Records in (order, position, span) order.
  std::vector<std::pair<SpanQuery, double>> records() const {
    std::vector<std::pair<SpanQuery, double>> out;
    out.reserve(table_.size());
    for (const auto& [k, v] : table_) out.push_back({SpanQuery{k.position, k.span}, v});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      const auto& x = a.first;
      const auto& y = b.first;
      if (x.tokens.size() != y.tokens.size()) return x.tokens.size() < y.tokens.size();
      if (x.position != y.position) return x.position < y.position;
      return x.tokens < y.tokens;
    });
    return out;
  }

 private:
  struct Key {
    std::size_t position;
    Tokens span;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      std::size_t h = std::hash<std::size_t>{}(k.position) ^ (k.span.size() * 0x9e3779b97f4a7c15ULL);
      for (const auto t : k.span) h = h * 1099511628211ULL ^ t;
      return h;
    }
  };

  Vocabulary vocab_;
  int max_order_;
  std::size_t length_;
  std::unordered_map<Key, double, KeyHash> table_;
};

inline TableProvider read_potentials(std::istream& in) {
  std::size_t line_no = 0;
  std::string line;
  auto next = [&](const char* what) -> std::vector<std::string_view> {
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      auto fields = split_ws(line);
      if (!fields.empty()) return fields;
    }
    throw ParseError(line_no, std::string("unexpected end of file, expected ") + what);
  };
  auto header_value = [&](const char* key) -> std::size_t {
    const auto f = next(key);
    if (f.size() != 2 || f[0] != key) throw ParseError(line_no, std::string("expected '") + key + " <n>'");
    const auto v = parse_int<std::size_t>(f[1]);
    if (!v) throw ParseError(line_no, std::string("bad ") + key + " value");
    return *v;
  };

  auto f = next("header");
  if (f.size() != 2 || f[0] != "markov-potentials") throw ParseError(line_no, "expected 'markov-potentials 1'");
  if (f[1] != "1") throw ParseError(line_no, "unsupported format version " + std::string(f[1]));

  const std::size_t vsize = header_value("vocab");
  std::vector<std::string> tokens(vsize);
  std::vector<bool> seen(vsize, false);
  for (std::size_t i = 0; i < vsize; ++i) {
    f = next("vocab entry");
    const auto id = f.size() == 2 ? parse_int<std::size_t>(f[0]) : std::nullopt;
    if (!id || *id >= vsize) throw ParseError(line_no, "bad vocab entry");
    if (seen[*id]) throw ParseError(line_no, "duplicate vocab id " + std::to_string(*id));
    seen[*id] = true;
    tokens[*id] = std::string(f[1]);
  }
  Vocabulary vocab;
  try {
    vocab = Vocabulary::from_table(std::move(tokens));
  } catch (const Error& e) {
    throw ParseError(line_no, e.what());
  }
  const std::size_t orders = header_value("orders");
  const std::size_t length = header_value("length");

  TableProvider table(std::move(vocab), static_cast<int>(orders), length);
  while (true) {
    std::vector<std::string_view> r;
    try {
      r = next("record");
    } catch (const ParseError&) {
      break;
    }
    if (r[0] != "p" || r.size() < 5) throw ParseError(line_no, "expected 'p <m> <l> <ids...> <logp>'");
    const auto m = parse_int<std::size_t>(r[1]);
    const auto l = parse_int<std::size_t>(r[2]);
    if (!m || !l) throw ParseError(line_no, "bad order or position");
    if (*m > orders) throw ParseError(line_no, "order " + std::to_string(*m) + " exceeds header");
    if (r.size() != *m + 5) throw ParseError(line_no, "span length does not match order");
    if (*l + *m >= length) throw ParseError(line_no, "span runs past lattice length");
    Tokens span;
    for (std::size_t i = 0; i <= *m; ++i) {
      const auto id = parse_int<TokenId>(r[3 + i]);
      if (!id || *id >= table.vocab().size()) throw ParseError(line_no, "unknown token '" + std::string(r[3 + i]) + "'");
      span.push_back(*id);
    }
    const auto value = parse_double(r.back());
    if (!value || std::isnan(*value) || *value == std::numeric_limits<double>::infinity())
      throw ParseError(line_no, "bad log-potential '" + std::string(r.back()) + "'");
    if (!table.insert(*l, std::move(span), *value)) throw ParseError(line_no, "duplicate record");
  }
  return table;
}

inline TableProvider load_potentials(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_potentials(in);
}

inline void write_potentials(std::ostream& out, const TableProvider& table) {
  const auto& vocab = table.vocab();
  out << "markov-potentials 1\n";
  out << "vocab " << vocab.size() << "\n";
  for (TokenId i = 0; i < vocab.size(); ++i) out << i << ' ' << vocab.token(i) << "\n";
  out << "orders " << table.max_order() << "\n";
  out << "length " << table.length() << "\n";
  for (const auto& [q, v] : table.records()) {
    out << "p " << q.tokens.size() - 1 << ' ' << q.position;
    for (const auto t : q.tokens) out << ' ' << t;
    out << ' ' << format_double(v) << "\n";
  }
}

/// Tabulates `provider` over every span of orders 0..max_order whose tokens
/// come from `alphabet`, at every position of a lattice of `length`. The
/// table grows as |alphabet|^(max_order+1) * length: tiny vocabularies only.
inline TableProvider tabulate(const PotentialProvider& provider, std::size_t length, int max_order,
                              const Tokens& alphabet) {
  if (max_order > provider.max_order()) throw Error("requested order exceeds scorer's maximum");
  if (alphabet.empty()) throw Error("empty alphabet");
  TableProvider table(provider.vocab(), max_order, length);
  for (int m = 0; m <= max_order; ++m) {
    const auto order = static_cast<std::size_t>(m);
    if (order >= length) break;
    std::vector<SpanQuery> batch;
    Tokens span(order + 1, 0);
    std::vector<std::size_t> digit(order + 1, 0);
    for (std::size_t l = 0; l + order < length; ++l) {
      std::fill(digit.begin(), digit.end(), 0);
      while (true) {
        for (std::size_t i = 0; i <= order; ++i) span[i] = alphabet[digit[i]];
        batch.push_back({l, span});
        std::size_t i = order + 1;
        while (i > 0 && ++digit[i - 1] == alphabet.size()) digit[--i] = 0;
        if (i == 0) break;
      }
    }
    const auto values = provider.score_batch(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) table.insert(batch[i].position, batch[i].tokens, values[i]);
  }
  return table;
}

inline void save_potentials(const PotentialProvider& provider, std::size_t length, int max_order,
                            const std::string& path) {
  const auto table = tabulate(provider, length, max_order, provider.vocab().output_ids());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_potentials(out, table);
  if (!out) throw Error("write failed: " + path);
}

}  // namespace cascade
