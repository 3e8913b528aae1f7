#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cascade/error.hpp"

namespace cascade {

using TokenId = std::uint32_t;
using Tokens = std::vector<TokenId>;

inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kEpsilonToken = "<eps>";

/// Dense token <-> id table. The three reserved tokens are always present;
/// pad and epsilon are never emitted by a scorer, only by the decoder.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// Reserved tokens get ids 0..2, then `regular` in order.
  explicit Vocabulary(const std::vector<std::string>& regular) {
    tokens_ = {std::string(kEosToken), std::string(kPadToken), std::string(kEpsilonToken)};
    for (const auto& t : regular)
      if (!is_reserved(t)) tokens_.push_back(t);
    index();
  }

  /// Takes the table verbatim; reserved tokens must appear somewhere in it.
  static Vocabulary from_table(std::vector<std::string> tokens) {
    Vocabulary v(0);
    v.tokens_ = std::move(tokens);
    v.index();
    return v;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId eos_id() const noexcept { return eos_; }
  TokenId pad_id() const noexcept { return pad_; }
  TokenId epsilon_id() const noexcept { return epsilon_; }

  bool contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

  TokenId id(std::string_view token) const {
    const auto it = ids_.find(std::string(token));
    if (it == ids_.end()) throw Error("unknown token '" + std::string(token) + "'");
    return it->second;
  }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) throw Error("token id out of range: " + std::to_string(id));
    return tokens_[id];
  }

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Ids a scorer may assign probability to: everything except pad and epsilon.
  Tokens output_ids() const {
    Tokens out;
    for (TokenId i = 0; i < tokens_.size(); ++i)
      if (i != pad_ && i != epsilon_) out.push_back(i);
    return out;
  }

  Tokens encode(std::string_view text) const {
    Tokens out;
    std::istringstream in{std::string(text)};
    for (std::string w; in >> w;) out.push_back(id(w));
    return out;
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (const auto id : ids) {
      if (!out.empty()) out += ' ';
      out += token(id);
    }
    return out;
  }

  static bool is_reserved(std::string_view t) {
    return t == kEosToken || t == kPadToken || t == kEpsilonToken;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  explicit Vocabulary(int) {}

  void index() {
    ids_.clear();
    for (TokenId i = 0; i < tokens_.size(); ++i)
      if (!ids_.emplace(tokens_[i], i).second) throw Error("duplicate token '" + tokens_[i] + "'");
    for (const auto r : {kEosToken, kPadToken, kEpsilonToken})
      if (!ids_.count(std::string(r))) throw Error("vocabulary lacks reserved token " + std::string(r));
    eos_ = ids_.at(std::string(kEosToken));
    pad_ = ids_.at(std::string(kPadToken));
    epsilon_ = ids_.at(std::string(kEpsilonToken));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  TokenId eos_ = 0;
  TokenId pad_ = 1;
  TokenId epsilon_ = 2;
};

}  // namespace cascade
