#include "groundlm/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "groundlm/embed.hpp"

namespace glm {

Vocabulary::Vocabulary() {
  for (const char* t : {"[pad]", "[cls]", "[masked]", "[unk]", "[sep]"}) push(t);
}

void Vocabulary::push(std::string token) {
  if (lookup_.contains(token)) throw std::invalid_argument("vocabulary: duplicate token '" + token + "'");
  lookup_.emplace(token, static_cast<std::int32_t>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t min_count,
                             std::size_t max_words) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts)
    for (auto& tok : tokenize(text)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_words > 0 && ranked.size() > max_words) ranked.resize(max_words);
  Vocabulary v;
  for (auto& [tok, n] : ranked) {
    if (!v.lookup_.contains(tok)) v.push(tok);
  }
  return v;
}

std::int32_t Vocabulary::id(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  return it == lookup_.end() ? kUnk : it->second;
}

std::vector<std::int32_t> Vocabulary::ids(std::span<const std::string> words) const {
  std::vector<std::int32_t> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no < static_cast<std::size_t>(kFirstWord)) {
      if (line != v.tokens_[line_no]) {
        throw std::runtime_error("vocabulary " + path.string() + ": line " +
                                 std::to_string(line_no + 1) + " must be " + v.tokens_[line_no]);
      }
    } else {
      v.push(line);
    }
    ++line_no;
  }
  if (line_no < static_cast<std::size_t>(kFirstWord)) {
    throw std::runtime_error("vocabulary " + path.string() + ": missing reserved tokens");
  }
  return v;
}

std::vector<std::int32_t> encode_single(const Vocabulary& vocab, std::span<const std::string> words,
                                        std::size_t max_len) {
  std::vector<std::int32_t> out{Vocabulary::kCls};
  for (const auto& w : words) {
    if (out.size() >= max_len) break;
    out.push_back(vocab.id(w));
  }
  return out;
}

std::vector<std::int32_t> encode_pair(const Vocabulary& vocab, std::span<const std::string> a,
                                      std::span<const std::string> b, std::size_t max_len) {
  std::vector<std::int32_t> out{Vocabulary::kCls};
  for (const auto& w : a) out.push_back(vocab.id(w));
  out.push_back(Vocabulary::kSep);
  for (const auto& w : b) out.push_back(vocab.id(w));
  if (out.size() > max_len) out.resize(max_len);
  return out;
}

}  // namespace glm
