#include "groundlm/embed.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace glm {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c >= 0x80;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool parse_float(std::string_view s, float& out) {
  // std::from_chars for float is available in libstdc++ 11.
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

QueryVector mean_of(const std::vector<const std::vector<float>*>& vecs, std::size_t dim) {
  QueryVector q;
  q.values.assign(dim, 0.0f);
  if (vecs.empty()) {
    q.is_degenerate = true;
    return q;
  }
  std::vector<double> acc(dim, 0.0);
  for (const auto* v : vecs)
    for (std::size_t i = 0; i < dim; ++i) acc[i] += (*v)[i];
  double norm = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    q.values[i] = static_cast<float>(acc[i] / double(vecs.size()));
    norm += double(q.values[i]) * q.values[i];
  }
  q.is_degenerate = norm == 0;
  return q;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(lower(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stopword file " + path.string());
  StopwordSet out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    for (auto tok : split_ws(line)) out.insert(lower(tok));
  }
  return out;
}

bool WordEmbeddingTable::insert(std::string token, std::vector<float> vec) {
  if (vec.size() != dim_) {
    throw std::invalid_argument("word vector for '" + token + "' has dimension " +
                                std::to_string(vec.size()) + ", table has " +
                                std::to_string(dim_));
  }
  return entries_.emplace(lower(token), std::move(vec)).second;
}

const std::vector<float>* WordEmbeddingTable::find(std::string_view token) const {
  auto it = entries_.find(lower(token));
  return it == entries_.end() ? nullptr : &it->second;
}

WordEmbeddingTable WordEmbeddingTable::scaled(float factor) const {
  WordEmbeddingTable out(*this);
  for (auto& [tok, vec] : out.entries_)
    for (float& v : vec) v *= factor;
  return out;
}

WordEmbeddingTable parse_word_vectors(std::istream& in) {
  WordEmbeddingTable table;
  std::size_t declared_dim = 0;
  bool have_dim = false;
  std::string line;
  std::size_t line_no = 0;
  std::vector<float> vec;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2) {
      std::size_t count = 0, dim = 0;
      auto r1 = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), count);
      auto r2 = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), dim);
      if (r1.ec == std::errc() && r2.ec == std::errc() &&
          r1.ptr == fields[0].data() + fields[0].size() &&
          r2.ptr == fields[1].data() + fields[1].size()) {
        declared_dim = dim;
        have_dim = true;
        table = WordEmbeddingTable(dim);
        continue;
      }
    }
    const std::size_t dim = fields.size() - 1;
    if (!have_dim) {
      if (dim == 0) {
        throw std::runtime_error("word vectors: line " + std::to_string(line_no) +
                                 ": token without values");
      }
      declared_dim = dim;
      have_dim = true;
      table = WordEmbeddingTable(dim);
    }
    if (dim != declared_dim) {
      throw std::runtime_error("word vectors: line " + std::to_string(line_no) + ": expected " +
                               std::to_string(declared_dim) + " values, found " +
                               std::to_string(dim));
    }
    vec.assign(dim, 0.0f);
    for (std::size_t i = 0; i < dim; ++i) {
      if (!parse_float(fields[i + 1], vec[i])) {
        throw std::runtime_error("word vectors: line " + std::to_string(line_no) +
                                 ": bad number '" + std::string(fields[i + 1]) + "'");
      }
    }
    table.insert(std::string(fields[0]), vec);
  }
  return table;
}

WordEmbeddingTable load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word vectors " + path.string());
  return parse_word_vectors(in);
}

QueryVector encode_cbow(std::span<const std::string> tokens, const WordEmbeddingTable& table) {
  std::vector<const std::vector<float>*> content, any;
  for (const auto& tok : tokens) {
    const auto* v = table.find(tok);
    if (v == nullptr) continue;
    any.push_back(v);
    if (!table.is_stopword(tok)) content.push_back(v);
  }
  return mean_of(content.empty() ? any : content, table.dim());
}

QueryVector encode_cbow(std::string_view text, const WordEmbeddingTable& table) {
  const auto tokens = tokenize(text);
  return encode_cbow(tokens, table);
}

QueryVector encode_synset_key(std::span<const std::string> lemmas, std::string_view definition,
                              const WordEmbeddingTable& table) {
  if (lemmas.empty()) throw std::invalid_argument("synset key: at least one lemma required");
  const std::size_t dim = table.dim();
  std::vector<QueryVector> lemma_vecs;
  for (const auto& lemma : lemmas) {
    if (const auto* v = table.find(lemma)) {
      lemma_vecs.push_back(QueryVector{*v, false});
      continue;
    }
    // Multi-word lemmas such as "hot_dog" average their parts.
    auto parts = tokenize(lemma);
    if (parts.size() > 1) {
      QueryVector q = encode_cbow(parts, table);
      if (!q.is_degenerate) lemma_vecs.push_back(std::move(q));
    }
  }
  std::vector<const std::vector<float>*> lemma_ptrs;
  for (const auto& q : lemma_vecs) lemma_ptrs.push_back(&q.values);
  const QueryVector lemma_mean = mean_of(lemma_ptrs, dim);
  const QueryVector def = encode_cbow(definition, table);

  std::vector<const std::vector<float>*> parts;
  if (!lemma_mean.is_degenerate) parts.push_back(&lemma_mean.values);
  if (!def.is_degenerate) parts.push_back(&def.values);
  return mean_of(parts, dim);
}

}  // namespace glm
