#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace glm {

// Lowercases ASCII and splits on every byte that is not an ASCII letter or
// digit. Bytes >= 0x80 are kept so UTF-8 words stay whole.
std::vector<std::string> tokenize(std::string_view text);

using StopwordSet = std::unordered_set<std::string>;

// One token per line; '#' starts a comment.
StopwordSet load_stopwords(const std::filesystem::path& path);

class WordEmbeddingTable {
 public:
  WordEmbeddingTable() = default;
  explicit WordEmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }

  // Keeps the first vector for a token; returns false on a duplicate.
  bool insert(std::string token, std::vector<float> vec);
  const std::vector<float>* find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token) != nullptr; }

  const StopwordSet& stopwords() const noexcept { return stopwords_; }
  void set_stopwords(StopwordSet s) { stopwords_ = std::move(s); }
  bool is_stopword(const std::string& token) const { return stopwords_.contains(token); }

  // Returns a copy with every vector multiplied by factor.
  WordEmbeddingTable scaled(float factor) const;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<float>> entries_;
  StopwordSet stopwords_;
};

// Whitespace-separated text vectors with an optional "count dim" header.
WordEmbeddingTable load_word_vectors(const std::filesystem::path& path);
WordEmbeddingTable parse_word_vectors(std::istream& in);

struct QueryVector {
  std::vector<float> values;
  bool is_degenerate = false;
};

// Mean embedding of in-vocabulary content tokens, falling back to every
// in-vocabulary token, then to a degenerate zero vector.
QueryVector encode_cbow(std::span<const std::string> tokens, const WordEmbeddingTable& table);
QueryVector encode_cbow(std::string_view text, const WordEmbeddingTable& table);

// 0.5 * mean(lemma embeddings) + 0.5 * cbow(definition); degenerate parts drop
// out of the average.
QueryVector encode_synset_key(std::span<const std::string> lemmas, std::string_view definition,
                              const WordEmbeddingTable& table);

}  // namespace glm
