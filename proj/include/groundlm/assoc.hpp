#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "groundlm/embed.hpp"
#include "groundlm/vindex.hpp"

namespace glm {

enum class AssocStrategy : std::uint8_t { scene = 0, object = 1, keyword_baseline = 2 };

const char* to_string(AssocStrategy s);
AssocStrategy parse_assoc_strategy(std::string_view name);

struct AssociatedImage {
  std::string image_id;
  std::uint32_t rank = 0;
  float similarity = 0;
  std::vector<float> features;  // N x d_v once resolved, empty before
};

struct Association {
  AssocStrategy strategy = AssocStrategy::scene;
  std::vector<AssociatedImage> items;

  bool empty() const noexcept { return items.empty(); }
};

// Loads region features for every item. Items missing from the store throw.
void resolve_features(Association& assoc, const FeatureStore& store);

// ---- nouns ----------------------------------------------------------------

class NounLexicon {
 public:
  NounLexicon() = default;
  explicit NounLexicon(std::unordered_set<std::string> nouns);
  bool contains(const std::string& token) const { return nouns_.contains(token); }
  std::size_t size() const noexcept { return nouns_.size(); }

 private:
  std::unordered_set<std::string> nouns_;
};

NounLexicon load_noun_lexicon(const std::filesystem::path& path);

// Noun identification is pluggable; the default looks tokens up in a lexicon.
class NounTagger {
 public:
  virtual ~NounTagger() = default;
  virtual std::vector<std::string> nouns(std::span<const std::string> tokens) const = 0;
};

class LexiconTagger final : public NounTagger {
 public:
  explicit LexiconTagger(const NounLexicon& lexicon) : lexicon_(&lexicon) {}
  std::vector<std::string> nouns(std::span<const std::string> tokens) const override;

 private:
  const NounLexicon* lexicon_;
};

// In-order lexicon nouns, duplicates preserved.
std::vector<std::string> extract_nouns(std::string_view text, const NounLexicon& lexicon);

// ---- strategies -------------------------------------------------------------

// CBOW of the surviving (unmasked) tokens matched against caption keys.
// Degenerate queries give an empty association.
Association associate_scene(std::span<const std::string> surviving_tokens,
                            const ImageKeyIndex& index, const WordEmbeddingTable& table,
                            std::size_t k, std::size_t threads = 1);

struct ObjectAssocOptions {
  std::size_t k = 16;
  std::size_t kappa = 8;
  std::uint64_t seed = 0;  // mixed with a hash of the text
  std::size_t threads = 1;
};

// Nouns -> diagonal GMM -> one representative noun per component -> top
// ceil(K / kappa') synset-keyed images per representative.
Association associate_object(std::span<const std::string> tokens, const ImageKeyIndex& synset_index,
                             const WordEmbeddingTable& table, const NounTagger& tagger,
                             const ObjectAssocOptions& options);

// Captions as token sets for the keyword-count baseline.
class KeywordCorpus {
 public:
  void add(std::string image_id, std::string_view caption);
  std::size_t size() const noexcept { return ids_.size(); }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const std::unordered_set<std::string>& tokens(std::size_t i) const { return tokens_[i]; }

 private:
  std::vector<std::string> ids_;
  std::vector<std::unordered_set<std::string>> tokens_;
};

// score = |content tokens of text ∩ caption tokens|; ties by ascending id.
Association associate_keyword_baseline(std::span<const std::string> tokens,
                                       const KeywordCorpus& corpus, const StopwordSet& stopwords,
                                       std::size_t k);

// ---- input files ------------------------------------------------------------

struct CaptionRecord {
  std::string image_id;
  std::string caption;
};

// image_id<TAB>caption
std::vector<CaptionRecord> load_captions(const std::filesystem::path& path);

struct SynsetRecord {
  std::string synset_id;
  std::vector<std::string> lemmas;
  std::string definition;
  std::vector<std::string> image_ids;
};

// synset_id<TAB>lemma,lemma<TAB>definition<TAB>image,image
std::vector<SynsetRecord> load_synsets(const std::filesystem::path& path);

// One entry per caption / per synset image, keyed as described above.
// Images missing from the store throw.
std::vector<IndexEntry> caption_entries(std::span<const CaptionRecord> captions,
                                        const WordEmbeddingTable& table,
                                        const FeatureStore& store);
std::vector<IndexEntry> synset_entries(std::span<const SynsetRecord> synsets,
                                       const WordEmbeddingTable& table, const FeatureStore& store);

}  // namespace glm
