#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "groundlm/assoc.hpp"
#include "groundlm/model.hpp"
#include "groundlm/vocab.hpp"

namespace glm {

enum class Strategy {
  no_grounding,
  transferred_i2t,
  transferred_t2i,
  transferred_both,
  associative_scene,
  associative_object,
  associative_keyword,
};

const char* to_string(Strategy s);
Strategy parse_strategy(std::string_view name);
bool is_transferred(Strategy s);
bool is_associative(Strategy s);

// ---- corpus mixing ---------------------------------------------------------------

struct StreamItem {
  bool paired = false;
  std::size_t index = 0;
  friend bool operator==(const StreamItem&, const StreamItem&) = default;
};

// `draws` Bernoulli(ratio) choices between the two corpora; each corpus is
// walked in a seeded shuffled order, reshuffled after every full pass.
std::vector<StreamItem> mix_corpora(std::size_t n_paired, std::size_t n_text, double ratio,
                                    std::uint64_t seed, std::size_t draws);

// ---- associations ----------------------------------------------------------------

// Everything an associative or transferred strategy may need. Unused members
// may stay null.
struct GroundingResources {
  const FeatureStore* store = nullptr;
  const ImageKeyIndex* index = nullptr;    // caption-keyed (scene) or synset-keyed (object)
  const WordEmbeddingTable* table = nullptr;
  const NounTagger* tagger = nullptr;
  const KeywordCorpus* keywords = nullptr;
};

struct AssociationOptions {
  std::size_t k = 16;
  std::size_t kappa = 8;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Content-hash keyed store of retrieval results. Features are not cached;
// they are re-read from the feature store on use.
class AssociationCache {
 public:
  static std::uint64_t key(Strategy s, const AssociationOptions& o,
                           std::span<const std::string> tokens);

  const Association* find(std::uint64_t key) const;
  void insert(std::uint64_t key, Association a);
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t hits() const noexcept { return hits_; }

  void save(const std::filesystem::path& path) const;
  static AssociationCache load(const std::filesystem::path& path);

 private:
  std::unordered_map<std::uint64_t, Association> entries_;
  mutable std::size_t hits_ = 0;
};

class Associator {
 public:
  Associator(Strategy strategy, const GroundingResources& res, AssociationOptions options,
             AssociationCache* cache = nullptr);

  // Ranked association for the given surviving tokens, features resolved.
  Association associate(std::span<const std::string> tokens) const;

 private:
  Strategy strategy_;
  GroundingResources res_;
  AssociationOptions options_;
  AssociationCache* cache_;
};

// ---- example encoding ------------------------------------------------------------

enum class VisualMode { strategy, placeholder };

struct TextItem {
  std::vector<std::string> words;      // text_a (and text_b for pairs)
  std::vector<std::string> words_b;
  bool is_pair = false;
  const std::string* image_id = nullptr;  // paired image, if any
};

class ExampleEncoder {
 public:
  ExampleEncoder(Strategy strategy, const Vocabulary& vocab, const ModelConfig& config,
                 const GroundingResources& res, AssociationOptions assoc,
                 AssociationCache* cache = nullptr);

  // mask_text: apply token masking at config.mask_rate. region_rate: region
  // masking probability for paired images (ignored otherwise).
  EncodedExample encode(const TextItem& item, std::mt19937_64& rng, bool mask_text,
                        double region_rate, VisualMode mode) const;

  Strategy strategy() const noexcept { return strategy_; }

 private:
  Strategy strategy_;
  const Vocabulary* vocab_;
  ModelConfig config_;
  GroundingResources res_;
  Associator associator_;
};

// ---- pretraining -----------------------------------------------------------------

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 1e-4;
  std::size_t max_epochs = 1;
  std::size_t max_steps = 0;      // 0: run max_epochs full passes
  std::uint64_t seed = 0;
  double mix_ratio = 0.5;         // share of caption-paired draws when both corpora exist
  std::size_t eval_every = 100;
  std::size_t patience = 3;       // 0 disables early stopping
  double region_mask_rate = 0.15;
  std::size_t train_probe_examples = 256;
  bool prefetch = true;
  AssociationOptions assoc;

  void validate() const;
};

struct PretrainData {
  std::vector<CaptionRecord> paired;        // caption + image id
  std::vector<std::string> text_only;
  std::vector<CaptionRecord> eval_paired;   // held-out split
  std::vector<std::string> eval_text;
};

struct MetricRow {
  std::size_t step = 0;
  std::string split;
  std::string metric;
  double value = 0;
  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

void write_metrics_csv(std::span<const MetricRow> rows, const std::filesystem::path& path);

struct PretrainResult {
  std::vector<MetricRow> metrics;
  std::size_t steps = 0;
  std::size_t paired_examples = 0;
  std::size_t text_examples = 0;
  std::size_t skipped_examples = 0;
  double initial_train_ppl = 0;
  double final_train_ppl = 0;
  std::optional<double> final_eval_ppl;
  bool stopped_early = false;
};

// Throws std::invalid_argument before any training if the corpora or
// resources do not fit the strategy.
void validate_strategy_inputs(Strategy strategy, const PretrainData& data,
                              const GroundingResources& res);

PretrainResult pretrain(Strategy strategy, const PretrainData& data, const Vocabulary& vocab,
                        const GroundingResources& res, CrossModalModel& model,
                        const TrainConfig& config, AssociationCache* cache = nullptr);

// Fixed evaluation stream: masking drawn from `seed`, regions never masked.
std::vector<MaskedBatch> build_eval_stream(Strategy strategy, std::span<const CaptionRecord> paired,
                                           std::span<const std::string> text_only,
                                           const Vocabulary& vocab, const ModelConfig& config,
                                           const GroundingResources& res,
                                           const AssociationOptions& assoc, std::size_t batch_size,
                                           std::uint64_t seed, VisualMode mode,
                                           AssociationCache* cache = nullptr);

}  // namespace glm
