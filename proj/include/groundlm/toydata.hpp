#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "groundlm/assoc.hpp"
#include "groundlm/downstream.hpp"

namespace glm {

// Synthetic corpus where a caption's concept word is recoverable from its
// image but not from its text.
//
// Each caption is "<filler> <descriptor> <concept>". Concept words (n_concepts)
// and fillers (vocab_size - n_concepts) are frequent; every descriptor is
// used once, so it falls outside a min-count-2 vocabulary, but its word vector
// sits in the concept's cluster. Retrieval on descriptors therefore finds the
// right concept's images while the language model sees only [unk].
struct ToySpec {
  std::size_t vocab_size = 200;       // concept words + fillers
  std::size_t n_concepts = 50;
  std::size_t n_examples = 2000;      // caption-paired examples
  std::size_t n_text_only = 500;
  double eval_fraction = 0.1;
  std::size_t d_w = 32;
  std::size_t d_v = 32;
  std::size_t n_regions = 1;
  double grounding_strength = 1.0;
  double image_noise = 0.05;          // per-coordinate sigma around v_c
  double word_noise = 0.1;            // spread of a concept's words around its centre
  std::size_t pair_train_examples = 1000;  // separable pair task
  std::size_t pair_test_examples = 200;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t n_fillers() const { return vocab_size - n_concepts; }
};

struct EntropyFloor {
  double filler_nats = 0;
  double concept_nats_grounded = 0;
  double concept_nats_ungrounded = 0;
  // exp of the mean per-position entropy, masked positions uniform over the
  // three slots and the [unk] descriptor free to predict.
  double ppl_grounded = 0;
  double ppl_ungrounded = 0;
};

EntropyFloor entropy_floor(const ToySpec& spec);

struct ToyCorpus {
  ToySpec spec;
  std::vector<std::string> concept_words;
  std::vector<std::string> filler_words;
  std::vector<std::size_t> example_concept;   // concept of paired example i
  std::vector<bool> example_grounded;         // image carries v_c
  std::vector<CaptionRecord> train;
  std::vector<CaptionRecord> eval;
  std::vector<std::string> text_only;
  FeatureStore store;
  WordEmbeddingTable vectors;
  std::vector<SynsetRecord> synsets;
  std::string trigger_word;
  TaskFile pair_train;
  TaskFile pair_test;
  EntropyFloor floor;
};

ToyCorpus generate_toy_corpus(const ToySpec& spec);

// captions_train.tsv, captions_eval.tsv, text_only.txt, features.vftr(+manifest),
// vectors.txt, stopwords.txt, nouns.txt, synsets.tsv, pair_train.tsv,
// pair_test.tsv, meta.json.
void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir);

}  // namespace glm
