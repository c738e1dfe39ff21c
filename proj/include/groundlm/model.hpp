#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "groundlm/autograd.hpp"

namespace glm {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d = 128;          // cross-modal width
  std::size_t d_v = 2048;       // region feature width
  std::size_t n_layers_text = 2;
  std::size_t n_layers_cross = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 0;         // 0 means 4 * d
  std::size_t max_len = 64;
  std::size_t k_max = 16;       // images per example
  std::size_t n_regions = 1;    // regions per image
  double mask_rate = 0.15;
  double p_norm = 2.0;          // JMRM exponent
  double l1_coeff = 1e-4;       // JMRM head weight penalty
  double init_std = 0.02;
  bool freeze_text = false;

  std::size_t ff_width() const { return d_ff == 0 ? 4 * d : d_ff; }
  std::size_t max_slots() const { return k_max * n_regions; }
  // Throws std::invalid_argument naming the violated constraint.
  void validate() const;

  std::string serialize() const;  // key=value lines
  static ModelConfig deserialize(const std::string& text);
};

// ---- batches ------------------------------------------------------------------

enum class SlotKind : std::uint8_t { pad = 0, region = 1, placeholder = 2 };

struct TokenMasking {
  std::vector<std::int32_t> input;     // after substitution
  std::vector<std::int32_t> original;
  std::vector<std::uint8_t> flags;     // 1 where the position is a prediction target
};

// Each maskable position is selected with probability rate; selected
// positions become [masked] 80%, a random word 10%, unchanged 10%. [cls],
// [sep] and [pad] are never selected. At least one position is selected when
// any is eligible.
TokenMasking mask_tokens(std::span<const std::int32_t> ids, double rate, std::mt19937_64& rng,
                         std::size_t vocab_size);

// Visual side of one example: either the placeholder slot or K*N region rows.
struct VisualInput {
  bool placeholder = true;
  std::vector<float> regions;           // rows x d_v, masked rows zeroed
  std::vector<float> original_regions;  // rows x d_v
  std::vector<std::uint8_t> region_mask;
  std::vector<std::int32_t> ranks;      // rank id per row

  static VisualInput none() { return {}; }
  // images is a list of N x d_v blocks in rank order.
  static VisualInput from_images(std::span<const std::vector<float>> images, std::size_t n_regions,
                                 std::size_t d_v);
  std::size_t rows(std::size_t d_v) const { return placeholder ? 1 : regions.size() / d_v; }
};

// Zeroes each region row independently with probability rate (rate in
// [0, 1]). A placeholder input is left untouched.
void mask_regions(VisualInput& visual, std::size_t d_v, double rate, std::mt19937_64& rng);

struct EncodedExample {
  TokenMasking text;
  VisualInput visual;
};

struct MaskedBatch {
  std::size_t batch = 0;
  std::size_t text_len = 0;
  std::size_t slots = 0;
  std::size_t d_v = 0;
  std::vector<std::int32_t> token_ids;         // B x L
  std::vector<std::int32_t> original_tokens;   // B x L
  std::vector<std::uint8_t> token_mask;        // B x L
  std::vector<std::uint8_t> text_valid;        // B x L
  std::vector<float> regions;                  // B x S x d_v
  std::vector<float> original_regions;         // B x S x d_v
  std::vector<std::uint8_t> region_mask;       // B x S
  std::vector<std::int32_t> rank_ids;          // B x S
  std::vector<SlotKind> slot_kind;             // B x S

  std::size_t masked_tokens() const;
  std::size_t masked_regions() const;
};

MaskedBatch collate(std::span<const EncodedExample> examples, std::size_t d_v);

// ---- model ----------------------------------------------------------------------

struct ForwardOutput {
  Var token_logits;   // (B*L) x vocab
  Var region_preds;   // (B*S) x d_v
  Var cls;            // B x d
  Var jmrm_weight;    // d x d_v, for the L1 penalty
  std::size_t batch = 0;
  std::size_t text_len = 0;
  std::size_t slots = 0;
};

// Unimodal text encoder -> cross-modal encoder over [text ; visual slots],
// with JMLM / JMRM / optional classification heads.
class CrossModalModel {
 public:
  CrossModalModel() = default;
  CrossModalModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> text_encoder_parameters();
  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  bool has_param(const std::string& name) const { return index_.contains(name); }

  void set_text_frozen(bool frozen);
  bool text_frozen() const noexcept { return config_.freeze_text; }

  // Adds (or re-initialises) a d -> outputs classification head.
  void reset_cls_head(std::size_t outputs, std::uint64_t seed);
  std::optional<std::size_t> cls_outputs() const;

  ForwardOutput forward(Graph& g, const MaskedBatch& batch);

  // Cross-encoder input rows (visual slots only) for inspection.
  Tensor visual_slot_inputs(const MaskedBatch& batch);

 private:
  Parameter& add_param(std::string name, Shape shape, bool text_encoder, std::mt19937_64& rng,
                       double std, double constant = 0.0);
  Var encoder_layer(Graph& g, const std::string& prefix, Var x, std::size_t batch,
                    std::size_t seq, std::span<const std::uint8_t> valid);
  Var visual_slots(Graph& g, const MaskedBatch& batch);

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::vector<bool> is_text_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---- losses -------------------------------------------------------------------

// Mean cross-entropy over masked positions. Throws if nothing is masked.
Var jmlm_loss(Var token_logits, std::span<const std::int32_t> original_tokens,
              std::span<const std::uint8_t> token_mask);

// Mean over masked regions of |r - r_hat|_p^p / d_v, plus
// l1_coeff * |head weights|_1. Zero (a constant) when no region is masked.
Var jmrm_loss(Var region_preds, std::span<const float> original_regions,
              std::span<const std::uint8_t> region_mask, Var head_weights, double p_norm,
              double l1_coeff);

struct PerplexityResult {
  double perplexity = 0;
  double total_nll = 0;
  std::size_t masked_tokens = 0;
};

// exp(sum of masked-token NLL / masked-token count) over a fixed stream.
PerplexityResult perplexity(CrossModalModel& model, std::span<const MaskedBatch> stream);

// ---- checkpoints -----------------------------------------------------------------

void save_checkpoint(const CrossModalModel& model, const std::filesystem::path& path);
CrossModalModel load_checkpoint(const std::filesystem::path& path);

}  // namespace glm
