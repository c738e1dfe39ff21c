#include "groundlm/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "groundlm/binary_io.hpp"
#include "groundlm/vocab.hpp"

namespace glm {

namespace {

constexpr char kCheckpointMagic[5] = "GLMC";
constexpr std::uint32_t kCheckpointVersion = 1;

[[noreturn]] void config_error(const std::string& what) {
  throw std::invalid_argument("model config: " + what);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') config_error(key + " expects an integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) config_error(key + " expects a number, got '" + v + "'");
  return x;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kFirstWord)) {
    config_error("vocab_size must exceed the reserved ids");
  }
  if (d == 0 || n_heads == 0 || d % n_heads != 0) config_error("d must be divisible by n_heads");
  if (d_v == 0) config_error("d_v must be positive");
  if (max_len < 2) config_error("max_len must be >= 2");
  if (k_max == 0 || n_regions == 0) config_error("k_max and n_regions must be positive");
  if (!(mask_rate > 0 && mask_rate < 1)) config_error("mask_rate must be in (0, 1)");
  if (!(p_norm >= 1)) config_error("p_norm must be >= 1");
  if (!(l1_coeff >= 0)) config_error("l1_coeff must be >= 0");
  if (!(init_std > 0)) config_error("init_std must be positive");
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "vocab_size=" << vocab_size << '\n'
     << "d=" << d << '\n'
     << "d_v=" << d_v << '\n'
     << "n_layers_text=" << n_layers_text << '\n'
     << "n_layers_cross=" << n_layers_cross << '\n'
     << "n_heads=" << n_heads << '\n'
     << "d_ff=" << d_ff << '\n'
     << "max_len=" << max_len << '\n'
     << "k_max=" << k_max << '\n'
     << "n_regions=" << n_regions << '\n'
     << "mask_rate=" << mask_rate << '\n'
     << "p_norm=" << p_norm << '\n'
     << "l1_coeff=" << l1_coeff << '\n'
     << "init_std=" << init_std << '\n'
     << "freeze_text=" << (freeze_text ? 1 : 0) << '\n';
  return os.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_error("malformed line '" + line + "'");
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "vocab_size") c.vocab_size = parse_size(k, v);
    else if (k == "d") c.d = parse_size(k, v);
    else if (k == "d_v") c.d_v = parse_size(k, v);
    else if (k == "n_layers_text") c.n_layers_text = parse_size(k, v);
    else if (k == "n_layers_cross") c.n_layers_cross = parse_size(k, v);
    else if (k == "n_heads") c.n_heads = parse_size(k, v);
    else if (k == "d_ff") c.d_ff = parse_size(k, v);
    else if (k == "max_len") c.max_len = parse_size(k, v);
    else if (k == "k_max") c.k_max = parse_size(k, v);
    else if (k == "n_regions") c.n_regions = parse_size(k, v);
    else if (k == "mask_rate") c.mask_rate = parse_double(k, v);
    else if (k == "p_norm") c.p_norm = parse_double(k, v);
    else if (k == "l1_coeff") c.l1_coeff = parse_double(k, v);
    else if (k == "init_std") c.init_std = parse_double(k, v);
    else if (k == "freeze_text") c.freeze_text = parse_size(k, v) != 0;
    else config_error("unknown key '" + k + "'");
  }
  return c;
}

// ---- masking ------------------------------------------------------------------

TokenMasking mask_tokens(std::span<const std::int32_t> ids, double rate, std::mt19937_64& rng,
                         std::size_t vocab_size) {
  if (ids.empty()) throw std::invalid_argument("mask_tokens: empty sequence");
  if (!(rate > 0 && rate <= 1)) throw std::invalid_argument("mask_tokens: rate must be in (0, 1]");
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kFirstWord)) {
    throw std::invalid_argument("mask_tokens: vocabulary has no word ids");
  }
  TokenMasking m;
  m.original.assign(ids.begin(), ids.end());
  m.input = m.original;
  m.flags.assign(ids.size(), 0);

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto t = ids[i];
    if (t != Vocabulary::kPad && t != Vocabulary::kCls && t != Vocabulary::kSep) eligible.push_back(i);
  }
  if (eligible.empty()) return m;

  std::bernoulli_distribution pick(rate);
  std::vector<std::size_t> chosen;
  while (chosen.empty()) {
    for (std::size_t i : eligible) {
      if (pick(rng)) chosen.push_back(i);
    }
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::int32_t> word(Vocabulary::kFirstWord,
                                                   static_cast<std::int32_t>(vocab_size) - 1);
  for (std::size_t i : chosen) {
    m.flags[i] = 1;
    const double r = u(rng);
    if (r < 0.8) m.input[i] = Vocabulary::kMask;
    else if (r < 0.9) m.input[i] = word(rng);
  }
  return m;
}

VisualInput VisualInput::from_images(std::span<const std::vector<float>> images,
                                     std::size_t n_regions, std::size_t d_v) {
  if (images.empty()) return none();
  VisualInput v;
  v.placeholder = false;
  const std::size_t block = n_regions * d_v;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != block) {
      throw std::invalid_argument("image " + std::to_string(i) + " has " +
                                  std::to_string(images[i].size()) + " values, expected " +
                                  std::to_string(block));
    }
    v.regions.insert(v.regions.end(), images[i].begin(), images[i].end());
    for (std::size_t r = 0; r < n_regions; ++r) v.ranks.push_back(static_cast<std::int32_t>(i));
  }
  v.original_regions = v.regions;
  v.region_mask.assign(images.size() * n_regions, 0);
  return v;
}

void mask_regions(VisualInput& visual, std::size_t d_v, double rate, std::mt19937_64& rng) {
  if (!(rate >= 0 && rate <= 1)) throw std::invalid_argument("mask_regions: rate must be in [0, 1]");
  if (visual.placeholder) return;
  const std::size_t rows = visual.regions.size() / d_v;
  if (rows == 0) throw std::invalid_argument("mask_regions: no region rows");
  visual.region_mask.assign(rows, 0);
  std::bernoulli_distribution pick(rate);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!pick(rng)) continue;
    visual.region_mask[r] = 1;
    std::fill_n(visual.regions.begin() + static_cast<std::ptrdiff_t>(r * d_v), d_v, 0.0f);
  }
}

std::size_t MaskedBatch::masked_tokens() const {
  return static_cast<std::size_t>(std::count(token_mask.begin(), token_mask.end(), 1));
}

std::size_t MaskedBatch::masked_regions() const {
  return static_cast<std::size_t>(std::count(region_mask.begin(), region_mask.end(), 1));
}

MaskedBatch collate(std::span<const EncodedExample> examples, std::size_t d_v) {
  if (examples.empty()) throw std::invalid_argument("collate: empty batch");
  MaskedBatch b;
  b.batch = examples.size();
  b.d_v = d_v;
  for (const auto& e : examples) {
    if (e.text.input.empty()) throw std::invalid_argument("collate: empty token sequence");
    b.text_len = std::max(b.text_len, e.text.input.size());
    if (!e.visual.placeholder && e.visual.regions.size() % d_v != 0) {
      throw std::invalid_argument("collate: region block is not a multiple of d_v");
    }
    b.slots = std::max(b.slots, e.visual.rows(d_v));
  }
  const std::size_t L = b.text_len, S = b.slots, B = b.batch;
  b.token_ids.assign(B * L, Vocabulary::kPad);
  b.original_tokens.assign(B * L, Vocabulary::kPad);
  b.token_mask.assign(B * L, 0);
  b.text_valid.assign(B * L, 0);
  b.regions.assign(B * S * d_v, 0.0f);
  b.original_regions.assign(B * S * d_v, 0.0f);
  b.region_mask.assign(B * S, 0);
  b.rank_ids.assign(B * S, 0);
  b.slot_kind.assign(B * S, SlotKind::pad);
  for (std::size_t i = 0; i < B; ++i) {
    const auto& t = examples[i].text;
    for (std::size_t j = 0; j < t.input.size(); ++j) {
      b.token_ids[i * L + j] = t.input[j];
      b.original_tokens[i * L + j] = t.original[j];
      b.token_mask[i * L + j] = t.flags[j];
      b.text_valid[i * L + j] = 1;
    }
    const auto& v = examples[i].visual;
    if (v.placeholder) {
      b.slot_kind[i * S] = SlotKind::placeholder;
      continue;
    }
    const std::size_t rows = v.rows(d_v);
    std::copy(v.regions.begin(), v.regions.end(), b.regions.begin() + static_cast<std::ptrdiff_t>(i * S * d_v));
    std::copy(v.original_regions.begin(), v.original_regions.end(),
              b.original_regions.begin() + static_cast<std::ptrdiff_t>(i * S * d_v));
    for (std::size_t r = 0; r < rows; ++r) {
      b.slot_kind[i * S + r] = SlotKind::region;
      b.rank_ids[i * S + r] = v.ranks[r];
      b.region_mask[i * S + r] = r < v.region_mask.size() ? v.region_mask[r] : 0;
    }
  }
  return b;
}

// ---- model ----------------------------------------------------------------------

CrossModalModel::CrossModalModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const double s = config_.init_std;
  const std::size_t d = config_.d, ff = config_.ff_width();

  add_param("tok_emb", {config_.vocab_size, d}, true, rng, s);
  add_param("pos_emb", {config_.max_len, d}, true, rng, s);
  auto layer = [&](const std::string& p, bool text) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      add_param(p + w, {d, d}, text, rng, s);
      add_param(p + "b" + std::string(w + 1), {d}, text, rng, 0);
    }
    add_param(p + "ln1_g", {d}, text, rng, 0, 1.0);
    add_param(p + "ln1_b", {d}, text, rng, 0);
    add_param(p + "w1", {d, ff}, text, rng, s);
    add_param(p + "b1", {ff}, text, rng, 0);
    add_param(p + "w2", {ff, d}, text, rng, s);
    add_param(p + "b2", {d}, text, rng, 0);
    add_param(p + "ln2_g", {d}, text, rng, 0, 1.0);
    add_param(p + "ln2_b", {d}, text, rng, 0);
  };
  for (std::size_t l = 0; l < config_.n_layers_text; ++l) layer("text." + std::to_string(l) + ".", true);
  for (std::size_t l = 0; l < config_.n_layers_cross; ++l) layer("cross." + std::to_string(l) + ".", false);
  add_param("region_proj_w", {config_.d_v, d}, false, rng, s);
  add_param("region_proj_b", {d}, false, rng, 0);
  add_param("placeholder", {1, d}, false, rng, s);
  add_param("rank_emb", {config_.k_max, d}, false, rng, s);
  add_param("jmlm_w", {d, config_.vocab_size}, false, rng, s);
  add_param("jmlm_b", {config_.vocab_size}, false, rng, 0);
  add_param("jmrm_w", {d, config_.d_v}, false, rng, s);
  add_param("jmrm_b", {config_.d_v}, false, rng, 0);
  set_text_frozen(config_.freeze_text);
}

Parameter& CrossModalModel::add_param(std::string name, Shape shape, bool text_encoder,
                                      std::mt19937_64& rng, double std, double constant) {
  Tensor t(shape, static_cast<Real>(constant));
  if (std > 0) {
    std::normal_distribution<double> n(0.0, std);
    for (auto& x : t.values()) x = static_cast<Real>(n(rng));
  }
  if (auto it = index_.find(name); it != index_.end()) {
    params_[it->second].value = std::move(t);
    params_[it->second].grad = Tensor();
    return params_[it->second];
  }
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(t), Tensor(), true});
  is_text_.push_back(text_encoder);
  return params_.back();
}

std::vector<Parameter*> CrossModalModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> CrossModalModel::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> CrossModalModel::text_encoder_parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (is_text_[i]) out.push_back(&params_[i]);
  }
  return out;
}

Parameter& CrossModalModel::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return params_[it->second];
}

const Parameter& CrossModalModel::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return params_[it->second];
}

void CrossModalModel::set_text_frozen(bool frozen) {
  config_.freeze_text = frozen;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (is_text_[i]) params_[i].trainable = !frozen;
  }
}

void CrossModalModel::reset_cls_head(std::size_t outputs, std::uint64_t seed) {
  if (outputs == 0) throw std::invalid_argument("classification head needs at least one output");
  std::mt19937_64 rng(seed);
  add_param("cls_w", {config_.d, outputs}, false, rng, config_.init_std);
  add_param("cls_b", {outputs}, false, rng, 0);
}

std::optional<std::size_t> CrossModalModel::cls_outputs() const {
  if (!has_param("cls_w")) return std::nullopt;
  return param("cls_w").value.dim(1);
}

Var CrossModalModel::encoder_layer(Graph& g, const std::string& p, Var x, std::size_t batch,
                                   std::size_t seq, std::span<const std::uint8_t> valid) {
  auto P = [&](const char* n) { return g.param(param(p + n)); };
  auto lin = [&](Var in, const char* w, const char* b) { return add_bias(matmul(in, P(w)), P(b)); };
  Var q = lin(x, "wq", "bq");
  Var k = lin(x, "wk", "bk");
  Var v = lin(x, "wv", "bv");
  Var a = attention(q, k, v, AttentionShape{batch, seq, config_.n_heads}, valid);
  x = layernorm(add(x, lin(a, "wo", "bo")), P("ln1_g"), P("ln1_b"));
  Var h = lin(gelu(lin(x, "w1", "b1")), "w2", "b2");
  return layernorm(add(x, h), P("ln2_g"), P("ln2_b"));
}

Var CrossModalModel::visual_slots(Graph& g, const MaskedBatch& b) {
  const std::size_t rows = b.batch * b.slots, d = config_.d;
  Tensor regions({rows, config_.d_v});
  std::copy(b.regions.begin(), b.regions.end(), regions.data());
  Tensor region_sel({rows, d}), placeholder_sel({rows, d});
  for (std::size_t r = 0; r < rows; ++r) {
    const SlotKind k = b.slot_kind[r];
    if (k == SlotKind::region) std::fill_n(region_sel.data() + r * d, d, Real(1));
    if (k == SlotKind::placeholder) std::fill_n(placeholder_sel.data() + r * d, d, Real(1));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (b.rank_ids[r] < 0 || static_cast<std::size_t>(b.rank_ids[r]) >= config_.k_max) {
      throw std::invalid_argument("forward: rank id " + std::to_string(b.rank_ids[r]) +
                                  " outside [0, " + std::to_string(config_.k_max) + ")");
    }
  }
  Var proj = add_bias(matmul(g.constant(std::move(regions)), g.param(param("region_proj_w"))),
                      g.param(param("region_proj_b")));
  Var ranked = add(proj, gather_rows(g.param(param("rank_emb")), b.rank_ids));
  const std::vector<std::int32_t> zeros(rows, 0);
  Var ph = gather_rows(g.param(param("placeholder")), zeros);
  return add(mul(ranked, g.constant(std::move(region_sel))),
             mul(ph, g.constant(std::move(placeholder_sel))));
}

Tensor CrossModalModel::visual_slot_inputs(const MaskedBatch& batch) {
  Graph g(false);
  return visual_slots(g, batch).value();
}

ForwardOutput CrossModalModel::forward(Graph& g, const MaskedBatch& b) {
  const std::size_t B = b.batch, L = b.text_len, S = b.slots;
  if (B == 0 || L == 0 || S == 0) throw std::invalid_argument("forward: empty batch");
  if (L > config_.max_len) {
    throw std::invalid_argument("forward: text length " + std::to_string(L) + " exceeds max_len " +
                                std::to_string(config_.max_len));
  }
  if (S > config_.max_slots()) {
    throw std::invalid_argument("forward: " + std::to_string(S) + " visual slots exceed K_max*N = " +
                                std::to_string(config_.max_slots()));
  }
  if (b.d_v != config_.d_v) {
    throw std::invalid_argument("forward: batch d_v " + std::to_string(b.d_v) + " != model d_v " +
                                std::to_string(config_.d_v));
  }
  if (b.token_ids.size() != B * L || b.slot_kind.size() != B * S || b.regions.size() != B * S * b.d_v) {
    throw std::invalid_argument("forward: batch arrays do not match declared shape");
  }
  for (auto t : b.token_ids) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      throw std::invalid_argument("forward: token id " + std::to_string(t) + " outside vocabulary");
    }
  }

  std::vector<std::int32_t> positions(B * L);
  for (std::size_t i = 0; i < B * L; ++i) positions[i] = static_cast<std::int32_t>(i % L);
  Var x = add(gather_rows(g.param(param("tok_emb")), b.token_ids),
              gather_rows(g.param(param("pos_emb")), positions));
  for (std::size_t l = 0; l < config_.n_layers_text; ++l) {
    x = encoder_layer(g, "text." + std::to_string(l) + ".", x, B, L, b.text_valid);
  }

  // Interleave [text_b ; slots_b] per example.
  Var vis = visual_slots(g, b);
  const std::size_t T = L + S;
  std::vector<std::int32_t> order(B * T), text_rows(B * L), slot_rows(B * S), cls_rows(B);
  std::vector<std::uint8_t> valid(B * T);
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      order[i * T + j] = static_cast<std::int32_t>(i * L + j);
      valid[i * T + j] = b.text_valid[i * L + j];
      text_rows[i * L + j] = static_cast<std::int32_t>(i * T + j);
    }
    for (std::size_t j = 0; j < S; ++j) {
      order[i * T + L + j] = static_cast<std::int32_t>(B * L + i * S + j);
      valid[i * T + L + j] = b.slot_kind[i * S + j] != SlotKind::pad;
      slot_rows[i * S + j] = static_cast<std::int32_t>(i * T + L + j);
    }
    cls_rows[i] = static_cast<std::int32_t>(i * T);
  }
  const Var parts[] = {x, vis};
  Var h = gather_rows(concat_rows(parts), order);
  for (std::size_t l = 0; l < config_.n_layers_cross; ++l) {
    h = encoder_layer(g, "cross." + std::to_string(l) + ".", h, B, T, valid);
  }

  ForwardOutput out;
  out.batch = B;
  out.text_len = L;
  out.slots = S;
  out.token_logits = add_bias(matmul(gather_rows(h, text_rows), g.param(param("jmlm_w"))),
                              g.param(param("jmlm_b")));
  out.jmrm_weight = g.param(param("jmrm_w"));
  out.region_preds = add_bias(matmul(gather_rows(h, slot_rows), out.jmrm_weight),
                              g.param(param("jmrm_b")));
  out.cls = gather_rows(h, cls_rows);
  return out;
}

// ---- losses -------------------------------------------------------------------

Var jmlm_loss(Var token_logits, std::span<const std::int32_t> original_tokens,
              std::span<const std::uint8_t> token_mask) {
  if (original_tokens.size() != token_mask.size() ||
      original_tokens.size() != token_logits.value().rows()) {
    throw std::invalid_argument("jmlm_loss: logits rows, targets and flags differ in length");
  }
  std::vector<std::int32_t> targets(original_tokens.size(), -1);
  std::size_t count = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (token_mask[i]) {
      targets[i] = original_tokens[i];
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("jmlm_loss: no masked tokens in batch");
  return scale(cross_entropy(token_logits, targets), Real(1) / Real(count));
}

Var jmrm_loss(Var region_preds, std::span<const float> original_regions,
              std::span<const std::uint8_t> region_mask, Var head_weights, double p_norm,
              double l1_coeff) {
  const Tensor& pv = region_preds.value();
  if (pv.rows() != region_mask.size() || pv.size() != original_regions.size()) {
    throw std::invalid_argument("jmrm_loss: predictions " + shape_str(pv.shape()) +
                                " do not match targets/flags");
  }
  const auto count = static_cast<std::size_t>(std::count(region_mask.begin(), region_mask.end(), 1));
  Graph& g = region_preds.graph();
  if (count == 0) return g.constant(Tensor::scalar(0));
  Tensor target(pv.shape());
  std::copy(original_regions.begin(), original_regions.end(), target.data());
  Var fit = scale(lp_loss(region_preds, target, region_mask, static_cast<Real>(p_norm)),
                  Real(1) / Real(count));
  if (l1_coeff == 0) return fit;
  return add(fit, scale(l1_norm(head_weights), static_cast<Real>(l1_coeff)));
}

PerplexityResult perplexity(CrossModalModel& model, std::span<const MaskedBatch> stream) {
  if (stream.empty()) throw std::invalid_argument("perplexity: empty evaluation stream");
  PerplexityResult r;
  for (const auto& batch : stream) {
    Graph g(false);
    ForwardOutput out = model.forward(g, batch);
    std::vector<std::int32_t> targets(batch.original_tokens.size(), -1);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (batch.token_mask[i]) {
        targets[i] = batch.original_tokens[i];
        ++r.masked_tokens;
      }
    }
    r.total_nll += static_cast<double>(cross_entropy(out.token_logits, targets).value().item());
  }
  if (r.masked_tokens == 0) throw std::invalid_argument("perplexity: stream has no masked tokens");
  r.perplexity = std::exp(r.total_nll / static_cast<double>(r.masked_tokens));
  return r;
}

// ---- checkpoints -----------------------------------------------------------------

void save_checkpoint(const CrossModalModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 4);
  io::write_pod<std::uint32_t>(out, kCheckpointVersion);
  io::write_string(out, model.config().serialize());
  const auto params = model.parameters();
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    io::write_string(out, p->name);
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t dim : p->value.shape()) io::write_pod<std::uint64_t>(out, dim);
    io::write_pod<std::uint8_t>(out, p->trainable ? 1 : 0);
    std::vector<float> buf(p->value.values().begin(), p->value.values().end());
    io::write_bytes(out, buf.data(), buf.size() * sizeof(float));
  }
  if (!out) throw std::runtime_error("write failed for checkpoint " + path.string());
}

CrossModalModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  io::expect_magic(in, kCheckpointMagic, "checkpoint");
  io::expect_version(io::read_pod<std::uint32_t>(in, "version"), kCheckpointVersion, "checkpoint");
  const ModelConfig config = ModelConfig::deserialize(io::read_string(in, "config"));
  CrossModalModel model(config, 0);
  const auto n = io::read_pod<std::uint32_t>(in, "parameter count");
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = io::read_string(in, "parameter name");
    const auto rank = io::read_pod<std::uint32_t>(in, "parameter rank");
    if (rank > 4) throw io::FormatError("checkpoint: implausible rank for " + name);
    Shape shape(rank);
    for (auto& s : shape) s = io::read_pod<std::uint64_t>(in, "parameter shape");
    const bool trainable = io::read_pod<std::uint8_t>(in, "trainable flag") != 0;
    std::vector<float> buf(shape_numel(shape));
    io::read_bytes(in, buf.data(), buf.size() * sizeof(float), "parameter data");
    if (name == "cls_w" && rank == 2) model.reset_cls_head(shape[1], 0);
    if (!model.has_param(name)) throw io::FormatError("checkpoint: unexpected parameter " + name);
    Parameter& p = model.param(name);
    if (p.value.shape() != shape) {
      throw io::FormatError("checkpoint: shape " + shape_str(shape) + " for " + name +
                            " does not match config " + shape_str(p.value.shape()));
    }
    p.value = Tensor(shape, std::vector<Real>(buf.begin(), buf.end()));
    p.trainable = trainable;
  }
  return model;
}

}  // namespace glm
