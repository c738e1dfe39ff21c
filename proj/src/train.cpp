#include "groundlm/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "groundlm/binary_io.hpp"
#include "groundlm/optim.hpp"

namespace glm {

namespace {

constexpr char kCacheMagic[5] = "GLMA";
constexpr std::uint32_t kCacheVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

}  // namespace

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::no_grounding: return "none";
    case Strategy::transferred_i2t: return "i2t";
    case Strategy::transferred_t2i: return "t2i";
    case Strategy::transferred_both: return "both";
    case Strategy::associative_scene: return "scene";
    case Strategy::associative_object: return "object";
    case Strategy::associative_keyword: return "keyword";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::no_grounding, Strategy::transferred_i2t, Strategy::transferred_t2i,
                     Strategy::transferred_both, Strategy::associative_scene,
                     Strategy::associative_object, Strategy::associative_keyword}) {
    if (name == to_string(s)) return s;
  }
  throw std::invalid_argument("unknown strategy '" + std::string(name) +
                              "' (expected none|i2t|t2i|both|scene|object|keyword)");
}

bool is_transferred(Strategy s) {
  return s == Strategy::transferred_i2t || s == Strategy::transferred_t2i ||
         s == Strategy::transferred_both;
}

bool is_associative(Strategy s) {
  return s == Strategy::associative_scene || s == Strategy::associative_object ||
         s == Strategy::associative_keyword;
}

// ---- mixing ----------------------------------------------------------------------

std::vector<StreamItem> mix_corpora(std::size_t n_paired, std::size_t n_text, double ratio,
                                    std::uint64_t seed, std::size_t draws) {
  if (!(ratio >= 0 && ratio <= 1)) throw std::invalid_argument("mix_corpora: ratio must be in [0, 1]");
  if (ratio > 0 && n_paired == 0) throw std::invalid_argument("mix_corpora: paired corpus is empty");
  if (ratio < 1 && n_text == 0) throw std::invalid_argument("mix_corpora: text-only corpus is empty");

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(ratio);
  struct Walk {
    std::vector<std::size_t> order;
    std::size_t at = 0;
  };
  Walk walks[2];
  walks[0].order.resize(n_text);
  walks[1].order.resize(n_paired);
  for (auto& w : walks) {
    std::iota(w.order.begin(), w.order.end(), std::size_t{0});
    std::shuffle(w.order.begin(), w.order.end(), rng);
  }
  std::vector<StreamItem> out;
  out.reserve(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    const bool paired = ratio >= 1 ? true : ratio <= 0 ? false : coin(rng);
    Walk& w = walks[paired ? 1 : 0];
    if (w.at == w.order.size()) {
      std::shuffle(w.order.begin(), w.order.end(), rng);
      w.at = 0;
    }
    out.push_back(StreamItem{paired, w.order[w.at++]});
  }
  return out;
}

// ---- association cache -------------------------------------------------------------

std::uint64_t AssociationCache::key(Strategy s, const AssociationOptions& o,
                                    std::span<const std::string> tokens) {
  const std::uint64_t header[] = {static_cast<std::uint64_t>(s), o.k, o.kappa, o.seed};
  std::uint64_t h = io::fnv1a(header, sizeof(header));
  for (const auto& t : tokens) {
    h = io::fnv1a(t, h);
    h = io::fnv1a("\x1f", 1, h);
  }
  return h;
}

const Association* AssociationCache::find(std::uint64_t key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  ++hits_;
  return &it->second;
}

void AssociationCache::insert(std::uint64_t key, Association a) {
  for (auto& item : a.items) item.features.clear();
  entries_.insert_or_assign(key, std::move(a));
}

void AssociationCache::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write association cache " + path.string());
  out.write(kCacheMagic, 4);
  io::write_pod<std::uint32_t>(out, kCacheVersion);
  std::vector<std::uint64_t> keys;
  keys.reserve(entries_.size());
  for (const auto& [k, v] : entries_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  io::write_pod<std::uint64_t>(out, keys.size());
  for (auto k : keys) {
    const Association& a = entries_.at(k);
    io::write_pod<std::uint64_t>(out, k);
    io::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(a.strategy));
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(a.items.size()));
    for (const auto& item : a.items) {
      io::write_string(out, item.image_id);
      io::write_pod<std::uint32_t>(out, item.rank);
      io::write_pod<float>(out, item.similarity);
    }
  }
}

AssociationCache AssociationCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open association cache " + path.string());
  io::expect_magic(in, kCacheMagic, "association cache");
  io::expect_version(io::read_pod<std::uint32_t>(in, "version"), kCacheVersion, "association cache");
  AssociationCache c;
  const auto n = io::read_pod<std::uint64_t>(in, "entry count");
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto k = io::read_pod<std::uint64_t>(in, "key");
    Association a;
    const auto s = io::read_pod<std::uint8_t>(in, "strategy");
    if (s > 2) throw io::FormatError("association cache: bad strategy tag");
    a.strategy = static_cast<AssocStrategy>(s);
    const auto m = io::read_pod<std::uint32_t>(in, "item count");
    for (std::uint32_t j = 0; j < m; ++j) {
      AssociatedImage item;
      item.image_id = io::read_string(in, "image id");
      item.rank = io::read_pod<std::uint32_t>(in, "rank");
      item.similarity = io::read_pod<float>(in, "similarity");
      a.items.push_back(std::move(item));
    }
    c.entries_.emplace(k, std::move(a));
  }
  return c;
}

Associator::Associator(Strategy strategy, const GroundingResources& res, AssociationOptions options,
                       AssociationCache* cache)
    : strategy_(strategy), res_(res), options_(options), cache_(cache) {}

Association Associator::associate(std::span<const std::string> tokens) const {
  Association a;
  const std::uint64_t key = AssociationCache::key(strategy_, options_, tokens);
  if (const Association* hit = cache_ ? cache_->find(key) : nullptr) {
    a = *hit;
  } else {
    switch (strategy_) {
      case Strategy::associative_scene:
        a = associate_scene(tokens, *res_.index, *res_.table, options_.k, options_.threads);
        break;
      case Strategy::associative_object:
        a = associate_object(tokens, *res_.index, *res_.table, *res_.tagger,
                             ObjectAssocOptions{options_.k, options_.kappa, options_.seed,
                                                options_.threads});
        break;
      case Strategy::associative_keyword:
        a = associate_keyword_baseline(tokens, *res_.keywords, res_.table->stopwords(), options_.k);
        break;
      default:
        throw std::logic_error("associate: strategy is not associative");
    }
    if (cache_) cache_->insert(key, a);
  }
  resolve_features(a, *res_.store);
  return a;
}

// ---- encoding ----------------------------------------------------------------------

ExampleEncoder::ExampleEncoder(Strategy strategy, const Vocabulary& vocab, const ModelConfig& config,
                               const GroundingResources& res, AssociationOptions assoc,
                               AssociationCache* cache)
    : strategy_(strategy),
      vocab_(&vocab),
      config_(config),
      res_(res),
      associator_(strategy, res, assoc, cache) {
  if (assoc.k > config.k_max && is_associative(strategy)) {
    throw std::invalid_argument("association K " + std::to_string(assoc.k) + " exceeds model K_max " +
                                std::to_string(config.k_max));
  }
}

EncodedExample ExampleEncoder::encode(const TextItem& item, std::mt19937_64& rng, bool mask_text,
                                      double region_rate, VisualMode mode) const {
  std::vector<std::int32_t> ids;
  std::vector<const std::string*> source;  // word behind each position
  if (item.is_pair) {
    ids = encode_pair(*vocab_, item.words, item.words_b, config_.max_len);
    source.push_back(nullptr);
    for (const auto& w : item.words) source.push_back(&w);
    source.push_back(nullptr);
    for (const auto& w : item.words_b) source.push_back(&w);
  } else {
    ids = encode_single(*vocab_, item.words, config_.max_len);
    source.push_back(nullptr);
    for (const auto& w : item.words) source.push_back(&w);
  }
  source.resize(ids.size());

  EncodedExample ex;
  if (mask_text) {
    ex.text = mask_tokens(ids, config_.mask_rate, rng, config_.vocab_size);
  } else {
    ex.text.original = ids;
    ex.text.input = ids;
    ex.text.flags.assign(ids.size(), 0);
  }

  if (mode == VisualMode::placeholder || strategy_ == Strategy::no_grounding) return ex;

  if (is_transferred(strategy_)) {
    if (item.image_id == nullptr) return ex;
    const auto ordinal = res_.store->find(*item.image_id);
    if (!ordinal) throw std::runtime_error("image '" + *item.image_id + "' missing from feature store");
    const auto block = res_.store->features(*ordinal);
    const std::vector<float> image(block.begin(), block.end());
    ex.visual = VisualInput::from_images(std::span(&image, 1), config_.n_regions, config_.d_v);
    if (region_rate > 0) mask_regions(ex.visual, config_.d_v, region_rate, rng);
    return ex;
  }

  // Associative: query with the words the model can still see.
  std::vector<std::string> surviving;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (source[i] != nullptr && ex.text.input[i] == ex.text.original[i]) surviving.push_back(*source[i]);
  }
  Association a = associator_.associate(surviving);
  std::vector<std::vector<float>> images;
  for (auto& it : a.items) images.push_back(std::move(it.features));
  ex.visual = VisualInput::from_images(images, config_.n_regions, config_.d_v);
  return ex;
}

// ---- pretraining -------------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("train config: lr must be > 0");
  if (max_steps == 0 && max_epochs == 0) {
    throw std::invalid_argument("train config: need max_epochs or max_steps");
  }
  if (!(mix_ratio >= 0 && mix_ratio <= 1)) {
    throw std::invalid_argument("train config: mix_ratio must be in [0, 1]");
  }
  if (!(region_mask_rate >= 0 && region_mask_rate <= 1)) {
    throw std::invalid_argument("train config: region_mask_rate must be in [0, 1]");
  }
  if (eval_every == 0) throw std::invalid_argument("train config: eval_every must be >= 1");
}

void write_metrics_csv(std::span<const MetricRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics " + path.string());
  out.precision(10);
  out << "step,split,metric,value\n";
  for (const auto& r : rows) out << r.step << ',' << r.split << ',' << r.metric << ',' << r.value << '\n';
}

void validate_strategy_inputs(Strategy strategy, const PretrainData& data,
                              const GroundingResources& res) {
  const std::string name = to_string(strategy);
  if (data.paired.empty() && data.text_only.empty()) {
    throw std::invalid_argument("strategy " + name + ": no training text");
  }
  if (is_transferred(strategy)) {
    if (data.paired.empty()) {
      throw std::invalid_argument("strategy " + name + " requires a caption-paired corpus");
    }
    if (res.store == nullptr) throw std::invalid_argument("strategy " + name + " requires a feature store");
    for (const auto* set : {&data.paired, &data.eval_paired}) {
      for (const auto& c : *set) {
        if (!res.store->find(c.image_id)) {
          throw std::invalid_argument("strategy " + name + ": image '" + c.image_id +
                                      "' missing from feature store");
        }
      }
    }
  }
  if (is_associative(strategy)) {
    if (res.store == nullptr || res.table == nullptr) {
      throw std::invalid_argument("strategy " + name + " requires a feature store and word vectors");
    }
    if (strategy == Strategy::associative_keyword) {
      if (res.keywords == nullptr) throw std::invalid_argument("strategy keyword requires a caption bank");
    } else if (res.index == nullptr) {
      throw std::invalid_argument("strategy " + name + " requires a built index");
    }
    if (strategy == Strategy::associative_object && res.tagger == nullptr) {
      throw std::invalid_argument("strategy object requires a noun lexicon");
    }
  }
}

namespace {

TextItem text_item(const std::string& text, const std::string* image_id) {
  TextItem t;
  t.words = tokenize(text);
  t.image_id = image_id;
  return t;
}

struct StepBatch {
  std::optional<MaskedBatch> batch;
  std::size_t paired = 0, text = 0, skipped = 0;
};

}  // namespace

std::vector<MaskedBatch> build_eval_stream(Strategy strategy, std::span<const CaptionRecord> paired,
                                           std::span<const std::string> text_only,
                                           const Vocabulary& vocab, const ModelConfig& config,
                                           const GroundingResources& res,
                                           const AssociationOptions& assoc, std::size_t batch_size,
                                           std::uint64_t seed, VisualMode mode,
                                           AssociationCache* cache) {
  if (batch_size == 0) throw std::invalid_argument("eval stream: batch_size must be >= 1");
  ExampleEncoder enc(strategy, vocab, config, res, assoc, cache);
  std::mt19937_64 rng(seed);
  std::vector<EncodedExample> pending;
  std::vector<MaskedBatch> out;
  auto flush = [&] {
    if (pending.empty()) return;
    out.push_back(collate(pending, config.d_v));
    pending.clear();
  };
  auto push = [&](const TextItem& item) {
    if (item.words.empty()) return;
    pending.push_back(enc.encode(item, rng, true, 0.0, mode));
    if (pending.size() == batch_size) flush();
  };
  for (const auto& c : paired) push(text_item(c.caption, &c.image_id));
  for (const auto& t : text_only) push(text_item(t, nullptr));
  flush();
  return out;
}

PretrainResult pretrain(Strategy strategy, const PretrainData& data, const Vocabulary& vocab,
                        const GroundingResources& res, CrossModalModel& model,
                        const TrainConfig& config, AssociationCache* cache) {
  config.validate();
  validate_strategy_inputs(strategy, data, res);
  const ModelConfig& mc = model.config();
  if (vocab.size() != mc.vocab_size) {
    throw std::invalid_argument("vocabulary size " + std::to_string(vocab.size()) +
                                " does not match model vocab_size " + std::to_string(mc.vocab_size));
  }
  model.param("placeholder").trainable = is_transferred(strategy);

  const bool uses_jmlm = strategy != Strategy::transferred_t2i;
  const bool uses_jmrm =
      strategy == Strategy::transferred_t2i || strategy == Strategy::transferred_both;
  const double region_rate = uses_jmrm ? config.region_mask_rate : 0.0;

  double ratio = config.mix_ratio;
  if (data.text_only.empty()) ratio = 1.0;
  else if (data.paired.empty()) ratio = 0.0;

  const std::size_t per_epoch = data.paired.size() + data.text_only.size();
  const std::size_t steps_per_epoch = (per_epoch + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps =
      config.max_steps > 0 ? config.max_steps : config.max_epochs * steps_per_epoch;
  const auto stream = mix_corpora(data.paired.size(), data.text_only.size(), ratio, config.seed,
                                  total_steps * config.batch_size);

  const ExampleEncoder enc(strategy, vocab, mc, res, config.assoc, cache);

  auto make_batch = [&](std::size_t step) {
    StepBatch sb;
    std::mt19937_64 rng(derive_seed(config.seed, 1, step));
    std::vector<EncodedExample> examples;
    for (std::size_t i = step * config.batch_size; i < (step + 1) * config.batch_size; ++i) {
      const StreamItem& it = stream[i];
      const bool paired = it.paired;
      const std::string& text = paired ? data.paired[it.index].caption : data.text_only[it.index];
      const std::string* image = paired ? &data.paired[it.index].image_id : nullptr;
      TextItem item = text_item(text, image);
      if (item.words.empty() || (strategy == Strategy::transferred_t2i && !paired)) {
        ++sb.skipped;
        continue;
      }
      (paired ? sb.paired : sb.text)++;
      examples.push_back(enc.encode(item, rng, uses_jmlm, paired ? region_rate : 0.0,
                                    VisualMode::strategy));
    }
    if (!examples.empty()) sb.batch = collate(examples, mc.d_v);
    return sb;
  };

  // Fixed probes: a slice of the training data and the held-out split.
  std::vector<CaptionRecord> probe_paired;
  std::vector<std::string> probe_text;
  for (std::size_t i = 0; i < std::min(config.train_probe_examples, stream.size()); ++i) {
    const StreamItem& it = stream[i];
    if (it.paired) probe_paired.push_back(data.paired[it.index]);
    else probe_text.push_back(data.text_only[it.index]);
  }
  const auto train_probe = build_eval_stream(strategy, probe_paired, probe_text, vocab, mc, res,
                                             config.assoc, config.batch_size,
                                             derive_seed(config.seed, 2, 0), VisualMode::strategy,
                                             cache);
  std::vector<MaskedBatch> eval_stream;
  if (!data.eval_paired.empty() || !data.eval_text.empty()) {
    eval_stream = build_eval_stream(strategy, data.eval_paired, data.eval_text, vocab, mc, res,
                                    config.assoc, config.batch_size, derive_seed(config.seed, 3, 0),
                                    VisualMode::strategy, cache);
  }

  PretrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad_evals = 0;
  double last_loss = 0;
  auto evaluate = [&](std::size_t step) {
    const double train_ppl = perplexity(model, train_probe).perplexity;
    if (step == 0) result.initial_train_ppl = train_ppl;
    result.final_train_ppl = train_ppl;
    result.metrics.push_back({step, "train", "perplexity", train_ppl});
    if (step > 0) result.metrics.push_back({step, "train", "loss", last_loss});
    if (eval_stream.empty()) return;
    const double ppl = perplexity(model, eval_stream).perplexity;
    result.final_eval_ppl = ppl;
    result.metrics.push_back({step, "eval", "perplexity", ppl});
    if (ppl < best) {
      best = ppl;
      bad_evals = 0;
    } else {
      ++bad_evals;
    }
  };

  const auto params = model.parameters();
  AdamState adam;
  adam.lr = config.lr;
  evaluate(0);

  std::future<StepBatch> next;
  if (total_steps > 0) {
    next = config.prefetch ? std::async(std::launch::async, make_batch, 0)
                           : std::async(std::launch::deferred, make_batch, 0);
  }
  std::size_t step = 0;
  while (step < total_steps) {
    StepBatch sb = next.get();
    if (step + 1 < total_steps) {
      next = config.prefetch ? std::async(std::launch::async, make_batch, step + 1)
                             : std::async(std::launch::deferred, make_batch, step + 1);
    }
    result.paired_examples += sb.paired;
    result.text_examples += sb.text;
    result.skipped_examples += sb.skipped;
    ++step;

    if (sb.batch) {
      const MaskedBatch& b = *sb.batch;
      Graph g;
      ForwardOutput out = model.forward(g, b);
      std::optional<Var> loss;
      if (uses_jmlm && b.masked_tokens() > 0) {
        loss = jmlm_loss(out.token_logits, b.original_tokens, b.token_mask);
      }
      if (uses_jmrm && b.masked_regions() > 0) {
        Var r = jmrm_loss(out.region_preds, b.original_regions, b.region_mask, out.jmrm_weight,
                          mc.p_norm, mc.l1_coeff);
        loss = loss ? add(*loss, r) : r;
      }
      if (loss && loss->requires_grad()) {
        zero_grads(params);
        g.backward(*loss);
        adam_step(params, adam);
        last_loss = static_cast<double>(loss->value().item());
      }
    }

    if (step % config.eval_every == 0 || step == total_steps) {
      evaluate(step);
      if (config.patience > 0 && bad_evals >= config.patience && step < total_steps) {
        result.stopped_early = true;
        break;
      }
    }
  }
  if (next.valid()) next.wait();
  result.steps = step;
  return result;
}

}  // namespace glm
