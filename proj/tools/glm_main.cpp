// glm: command-line driver for index building, association, pretraining,
// perplexity evaluation, fine-tuning and toy data generation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "groundlm/assoc.hpp"
#include "groundlm/downstream.hpp"
#include "groundlm/model.hpp"
#include "groundlm/toydata.hpp"
#include "groundlm/train.hpp"
#include "groundlm/vindex.hpp"
#include "groundlm/vocab.hpp"

namespace {

using namespace glm;

// Paths to the optional side inputs shared by several commands.
struct ResourcePaths {
  std::string features, vectors, stopwords, index, nouns, bank;

  void add(CLI::App* app) {
    app->add_option("--features", features, "Feature store (VFTR)")->check(CLI::ExistingFile);
    app->add_option("--vectors", vectors, "Word vectors (text, one word per line)")
        ->check(CLI::ExistingFile);
    app->add_option("--stopwords", stopwords, "Stopword list, one token per line")
        ->check(CLI::ExistingFile);
    app->add_option("--index", index, "Image key index (VIDX): caption keys for scene, synset keys for object")
        ->check(CLI::ExistingFile);
    app->add_option("--nouns", nouns, "Noun lexicon for object association")->check(CLI::ExistingFile);
    app->add_option("--bank", bank, "Caption TSV searched by the keyword baseline")
        ->check(CLI::ExistingFile);
  }
};

struct Resources {
  std::optional<FeatureStore> store;
  std::optional<ImageKeyIndex> index;
  std::optional<WordEmbeddingTable> table;
  std::optional<NounLexicon> nouns;
  std::unique_ptr<LexiconTagger> tagger;
  std::optional<KeywordCorpus> keywords;

  GroundingResources view() const {
    GroundingResources r;
    r.store = store ? &*store : nullptr;
    r.index = index ? &*index : nullptr;
    r.table = table ? &*table : nullptr;
    r.tagger = tagger.get();
    r.keywords = keywords ? &*keywords : nullptr;
    return r;
  }
};

Resources load_resources(const ResourcePaths& p) {
  Resources r;
  if (!p.features.empty()) r.store = load_feature_store(p.features);
  if (!p.index.empty()) r.index = load_index(p.index);
  if (!p.vectors.empty()) {
    r.table = load_word_vectors(p.vectors);
    if (!p.stopwords.empty()) r.table->set_stopwords(load_stopwords(p.stopwords));
  }
  if (!p.nouns.empty()) {
    r.nouns = load_noun_lexicon(p.nouns);
    r.tagger = std::make_unique<LexiconTagger>(*r.nouns);
  }
  if (!p.bank.empty()) {
    r.keywords.emplace();
    for (const auto& c : load_captions(p.bank)) r.keywords->add(c.image_id, c.caption);
  }
  return r;
}

std::vector<std::string> load_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// ---- build-index ----------------------------------------------------------------

struct BuildIndexArgs {
  std::string captions, synsets, vectors, stopwords, features, out;
  std::size_t shard_size = ImageKeyIndex::kDefaultShardSize;
};

int cmd_build_index(const BuildIndexArgs& a) {
  if (a.captions.empty() == a.synsets.empty()) {
    throw CLI::ValidationError("build-index", "exactly one of --captions or --synsets is required");
  }
  WordEmbeddingTable table = load_word_vectors(a.vectors);
  if (!a.stopwords.empty()) table.set_stopwords(load_stopwords(a.stopwords));
  const FeatureStore store = load_feature_store(a.features);
  std::vector<IndexEntry> entries;
  if (!a.captions.empty()) entries = caption_entries(load_captions(a.captions), table, store);
  else entries = synset_entries(load_synsets(a.synsets), table, store);
  if (entries.empty()) throw std::runtime_error("no entries");
  BuildReport report;
  const ImageKeyIndex index = build_index(entries, &report, a.shard_size);
  save_index(index, a.out);
  std::cout << "inserted " << report.inserted << " skipped_degenerate " << report.skipped_degenerate
            << '\n';
  return 0;
}

// ---- associate ------------------------------------------------------------------

struct AssociateArgs {
  ResourcePaths res;
  std::string strategy = "scene", input, out;
  std::size_t k = 16, kappa = 8, threads = 1;
  std::uint64_t seed = 0;
};

int cmd_associate(const AssociateArgs& a) {
  const AssocStrategy strategy = parse_assoc_strategy(a.strategy);
  Resources r = load_resources(a.res);
  if (!r.table) throw std::runtime_error("associate: --vectors is required");
  if (strategy != AssocStrategy::keyword_baseline && !r.index) {
    throw std::runtime_error("associate: --index is required for " + a.strategy);
  }
  if (strategy == AssocStrategy::object && !r.tagger) throw std::runtime_error("associate: --nouns is required for object");
  if (strategy == AssocStrategy::keyword_baseline && !r.keywords) {
    throw std::runtime_error("associate: --bank is required for keyword");
  }
  std::ofstream file;
  if (!a.out.empty()) file = open_out(a.out);
  std::ostream& out = a.out.empty() ? std::cout : file;

  std::size_t line_no = 0;
  for (const auto& line : load_lines(a.input)) {
    ++line_no;
    const auto tokens = tokenize(line);
    Association assoc;
    std::string reason;
    switch (strategy) {
      case AssocStrategy::scene:
        if (encode_cbow(tokens, *r.table).is_degenerate) reason = "no in-vocabulary tokens";
        else assoc = associate_scene(tokens, *r.index, *r.table, a.k, a.threads);
        break;
      case AssocStrategy::object: {
        assoc = associate_object(tokens, *r.index, *r.table, *r.tagger,
                                 ObjectAssocOptions{a.k, a.kappa, a.seed, a.threads});
        if (assoc.empty()) reason = "no in-vocabulary nouns";
        break;
      }
      case AssocStrategy::keyword_baseline: {
        bool content = false;
        for (const auto& t : tokens) content = content || !r.table->is_stopword(t);
        if (!content) reason = "no content tokens";
        else assoc = associate_keyword_baseline(tokens, *r.keywords, r.table->stopwords(), a.k);
        break;
      }
    }
    nlohmann::ordered_json j;
    j["line"] = line_no;
    j["strategy"] = to_string(strategy);
    auto items = nlohmann::ordered_json::array();
    for (const auto& it : assoc.items) {
      items.push_back({{"id", it.image_id}, {"rank", it.rank}, {"similarity", it.similarity}});
    }
    j["items"] = std::move(items);
    if (!reason.empty()) j["reason"] = reason;
    out << j.dump() << '\n';
  }
  return 0;
}

// ---- pretrain / eval-ppl ----------------------------------------------------------

struct ModelArgs {
  std::size_t d = 128, layers_text = 2, layers_cross = 2, heads = 4, d_ff = 0, max_len = 64;
  double mask_rate = 0.15, p_norm = 2.0, l1 = 1e-4;
  bool freeze_text = false;

  void add(CLI::App* app) {
    app->add_option("--d", d, "Cross-modal width")->capture_default_str();
    app->add_option("--layers-text", layers_text, "Text encoder layers")->capture_default_str();
    app->add_option("--layers-cross", layers_cross, "Cross-modal encoder layers")->capture_default_str();
    app->add_option("--heads", heads, "Attention heads")->capture_default_str();
    app->add_option("--d-ff", d_ff, "Feed-forward width (0 = 4*d)")->capture_default_str();
    app->add_option("--max-len", max_len, "Token sequence clip length")->capture_default_str();
    app->add_option("--mask-rate", mask_rate, "Token masking rate")->capture_default_str();
    app->add_option("--p-norm", p_norm, "Exponent of the region regression loss")->capture_default_str();
    app->add_option("--l1", l1, "L1 weight on the region head")->capture_default_str();
    app->add_flag("--freeze-text", freeze_text, "Keep text encoder weights fixed");
  }
};

struct PretrainArgs {
  ResourcePaths res;
  ModelArgs model;
  std::string strategy = "none", captions, text_only, eval_captions, eval_text, out, metrics,
              vocab_out, cache;
  std::size_t min_count = 2, batch_size = 32, epochs = 1, max_steps = 0, eval_every = 100,
              patience = 3, k = 16, kappa = 8, threads = 1;
  double lr = 1e-4, mix_ratio = 0.5, region_mask_rate = 0.15;
  std::uint64_t seed = 0;
};

std::vector<std::string> caption_texts(const std::vector<CaptionRecord>& caps) {
  std::vector<std::string> out;
  for (const auto& c : caps) out.push_back(c.caption);
  return out;
}

int cmd_pretrain(const PretrainArgs& a) {
  const Strategy strategy = parse_strategy(a.strategy);
  PretrainData data;
  if (!a.captions.empty()) data.paired = load_captions(a.captions);
  if (!a.text_only.empty()) data.text_only = load_lines(a.text_only);
  if (!a.eval_captions.empty()) data.eval_paired = load_captions(a.eval_captions);
  if (!a.eval_text.empty()) data.eval_text = load_lines(a.eval_text);
  Resources r = load_resources(a.res);
  const GroundingResources view = r.view();
  validate_strategy_inputs(strategy, data, view);

  std::vector<std::string> texts = caption_texts(data.paired);
  texts.insert(texts.end(), data.text_only.begin(), data.text_only.end());
  const Vocabulary vocab = Vocabulary::build(texts, a.min_count);

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.d = a.model.d;
  mc.n_layers_text = a.model.layers_text;
  mc.n_layers_cross = a.model.layers_cross;
  mc.n_heads = a.model.heads;
  mc.d_ff = a.model.d_ff;
  mc.max_len = a.model.max_len;
  mc.mask_rate = a.model.mask_rate;
  mc.p_norm = a.model.p_norm;
  mc.l1_coeff = a.model.l1;
  mc.freeze_text = a.model.freeze_text;
  mc.k_max = std::max<std::size_t>(a.k, 1);
  if (r.store) {
    mc.d_v = r.store->feat_dim();
    mc.n_regions = r.store->n_regions();
  } else {
    mc.d_v = 1;
  }

  TrainConfig tc;
  tc.batch_size = a.batch_size;
  tc.lr = a.lr;
  tc.max_epochs = a.epochs;
  tc.max_steps = a.max_steps;
  tc.seed = a.seed;
  tc.mix_ratio = a.mix_ratio;
  tc.eval_every = a.eval_every;
  tc.patience = a.patience;
  tc.region_mask_rate = a.region_mask_rate;
  tc.assoc = AssociationOptions{a.k, a.kappa, a.seed, a.threads};

  AssociationCache cache;
  if (!a.cache.empty() && std::filesystem::exists(a.cache)) cache = AssociationCache::load(a.cache);

  CrossModalModel model(mc, a.seed);
  const PretrainResult result = pretrain(strategy, data, vocab, view, model, tc, &cache);
  save_checkpoint(model, a.out);
  vocab.save(a.vocab_out.empty() ? a.out + ".vocab" : a.vocab_out);
  if (!a.metrics.empty()) write_metrics_csv(result.metrics, a.metrics);
  if (!a.cache.empty()) cache.save(a.cache);
  std::printf("steps %zu train_ppl %.6f", result.steps, result.final_train_ppl);
  if (result.final_eval_ppl) std::printf(" eval_ppl %.6f", *result.final_eval_ppl);
  std::printf("\n");
  return 0;
}

struct EvalArgs {
  ResourcePaths res;
  std::string checkpoint, vocab, strategy = "none", captions, text, out, corpus_name;
  std::size_t batch_size = 32, k = 16, kappa = 8, threads = 1;
  std::uint64_t seed = 0;
  bool placeholder = false;
};

int cmd_eval_ppl(const EvalArgs& a) {
  const Strategy strategy = parse_strategy(a.strategy);
  CrossModalModel model = load_checkpoint(a.checkpoint);
  const Vocabulary vocab = Vocabulary::load(a.vocab.empty() ? a.checkpoint + ".vocab" : a.vocab);
  std::vector<CaptionRecord> paired;
  std::vector<std::string> text;
  if (!a.captions.empty()) paired = load_captions(a.captions);
  if (!a.text.empty()) text = load_lines(a.text);
  if (paired.empty() && text.empty()) throw std::runtime_error("eval-ppl: empty evaluation corpus");
  Resources r = load_resources(a.res);
  const GroundingResources view = r.view();
  const VisualMode mode = a.placeholder ? VisualMode::placeholder : VisualMode::strategy;
  if (mode == VisualMode::strategy) {
    PretrainData check;
    check.paired = paired;
    check.text_only = text;
    if (!is_transferred(strategy) || !paired.empty()) validate_strategy_inputs(strategy, check, view);
  }
  const auto stream = build_eval_stream(strategy, paired, text, vocab, model.config(), view,
                                        AssociationOptions{a.k, a.kappa, a.seed, a.threads},
                                        a.batch_size, a.seed, mode);
  const PerplexityResult p = perplexity(model, stream);
  std::string corpus = a.corpus_name;
  if (corpus.empty()) corpus = !a.captions.empty() ? a.captions : a.text;
  char line[512];
  std::snprintf(line, sizeof(line), "%s\t%s\t%.6f\n", to_string(strategy), corpus.c_str(), p.perplexity);
  std::cout << line;
  if (!a.out.empty()) open_out(a.out) << line;
  return 0;
}

// ---- finetune -------------------------------------------------------------------

struct FinetuneArgs {
  ResourcePaths res;
  std::string checkpoint, vocab, strategy = "none", train_task, test_task, out;
  std::size_t runs = 8, epochs = 4, batch_size = 32, k = 16, kappa = 8, threads = 1;
  double lr = 1e-4;
  bool keep_frozen = false;
  std::uint64_t seed = 0;
};

int cmd_finetune(const FinetuneArgs& a) {
  const Strategy strategy = parse_strategy(a.strategy);
  const CrossModalModel model = load_checkpoint(a.checkpoint);
  const Vocabulary vocab = Vocabulary::load(a.vocab.empty() ? a.checkpoint + ".vocab" : a.vocab);
  const TaskFile train = load_task(a.train_task);
  TaskFile test = load_task(a.test_task);
  align_labels(train, test);
  Resources r = load_resources(a.res);
  const GroundingResources view = r.view();
  if (is_associative(strategy)) {
    PretrainData check;
    check.text_only = {"x"};
    validate_strategy_inputs(strategy, check, view);
  }
  FinetuneConfig fc;
  fc.runs = a.runs;
  fc.base_seed = a.seed;
  fc.epochs = a.epochs;
  fc.batch_size = a.batch_size;
  fc.lr = a.lr;
  fc.unfreeze_text = !a.keep_frozen;
  fc.parallel_runs = a.threads;
  fc.assoc = AssociationOptions{a.k, a.kappa, a.seed, 1};
  const TaskReport report = finetune(model, vocab, train, test, strategy, view, fc);
  const std::string json = report.to_json();
  if (!a.out.empty()) open_out(a.out) << json;
  std::cout << json;
  return report.median ? 0 : 1;
}

// ---- make-toy-data ----------------------------------------------------------------

struct ToyArgs {
  ToySpec spec;
  std::string out;
};

int cmd_make_toy_data(const ToyArgs& a) {
  write_toy_corpus(generate_toy_corpus(a.spec), a.out);
  std::cout << "wrote toy corpus to " << a.out << '\n';
  return 0;
}

void add_threads(CLI::App* app, std::size_t& threads) {
  app->add_option("--threads", threads, "Worker threads (falls back to GLM_THREADS)")
      ->envname("GLM_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visually grounded masked language model toolkit"};
  app.set_config("--config", "", "INI/TOML file with one [subcommand] section of option=value keys");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();

  BuildIndexArgs bi;
  auto* build = app.add_subcommand("build-index", "Build an image key index from captions or synsets");
  build->add_option("--captions", bi.captions, "Caption TSV: image_id<TAB>caption")->check(CLI::ExistingFile);
  build->add_option("--synsets", bi.synsets, "Synset TSV: id<TAB>lemmas<TAB>definition<TAB>image_ids")
      ->check(CLI::ExistingFile);
  build->add_option("--vectors", bi.vectors, "Word vectors")->required()->check(CLI::ExistingFile);
  build->add_option("--stopwords", bi.stopwords, "Stopword list")->check(CLI::ExistingFile);
  build->add_option("--features", bi.features, "Feature store (VFTR)")->required()->check(CLI::ExistingFile);
  build->add_option("--out", bi.out, "Output index (VIDX)")->required();
  build->add_option("--shard-size", bi.shard_size, "Keys per search shard")->capture_default_str();

  AssociateArgs as;
  auto* assoc = app.add_subcommand("associate", "Retrieve K images for each input line (JSON lines)");
  as.res.add(assoc);
  assoc->add_option("--strategy", as.strategy, "scene|object|keyword")->capture_default_str();
  assoc->add_option("--input", as.input, "Text file, one query per line")->required()->check(CLI::ExistingFile);
  assoc->add_option("--out", as.out, "Output JSONL (stdout when omitted)");
  assoc->add_option("-k,--k", as.k, "Images per text")->capture_default_str();
  assoc->add_option("--kappa", as.kappa, "Mixture components for object association")->capture_default_str();
  assoc->add_option("--seed", as.seed, "Random seed")->capture_default_str();
  add_threads(assoc, as.threads);

  PretrainArgs pt;
  auto* pre = app.add_subcommand("pretrain", "Pretrain a model with one grounding strategy");
  pt.res.add(pre);
  pt.model.add(pre);
  pre->add_option("--strategy", pt.strategy, "none|i2t|t2i|both|scene|object|keyword")->capture_default_str();
  pre->add_option("--captions", pt.captions, "Caption-paired training TSV")->check(CLI::ExistingFile);
  pre->add_option("--text-only", pt.text_only, "Text-only training corpus, one example per line")
      ->check(CLI::ExistingFile);
  pre->add_option("--eval-captions", pt.eval_captions, "Held-out caption TSV")->check(CLI::ExistingFile);
  pre->add_option("--eval-text", pt.eval_text, "Held-out text-only corpus")->check(CLI::ExistingFile);
  pre->add_option("--out", pt.out, "Output checkpoint")->required();
  pre->add_option("--vocab-out", pt.vocab_out, "Output vocabulary (default <out>.vocab)");
  pre->add_option("--metrics", pt.metrics, "Metrics CSV (step,split,metric,value)");
  pre->add_option("--cache", pt.cache, "Association cache file (read if present, then rewritten)");
  pre->add_option("--min-count", pt.min_count, "Minimum word count for the vocabulary")->capture_default_str();
  pre->add_option("--batch-size", pt.batch_size, "Examples per step")->capture_default_str();
  pre->add_option("--lr", pt.lr, "Adam learning rate")->capture_default_str();
  pre->add_option("--epochs", pt.epochs, "Passes over the training data")->capture_default_str();
  pre->add_option("--max-steps", pt.max_steps, "Step budget (0 = use --epochs)")->capture_default_str();
  pre->add_option("--mix-ratio", pt.mix_ratio, "Share of caption-paired draws")->capture_default_str();
  pre->add_option("--eval-every", pt.eval_every, "Steps between evaluations")->capture_default_str();
  pre->add_option("--patience", pt.patience, "Evaluations without improvement before stopping (0 = off)")
      ->capture_default_str();
  pre->add_option("--region-mask-rate", pt.region_mask_rate, "Region masking rate")->capture_default_str();
  pre->add_option("-k,--k", pt.k, "Images per text")->capture_default_str();
  pre->add_option("--kappa", pt.kappa, "Mixture components for object association")->capture_default_str();
  pre->add_option("--seed", pt.seed, "Random seed")->capture_default_str();
  add_threads(pre, pt.threads);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval-ppl", "Masked-token perplexity of a checkpoint");
  ev.res.add(eval);
  eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--vocab", ev.vocab, "Vocabulary (default <checkpoint>.vocab)");
  eval->add_option("--strategy", ev.strategy, "none|i2t|t2i|both|scene|object|keyword")->capture_default_str();
  eval->add_option("--captions", ev.captions, "Caption-paired evaluation TSV")->check(CLI::ExistingFile);
  eval->add_option("--text", ev.text, "Text-only evaluation corpus")->check(CLI::ExistingFile);
  eval->add_option("--corpus-name", ev.corpus_name, "Label printed for the corpus column");
  eval->add_flag("--placeholder", ev.placeholder, "Replace all visual input by the placeholder");
  eval->add_option("--out", ev.out, "Also write the result line here");
  eval->add_option("--batch-size", ev.batch_size, "Examples per batch")->capture_default_str();
  eval->add_option("-k,--k", ev.k, "Images per text")->capture_default_str();
  eval->add_option("--kappa", ev.kappa, "Mixture components for object association")->capture_default_str();
  eval->add_option("--seed", ev.seed, "Masking seed")->capture_default_str();
  add_threads(eval, ev.threads);

  FinetuneArgs ft;
  auto* fine = app.add_subcommand("finetune", "Fine-tune on a text task over several seeded runs");
  ft.res.add(fine);
  fine->add_option("--checkpoint", ft.checkpoint, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  fine->add_option("--vocab", ft.vocab, "Vocabulary (default <checkpoint>.vocab)");
  fine->add_option("--strategy", ft.strategy, "Strategy the checkpoint was pretrained with")->capture_default_str();
  fine->add_option("--train-task", ft.train_task, "Training task TSV")->required()->check(CLI::ExistingFile);
  fine->add_option("--test-task", ft.test_task, "Test task TSV")->required()->check(CLI::ExistingFile);
  fine->add_option("--out", ft.out, "Report JSON");
  fine->add_option("--runs", ft.runs, "Independent runs")->capture_default_str();
  fine->add_option("--epochs", ft.epochs, "Epochs per run")->capture_default_str();
  fine->add_option("--batch-size", ft.batch_size, "Examples per step")->capture_default_str();
  fine->add_option("--lr", ft.lr, "Adam learning rate")->capture_default_str();
  fine->add_flag("--keep-frozen", ft.keep_frozen, "Do not unfreeze the text encoder");
  fine->add_option("-k,--k", ft.k, "Images per text")->capture_default_str();
  fine->add_option("--kappa", ft.kappa, "Mixture components for object association")->capture_default_str();
  fine->add_option("--seed", ft.seed, "Base seed; run i uses seed+i")->capture_default_str();
  add_threads(fine, ft.threads);

  ToyArgs ty;
  auto* toy = app.add_subcommand("make-toy-data", "Write the synthetic grounded corpus");
  toy->add_option("--out", ty.out, "Output directory")->required();
  toy->add_option("--vocab-size", ty.spec.vocab_size, "Concept words + fillers")->capture_default_str();
  toy->add_option("--concepts", ty.spec.n_concepts, "Concept count")->capture_default_str();
  toy->add_option("--examples", ty.spec.n_examples, "Caption-paired examples")->capture_default_str();
  toy->add_option("--text-only", ty.spec.n_text_only, "Text-only examples")->capture_default_str();
  toy->add_option("--eval-fraction", ty.spec.eval_fraction, "Held-out share of paired examples")
      ->capture_default_str();
  toy->add_option("--d-w", ty.spec.d_w, "Word vector dimension")->capture_default_str();
  toy->add_option("--d-v", ty.spec.d_v, "Region feature dimension")->capture_default_str();
  toy->add_option("--regions", ty.spec.n_regions, "Regions per image")->capture_default_str();
  toy->add_option("--grounding-strength", ty.spec.grounding_strength,
                  "Probability an image carries its concept prototype")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  toy->add_option("--image-noise", ty.spec.image_noise, "Per-coordinate image noise")->capture_default_str();
  toy->add_option("--word-noise", ty.spec.word_noise, "Word vector spread within a concept")
      ->capture_default_str();
  toy->add_option("--pair-train", ty.spec.pair_train_examples, "Pair-task training examples")
      ->capture_default_str();
  toy->add_option("--pair-test", ty.spec.pair_test_examples, "Pair-task test examples")
      ->capture_default_str();
  toy->add_option("--seed", ty.spec.seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*build) return cmd_build_index(bi);
    if (*assoc) return cmd_associate(as);
    if (*pre) return cmd_pretrain(pt);
    if (*eval) return cmd_eval_ppl(ev);
    if (*fine) return cmd_finetune(ft);
    if (*toy) return cmd_make_toy_data(ty);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
