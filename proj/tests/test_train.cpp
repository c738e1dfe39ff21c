#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "groundlm/toydata.hpp"
#include "groundlm/train.hpp"
#include "support.hpp"

using namespace glm;

namespace {

ToySpec small_spec() {
  ToySpec s;
  s.vocab_size = 40;
  s.n_concepts = 10;
  s.n_examples = 160;
  s.n_text_only = 40;
  s.d_w = 8;
  s.d_v = 8;
  s.pair_train_examples = 20;
  s.pair_test_examples = 20;
  s.seed = 5;
  return s;
}

struct Fixture {
  ToyCorpus corpus = generate_toy_corpus(small_spec());
  Vocabulary vocab;
  ImageKeyIndex index;
  GroundingResources res;
  PretrainData data;

  Fixture() {
    std::vector<std::string> texts;
    for (const auto& c : corpus.train) texts.push_back(c.caption);
    texts.insert(texts.end(), corpus.text_only.begin(), corpus.text_only.end());
    vocab = Vocabulary::build(texts);
    index = build_index(caption_entries(corpus.train, corpus.vectors, corpus.store));
    res.store = &corpus.store;
    res.index = &index;
    res.table = &corpus.vectors;
    data.paired = corpus.train;
    data.text_only = corpus.text_only;
    data.eval_paired = corpus.eval;
  }

  ModelConfig model_config() const {
    ModelConfig c;
    c.vocab_size = vocab.size();
    c.d = 16;
    c.d_v = corpus.spec.d_v;
    c.n_layers_text = 1;
    c.n_layers_cross = 1;
    c.n_heads = 2;
    c.max_len = 16;
    c.k_max = 4;
    return c;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.batch_size = 16;
    t.lr = 3e-3;
    t.max_steps = 12;
    t.eval_every = 4;
    t.patience = 0;
    t.seed = 2;
    t.train_probe_examples = 32;
    t.assoc.k = 4;
    return t;
  }
};

}  // namespace

TEST_CASE("strategy names") {
  for (const char* n : {"none", "i2t", "t2i", "both", "scene", "object", "keyword"}) {
    CHECK(std::string(to_string(parse_strategy(n))) == n);
  }
  CHECK_THROWS_AS(parse_strategy("synthesis"), std::invalid_argument);
  CHECK(is_transferred(Strategy::transferred_both));
  CHECK_FALSE(is_transferred(Strategy::associative_scene));
  CHECK(is_associative(Strategy::associative_keyword));
}

TEST_CASE("mix_corpora") {
  SUBCASE("ratio extremes") {
    for (const auto& it : mix_corpora(5, 7, 1.0, 1, 100)) CHECK(it.paired);
    for (const auto& it : mix_corpora(5, 7, 0.0, 1, 100)) CHECK_FALSE(it.paired);
  }
  SUBCASE("ratio 0.5 over 10^4 draws") {
    const auto s = mix_corpora(300, 200, 0.5, 3, 10000);
    const auto paired = std::count_if(s.begin(), s.end(), [](const StreamItem& i) { return i.paired; });
    CHECK(std::abs(double(paired) / 10000 - 0.5) <= 0.02);
  }
  SUBCASE("each pass visits every item once") {
    const auto s = mix_corpora(10, 0, 1.0, 4, 30);
    for (int pass = 0; pass < 3; ++pass) {
      std::vector<std::size_t> idx;
      for (int i = 0; i < 10; ++i) idx.push_back(s[pass * 10 + i].index);
      std::sort(idx.begin(), idx.end());
      std::vector<std::size_t> want(10);
      std::iota(want.begin(), want.end(), std::size_t{0});
      CHECK(idx == want);
    }
  }
  CHECK(mix_corpora(10, 10, 0.5, 9, 50) == mix_corpora(10, 10, 0.5, 9, 50));
  CHECK_THROWS_AS(mix_corpora(0, 5, 0.5, 0, 10), std::invalid_argument);
  CHECK_THROWS_AS(mix_corpora(5, 0, 0.5, 0, 10), std::invalid_argument);
  CHECK_THROWS_AS(mix_corpora(5, 5, 1.5, 0, 10), std::invalid_argument);
}

TEST_CASE("association cache") {
  Fixture f;
  const AssociationOptions o{4, 2, 0, 1};
  const std::vector<std::string> a = {"x", "y"}, b = {"xy"};
  CHECK(AssociationCache::key(Strategy::associative_scene, o, a) !=
        AssociationCache::key(Strategy::associative_scene, o, b));
  CHECK(AssociationCache::key(Strategy::associative_scene, o, a) !=
        AssociationCache::key(Strategy::associative_object, o, a));
  AssociationOptions o2 = o;
  o2.k = 5;
  CHECK(AssociationCache::key(Strategy::associative_scene, o, a) !=
        AssociationCache::key(Strategy::associative_scene, o2, a));

  AssociationCache cache;
  Associator assoc(Strategy::associative_scene, f.res, o, &cache);
  const auto toks = tokenize(f.corpus.train[0].caption);
  const Association first = assoc.associate(toks);
  REQUIRE(first.items.size() == 4);
  CHECK(first.items[0].features.size() == f.corpus.spec.d_v);
  CHECK(cache.size() == 1);
  const Association second = assoc.associate(toks);
  CHECK(cache.hits() == 1);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(second.items[i].image_id == first.items[i].image_id);
    CHECK(second.items[i].features == first.items[i].features);
  }

  glm::test::TempDir dir("cache");
  cache.save(dir / "c.bin");
  AssociationCache back = AssociationCache::load(dir / "c.bin");
  CHECK(back.size() == 1);
  const auto* hit = back.find(AssociationCache::key(Strategy::associative_scene, o, toks));
  REQUIRE(hit != nullptr);
  CHECK(hit->items[2].image_id == first.items[2].image_id);
  CHECK(hit->items[2].similarity == first.items[2].similarity);
  back.save(dir / "d.bin");
  CHECK(glm::test::slurp(dir / "c.bin") == glm::test::slurp(dir / "d.bin"));
}

TEST_CASE("example encoding by strategy") {
  Fixture f;
  const ModelConfig mc = f.model_config();
  const CaptionRecord& rec = f.corpus.train[0];
  TextItem paired;
  paired.words = tokenize(rec.caption);
  paired.image_id = &rec.image_id;
  TextItem text_only;
  text_only.words = tokenize(f.corpus.text_only[0]);
  std::mt19937_64 rng(1);
  const AssociationOptions o{4, 2, 0, 1};

  SUBCASE("i2t uses the paired image and the placeholder otherwise") {
    ExampleEncoder enc(Strategy::transferred_i2t, f.vocab, mc, f.res, o);
    const auto e = enc.encode(paired, rng, true, 0.0, VisualMode::strategy);
    CHECK_FALSE(e.visual.placeholder);
    CHECK(e.visual.rows(mc.d_v) == 1);
    CHECK(enc.encode(text_only, rng, true, 0.0, VisualMode::strategy).visual.placeholder);
  }
  SUBCASE("placeholder mode never reads the store") {
    ExampleEncoder enc(Strategy::transferred_both, f.vocab, mc, f.res, o);
    const auto reads = f.corpus.store.read_count();
    const auto e = enc.encode(paired, rng, true, 0.15, VisualMode::placeholder);
    CHECK(e.visual.placeholder);
    CHECK(f.corpus.store.read_count() == reads);
  }
  SUBCASE("scene retrieves K images ranked 0..K-1") {
    ExampleEncoder enc(Strategy::associative_scene, f.vocab, mc, f.res, o);
    const auto e = enc.encode(text_only, rng, true, 0.0, VisualMode::strategy);
    CHECK(e.visual.ranks == std::vector<std::int32_t>{0, 1, 2, 3});
  }
  SUBCASE("no masking when asked") {
    ExampleEncoder enc(Strategy::no_grounding, f.vocab, mc, f.res, o);
    const auto e = enc.encode(paired, rng, false, 0.0, VisualMode::strategy);
    CHECK(e.text.input == e.text.original);
    CHECK(e.visual.placeholder);
  }
  SUBCASE("K above K_max is rejected") {
    CHECK_THROWS_AS(ExampleEncoder(Strategy::associative_scene, f.vocab, mc, f.res, {8, 2, 0, 1}),
                    std::invalid_argument);
  }
}

TEST_CASE("associative queries use only surviving words") {
  Fixture f;
  const ModelConfig mc = f.model_config();
  AssociationCache cache;
  const AssociationOptions o{4, 2, 0, 1};
  ExampleEncoder enc(Strategy::associative_scene, f.vocab, mc, f.res, o, &cache);
  TextItem item;
  item.words = tokenize(f.corpus.text_only[1]);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto e = enc.encode(item, rng, true, 0.0, VisualMode::strategy);
    std::vector<std::string> surviving;
    for (std::size_t j = 1; j < e.text.input.size(); ++j) {
      if (e.text.input[j] == e.text.original[j]) surviving.push_back(item.words[j - 1]);
    }
    CHECK(cache.find(AssociationCache::key(Strategy::associative_scene, o, surviving)) != nullptr);
  }
}

TEST_CASE("strategy input validation") {
  Fixture f;
  PretrainData text_only;
  text_only.text_only = f.corpus.text_only;
  CHECK_THROWS_AS(validate_strategy_inputs(Strategy::transferred_i2t, text_only, f.res),
                  std::invalid_argument);
  GroundingResources bare;
  CHECK_THROWS_AS(validate_strategy_inputs(Strategy::associative_scene, f.data, bare),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_strategy_inputs(Strategy::associative_keyword, f.data, f.res),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_strategy_inputs(Strategy::associative_object, f.data, f.res),
                  std::invalid_argument);
  PretrainData missing = f.data;
  missing.paired.push_back({"no-such-image", "filler001 concept000"});
  CHECK_THROWS_WITH(validate_strategy_inputs(Strategy::transferred_both, missing, f.res),
                    doctest::Contains("no-such-image"));
  validate_strategy_inputs(Strategy::no_grounding, text_only, GroundingResources{});
}

TEST_CASE("pretraining is deterministic, with or without prefetch") {
  Fixture f;
  TrainConfig t = f.train_config();
  CrossModalModel a(f.model_config(), 1), b(f.model_config(), 1);
  const auto ra = pretrain(Strategy::transferred_i2t, f.data, f.vocab, f.res, a, t);
  t.prefetch = false;
  const auto rb = pretrain(Strategy::transferred_i2t, f.data, f.vocab, f.res, b, t);
  CHECK(ra.metrics == rb.metrics);
  CHECK(ra.steps == 12);
  CHECK(ra.paired_examples + ra.text_examples == 12 * 16);
  CHECK(a.param("cross.0.w1").value == b.param("cross.0.w1").value);
}

TEST_CASE("t2i trains no token head and skips text-only examples") {
  Fixture f;
  CrossModalModel m(f.model_config(), 2);
  const Tensor head = m.param("jmlm_w").value;
  const Tensor proj = m.param("jmrm_w").value;
  const auto r = pretrain(Strategy::transferred_t2i, f.data, f.vocab, f.res, m, f.train_config());
  CHECK(m.param("jmlm_w").value == head);
  CHECK(m.param("jmrm_w").value != proj);
  CHECK(r.text_examples == 0);
  CHECK(r.skipped_examples > 0);
}

TEST_CASE("placeholder is trained only by transferred strategies") {
  Fixture f;
  CrossModalModel none(f.model_config(), 3), both(f.model_config(), 3);
  const Tensor ph = none.param("placeholder").value;
  pretrain(Strategy::no_grounding, f.data, f.vocab, f.res, none, f.train_config());
  pretrain(Strategy::transferred_both, f.data, f.vocab, f.res, both, f.train_config());
  CHECK(none.param("placeholder").value == ph);
  CHECK(both.param("placeholder").value != ph);
}

TEST_CASE("a frozen text encoder survives pretraining unchanged") {
  Fixture f;
  ModelConfig mc = f.model_config();
  mc.freeze_text = true;
  CrossModalModel m(mc, 4);
  std::vector<Tensor> before;
  for (Parameter* p : m.text_encoder_parameters()) before.push_back(p->value);
  pretrain(Strategy::associative_scene, f.data, f.vocab, f.res, m, f.train_config());
  const auto after = m.text_encoder_parameters();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i]->value == before[i]);
}

TEST_CASE("training lowers the training perplexity") {
  Fixture f;
  CrossModalModel m(f.model_config(), 5);
  TrainConfig t = f.train_config();
  t.max_steps = 60;
  t.eval_every = 20;
  const auto r = pretrain(Strategy::no_grounding, f.data, f.vocab, f.res, m, t);
  CHECK(r.final_train_ppl < r.initial_train_ppl);
  REQUIRE(r.final_eval_ppl);
}

TEST_CASE("early stopping with patience") {
  Fixture f;
  CrossModalModel m(f.model_config(), 6);
  TrainConfig t = f.train_config();
  t.lr = 5.0;  // diverging steps make the held-out perplexity worse
  t.max_steps = 40;
  t.eval_every = 1;
  t.patience = 2;
  PretrainResult r;
  try {
    r = pretrain(Strategy::no_grounding, f.data, f.vocab, f.res, m, t);
  } catch (const std::domain_error&) {
    return;  // non-finite values abort the run, also acceptable
  }
  CHECK(r.stopped_early);
  CHECK(r.steps < 40);
}

TEST_CASE("vocabulary size must match the model") {
  Fixture f;
  ModelConfig mc = f.model_config();
  mc.vocab_size += 1;
  CrossModalModel m(mc, 7);
  CHECK_THROWS_AS(pretrain(Strategy::no_grounding, f.data, f.vocab, f.res, m, f.train_config()),
                  std::invalid_argument);
}

TEST_CASE("metrics csv") {
  glm::test::TempDir dir("metrics");
  const std::vector<MetricRow> rows = {{0, "train", "perplexity", 12.5}, {4, "eval", "perplexity", 3.25}};
  write_metrics_csv(rows, dir / "m.csv");
  CHECK(glm::test::slurp(dir / "m.csv") ==
        "step,split,metric,value\n0,train,perplexity,12.5\n4,eval,perplexity,3.25\n");
}

TEST_CASE("eval stream never masks regions and is reproducible") {
  Fixture f;
  const ModelConfig mc = f.model_config();
  const AssociationOptions o{4, 2, 0, 1};
  const auto s1 = build_eval_stream(Strategy::transferred_both, f.corpus.eval, {}, f.vocab, mc, f.res,
                                    o, 8, 11, VisualMode::strategy);
  const auto s2 = build_eval_stream(Strategy::transferred_both, f.corpus.eval, {}, f.vocab, mc, f.res,
                                    o, 8, 11, VisualMode::strategy);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].masked_regions() == 0);
    CHECK(s1[i].token_ids == s2[i].token_ids);
    CHECK(s1[i].token_mask == s2[i].token_mask);
  }
}
