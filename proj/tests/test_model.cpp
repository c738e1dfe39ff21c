#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "groundlm/model.hpp"
#include "groundlm/optim.hpp"
#include "groundlm/vocab.hpp"
#include "micro.hpp"
#include "support.hpp"

using namespace glm;

namespace {

EncodedExample text_example(std::vector<std::int32_t> ids, std::vector<std::uint8_t> flags) {
  EncodedExample e;
  e.text.original = ids;
  e.text.input = ids;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (flags[i]) e.text.input[i] = Vocabulary::kMask;
  e.text.flags = std::move(flags);
  return e;
}

std::vector<std::vector<float>> images(std::size_t n, std::size_t d_v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<std::vector<float>> out(n, std::vector<float>(d_v));
  for (auto& img : out)
    for (auto& x : img) x = g(rng);
  return out;
}

}  // namespace

TEST_CASE("model config validation and serialization") {
  ModelConfig c = glm::test::micro_config();
  c.validate();
  const ModelConfig back = ModelConfig::deserialize(c.serialize());
  CHECK(back.serialize() == c.serialize());
  CHECK_THROWS_WITH(ModelConfig::deserialize("colour=blue\n"), doctest::Contains("colour"));
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  ModelConfig tiny = glm::test::micro_config();
  tiny.vocab_size = 5;
  CHECK_THROWS_AS(tiny.validate(), std::invalid_argument);
}

TEST_CASE("mask_tokens") {
  const std::vector<std::int32_t> ids = {1, 5, 6, 4, 7, 8, 0, 0};
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = mask_tokens(ids, 0.15, rng, 20);
    CHECK(m.original == ids);
    CHECK(std::count(m.flags.begin(), m.flags.end(), 1) >= 1);
    for (std::size_t i : {0u, 3u, 6u, 7u}) {
      CHECK(m.flags[i] == 0);
      CHECK(m.input[i] == ids[i]);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!m.flags[i]) CHECK(m.input[i] == ids[i]);
      else CHECK(m.input[i] >= Vocabulary::kMask);
    }
  }
  SUBCASE("rate 1 selects every eligible position") {
    const auto m = mask_tokens(ids, 1.0, rng, 20);
    CHECK(m.flags == std::vector<std::uint8_t>{0, 1, 1, 0, 1, 1, 0, 0});
  }
  SUBCASE("fixed seed is reproducible") {
    std::mt19937_64 a(7), b(7);
    const auto ma = mask_tokens(ids, 0.3, a, 20), mb = mask_tokens(ids, 0.3, b, 20);
    CHECK(ma.input == mb.input);
    CHECK(ma.flags == mb.flags);
  }
  SUBCASE("nothing eligible") {
    const std::vector<std::int32_t> specials = {1, 4, 0};
    const auto m = mask_tokens(specials, 0.5, rng, 20);
    CHECK(std::count(m.flags.begin(), m.flags.end(), 1) == 0);
  }
  CHECK_THROWS_AS(mask_tokens(ids, 0.0, rng, 20), std::invalid_argument);
  CHECK_THROWS_AS(mask_tokens(ids, 1.5, rng, 20), std::invalid_argument);
  CHECK_THROWS_AS(mask_tokens({}, 0.2, rng, 20), std::invalid_argument);
}

TEST_CASE("mask_regions") {
  const auto imgs = images(3, 4, 2);
  std::mt19937_64 rng(3);
  SUBCASE("rate 0 flags nothing") {
    auto v = VisualInput::from_images(imgs, 1, 4);
    mask_regions(v, 4, 0.0, rng);
    CHECK(std::count(v.region_mask.begin(), v.region_mask.end(), 1) == 0);
    CHECK(v.regions == v.original_regions);
  }
  SUBCASE("forced selection zeroes the input and keeps the target") {
    auto v = VisualInput::from_images(std::span(imgs).first(1), 1, 4);
    mask_regions(v, 4, 1.0, rng);
    CHECK(v.region_mask == std::vector<std::uint8_t>{1});
    CHECK(v.regions == std::vector<float>(4, 0.0f));
    CHECK(v.original_regions == imgs[0]);
  }
  SUBCASE("placeholder is a no-op") {
    auto v = VisualInput::none();
    mask_regions(v, 4, 1.0, rng);
    CHECK(v.placeholder);
    CHECK(v.region_mask.empty());
  }
  SUBCASE("ranks follow image order, one per region") {
    std::vector<std::vector<float>> two_region = {std::vector<float>(8, 1.0f), std::vector<float>(8, 2.0f)};
    const auto v = VisualInput::from_images(two_region, 2, 4);
    CHECK(v.ranks == std::vector<std::int32_t>{0, 0, 1, 1});
    CHECK(v.rows(4) == 4);
  }
  auto v = VisualInput::from_images(imgs, 1, 4);
  CHECK_THROWS_AS(mask_regions(v, 4, -0.1, rng), std::invalid_argument);
  CHECK_THROWS_AS(VisualInput::from_images(imgs, 2, 4), std::invalid_argument);
}

TEST_CASE("collate pads text and slots") {
  EncodedExample a = text_example({1, 5, 6}, {0, 1, 0});
  const auto imgs = images(2, 4, 4);
  a.visual = VisualInput::from_images(imgs, 1, 4);
  EncodedExample b = text_example({1, 7}, {0, 1});
  const EncodedExample both[] = {a, b};
  const MaskedBatch m = collate(both, 4);
  CHECK(m.batch == 2);
  CHECK(m.text_len == 3);
  CHECK(m.slots == 2);
  CHECK(m.text_valid == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0});
  CHECK(m.token_ids[5] == Vocabulary::kPad);
  CHECK(m.slot_kind == std::vector<SlotKind>{SlotKind::region, SlotKind::region,
                                             SlotKind::placeholder, SlotKind::pad});
  CHECK(m.rank_ids == std::vector<std::int32_t>{0, 1, 0, 0});
  CHECK(m.masked_tokens() == 2);
  CHECK(m.masked_regions() == 0);
  CHECK(m.regions.size() == 2 * 2 * 4);
  CHECK(std::all_of(m.regions.begin() + 8, m.regions.end(), [](float x) { return x == 0; }));
}

TEST_CASE("forward shapes and input errors") {
  CrossModalModel model(glm::test::micro_config(), 1);
  const MaskedBatch b = glm::test::micro_batch(model.config());
  Graph g(false);
  const ForwardOutput out = model.forward(g, b);
  CHECK(out.token_logits.shape() == Shape{2 * 5, 11});
  CHECK(out.region_preds.shape() == Shape{2 * 2, 4});
  CHECK(out.cls.shape() == Shape{2, 8});

  SUBCASE("too long") {
    const EncodedExample e = text_example(std::vector<std::int32_t>(9, 5), std::vector<std::uint8_t>(9, 0));
    CHECK_THROWS_WITH(model.forward(g, collate(std::span(&e, 1), 4)), doctest::Contains("max_len"));
  }
  SUBCASE("too many slots") {
    EncodedExample e = text_example({1, 5}, {0, 1});
    const auto imgs = images(3, 4, 5);
    e.visual = VisualInput::from_images(imgs, 1, 4);
    CHECK_THROWS_AS(model.forward(g, collate(std::span(&e, 1), 4)), std::invalid_argument);
  }
  SUBCASE("token outside vocabulary") {
    const EncodedExample e = text_example({1, 50}, {0, 0});
    CHECK_THROWS_AS(model.forward(g, collate(std::span(&e, 1), 4)), std::invalid_argument);
  }
  SUBCASE("feature width mismatch") {
    EncodedExample e = text_example({1, 5}, {0, 1});
    const auto imgs = images(1, 6, 5);
    e.visual = VisualInput::from_images(imgs, 1, 6);
    CHECK_THROWS_AS(model.forward(g, collate(std::span(&e, 1), 6)), std::invalid_argument);
  }
}

TEST_CASE("padding slots and padded text do not leak into an example's outputs") {
  CrossModalModel model(glm::test::micro_config(), 2);
  EncodedExample a = text_example({1, 5, 6}, {0, 1, 0});
  EncodedExample b = text_example({1, 7, 8, 9, 10}, {0, 1, 0, 0, 1});
  const auto imgs = images(2, 4, 6);
  b.visual = VisualInput::from_images(imgs, 1, 4);
  Graph g1(false), g2(false);
  const auto alone = model.forward(g1, collate(std::span(&a, 1), 4));
  const EncodedExample both[] = {a, b};
  const auto joint = model.forward(g2, collate(both, 4));
  const Tensor& la = alone.token_logits.value();
  const Tensor& lj = joint.token_logits.value();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 11; ++c) CHECK(lj.at(r, c) == doctest::Approx(la.at(r, c)).epsilon(1e-4));
}

TEST_CASE("jmlm loss") {
  SUBCASE("uniform logits give ln V") {
    Graph g(false);
    Var logits = g.constant(Tensor({4, 100}, Real(1)));
    const std::vector<std::int32_t> orig = {7, 8, 9, 10};
    const std::vector<std::uint8_t> mask = {1, 0, 1, 1};
    CHECK(jmlm_loss(logits, orig, mask).value().item() == doctest::Approx(std::log(100.0)));
  }
  SUBCASE("hand-built two-token vocab-3 case") {
    Graph g(false);
    Var logits = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 0, 0, std::log(2.0f)}));
    const std::vector<std::int32_t> orig = {0, 2};
    const std::vector<std::uint8_t> mask = {1, 1};
    const double l0 = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
    const double l1 = -std::log(2.0 / 4.0);
    CHECK(jmlm_loss(logits, orig, mask).value().item() == doctest::Approx((l0 + l1) / 2));
  }
  SUBCASE("large-margin correct logits give near zero") {
    Graph g(false);
    Var logits = g.constant(Tensor::matrix(1, 3, {0, 40, 0}));
    const std::vector<std::int32_t> orig = {1};
    const std::vector<std::uint8_t> mask = {1};
    CHECK(jmlm_loss(logits, orig, mask).value().item() < 1e-12);
  }
  SUBCASE("unmasked rows neither change the loss nor get gradient") {
    std::mt19937_64 rng(1);
    Parameter p{"logits", glm::test::random_tensor({3, 5}, rng), Tensor(), true};
    const std::vector<std::int32_t> orig = {1, 2, 3};
    const std::vector<std::uint8_t> mask = {0, 1, 0};
    Graph g;
    Var loss = jmlm_loss(g.param(p), orig, mask);
    g.backward(loss);
    const double before = loss.value().item();
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(p.grad.at(0, c) == 0);
      CHECK(p.grad.at(2, c) == 0);
      p.value.at(0, c) += 3;
      p.value.at(2, c) -= 7;
    }
    Graph g2(false);
    CHECK(jmlm_loss(g2.param(p), orig, mask).value().item() == before);
  }
  Graph g(false);
  Var logits = g.constant(Tensor({2, 3}));
  const std::vector<std::int32_t> orig = {0, 1};
  const std::vector<std::uint8_t> none = {0, 0};
  CHECK_THROWS_AS(jmlm_loss(logits, orig, none), std::invalid_argument);
}

TEST_CASE("jmrm loss") {
  SUBCASE("r = [1,0], prediction zero, p = 2 gives 0.5") {
    Graph g(false);
    Var pred = g.constant(Tensor({1, 2}));
    Var w = g.constant(Tensor({3, 2}));
    const std::vector<float> r = {1, 0};
    const std::vector<std::uint8_t> m = {1};
    CHECK(jmrm_loss(pred, r, m, w, 2.0, 0.0).value().item() == doctest::Approx(0.5));
  }
  SUBCASE("l1 penalty of unit weights is l1_coeff * d * d_v") {
    const std::size_t d = 6, d_v = 5;
    Graph g(false);
    Var pred = g.constant(Tensor({1, d_v}, Real(0.5)));
    Tensor wt({d, d_v}, Real(1));
    for (std::size_t i = 0; i < wt.size(); i += 2) wt[i] = -1;
    Var w = g.constant(wt);
    const std::vector<float> r(d_v, 0.5f);
    const std::vector<std::uint8_t> m = {1};
    CHECK(jmrm_loss(pred, r, m, w, 2.0, 0.1).value().item() == doctest::Approx(0.1 * d * d_v));
  }
  SUBCASE("perfect prediction with zero weights is zero") {
    Graph g(false);
    Var pred = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    Var w = g.constant(Tensor({2, 2}));
    const std::vector<float> r = {1, 2, 3, 4};
    const std::vector<std::uint8_t> m = {1, 1};
    CHECK(jmrm_loss(pred, r, m, w, 2.0, 0.5).value().item() == 0);
  }
  SUBCASE("nothing masked contributes a constant zero") {
    Graph g;
    Parameter p{"pred", Tensor({2, 2}, Real(1)), Tensor(), true};
    Var w = g.constant(Tensor({2, 2}, Real(1)));
    const std::vector<float> r(4, 0.0f);
    const std::vector<std::uint8_t> m = {0, 0};
    Var loss = jmrm_loss(g.param(p), r, m, w, 2.0, 0.1);
    CHECK(loss.value().item() == 0);
    CHECK_FALSE(loss.requires_grad());
  }
}

TEST_CASE("perplexity of a uniform head is the vocabulary size") {
  ModelConfig c = glm::test::micro_config();
  c.vocab_size = 100;
  CrossModalModel model(c, 3);
  model.param("jmlm_w").value.fill(0);
  model.param("jmlm_b").value.fill(0);
  std::mt19937_64 rng(4);
  std::vector<MaskedBatch> stream;
  for (int i = 0; i < 3; ++i) {
    std::vector<EncodedExample> ex;
    for (int j = 0; j < 4; ++j) {
      EncodedExample e;
      e.text = mask_tokens(std::vector<std::int32_t>{1, 10, 20, 30, 40, 50}, 0.3, rng, 100);
      ex.push_back(e);
    }
    stream.push_back(collate(ex, c.d_v));
  }
  const auto r = perplexity(model, stream);
  CHECK(r.perplexity == doctest::Approx(100.0));
  CHECK(r.masked_tokens > 0);
  CHECK(perplexity(model, stream).perplexity == r.perplexity);
  CHECK_THROWS_AS(perplexity(model, {}), std::invalid_argument);
}

TEST_CASE("swapping the ranks of two distinct images changes the slot inputs") {
  CrossModalModel model(glm::test::micro_config(), 4);
  EncodedExample e = text_example({1, 5}, {0, 1});
  const auto imgs = images(2, 4, 8);
  e.visual = VisualInput::from_images(imgs, 1, 4);
  const MaskedBatch b = collate(std::span(&e, 1), 4);
  MaskedBatch swapped = b;
  std::swap(swapped.rank_ids[0], swapped.rank_ids[1]);
  const Tensor x = model.visual_slot_inputs(b), y = model.visual_slot_inputs(swapped);
  CHECK(x.shape() == y.shape());
  CHECK(x != y);

  // Without rank embeddings the swap would be invisible.
  model.param("rank_emb").value.fill(0);
  CHECK(model.visual_slot_inputs(b) == model.visual_slot_inputs(swapped));
}

TEST_CASE("placeholder slot is the placeholder vector alone") {
  CrossModalModel model(glm::test::micro_config(), 5);
  EncodedExample e = text_example({1, 5}, {0, 1});
  MaskedBatch b = collate(std::span(&e, 1), 4);
  const Tensor x = model.visual_slot_inputs(b);
  const Tensor& ph = model.param("placeholder").value;
  REQUIRE(x.size() == ph.size());
  for (std::size_t i = 0; i < ph.size(); ++i) CHECK(x[i] == ph[i]);
  // Region content under a placeholder slot is ignored.
  std::fill(b.regions.begin(), b.regions.end(), 123.0f);
  Graph g1(false), g2(false);
  const MaskedBatch clean = collate(std::span(&e, 1), 4);
  CHECK(model.forward(g1, b).token_logits.value() == model.forward(g2, clean).token_logits.value());
}

TEST_CASE("a frozen text encoder stays bit-identical through training") {
  ModelConfig c = glm::test::micro_config();
  c.freeze_text = true;
  CrossModalModel model(c, 6);
  std::vector<Tensor> text_before, other_before;
  for (Parameter* p : model.text_encoder_parameters()) text_before.push_back(p->value);
  const Tensor head_before = model.param("jmlm_w").value;
  const MaskedBatch b = glm::test::micro_batch(c);
  const auto params = model.parameters();
  AdamState adam;
  adam.lr = 1e-2;
  for (int step = 0; step < 5; ++step) {
    zero_grads(params);
    Graph g;
    g.backward(glm::test::micro_loss(model, g, b));
    adam_step(params, adam);
  }
  const auto text = model.text_encoder_parameters();
  REQUIRE(text.size() == text_before.size());
  for (std::size_t i = 0; i < text.size(); ++i) CHECK(text[i]->value == text_before[i]);
  CHECK(model.param("jmlm_w").value != head_before);
  CHECK(model.param("tok_emb").trainable == false);

  model.set_text_frozen(false);
  CHECK(model.param("tok_emb").trainable);
}

TEST_CASE("classification head") {
  CrossModalModel model(glm::test::micro_config(), 7);
  CHECK_FALSE(model.cls_outputs());
  model.reset_cls_head(3, 1);
  CHECK(*model.cls_outputs() == 3);
  CHECK(model.param("cls_w").value.shape() == Shape{8, 3});
  CHECK_THROWS_AS(model.reset_cls_head(0, 1), std::invalid_argument);
}

TEST_CASE("checkpoint round trip") {
  glm::test::TempDir dir("ckpt");
  ModelConfig c = glm::test::micro_config();
  CrossModalModel model(c, 8);
  model.reset_cls_head(2, 3);
  model.param("placeholder").trainable = false;
  save_checkpoint(model, dir / "m.glmc");
  CrossModalModel back = load_checkpoint(dir / "m.glmc");
  CHECK(back.config().serialize() == model.config().serialize());
  const auto a = model.parameters();
  const auto b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value == b[i]->value);
    CHECK(a[i]->trainable == b[i]->trainable);
  }
  const MaskedBatch batch = glm::test::micro_batch(c);
  Graph g1(false), g2(false);
  CHECK(model.forward(g1, batch).token_logits.value() == back.forward(g2, batch).token_logits.value());

  save_checkpoint(back, dir / "again.glmc");
  CHECK(glm::test::slurp(dir / "m.glmc") == glm::test::slurp(dir / "again.glmc"));

  const std::string bytes = glm::test::slurp(dir / "m.glmc");
  glm::test::write_text(dir / "short.glmc", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_WITH(load_checkpoint(dir / "short.glmc"), doctest::Contains("unexpected end"));
  glm::test::write_text(dir / "junk.glmc", "JUNKJUNK");
  CHECK_THROWS_WITH(load_checkpoint(dir / "junk.glmc"), doctest::Contains("magic"));
}
