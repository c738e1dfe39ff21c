#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "groundlm/downstream.hpp"
#include "groundlm/toydata.hpp"
#include "support.hpp"

using namespace glm;

TEST_CASE("spearman hand cases") {
  const std::vector<double> a = {1, 2, 3, 4}, b = {1, 3, 2, 4}, r = {4, 3, 2, 1};
  CHECK(spearman(a, b) == doctest::Approx(0.8));
  CHECK(spearman(a, a) == doctest::Approx(1.0));
  CHECK(spearman(a, r) == doctest::Approx(-1.0));
  // Monotone transforms leave ranks unchanged.
  std::vector<double> t;
  for (double x : b) t.push_back(std::exp(3 * x) - 7);
  CHECK(spearman(a, t) == doctest::Approx(0.8));
  // Ties take average ranks: ranks (1, 2.5, 2.5, 4) vs (1,2,3,4).
  const std::vector<double> tied = {1, 2, 2, 3};
  CHECK(spearman(tied, a) == doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)));
  const std::vector<double> flat = {2, 2, 2, 2};
  CHECK_THROWS_AS(spearman(flat, a), std::domain_error);
  CHECK_THROWS_AS(spearman(a, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("accuracy and median") {
  const std::vector<int> p = {1, 0, 1, 1}, g = {1, 1, 1, 0};
  CHECK(accuracy(p, g) == doctest::Approx(0.5));
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK_THROWS(median({}));
}

TEST_CASE("a constant prediction scores the majority-class rate") {
  const std::vector<int> gold = {0, 1, 1, 2, 1, 0, 1};
  const std::vector<int> constant(gold.size(), 1);
  CHECK(accuracy(constant, gold) == doctest::Approx(4.0 / 7.0));
}

TEST_CASE("task file parsing") {
  std::istringstream in("metric=accuracy labels=no,yes\nyes\thello there\tgeneral\nno\tbye\t\n");
  const TaskFile t = parse_task(in, "t.tsv");
  CHECK(t.metric == MetricKind::accuracy);
  CHECK(t.num_outputs() == 2);
  REQUIRE(t.examples.size() == 2);
  CHECK(t.examples[0].label == 1);
  CHECK(t.examples[0].line == 2);
  CHECK(*t.examples[0].text_b == "general");
  CHECK_FALSE(t.examples[1].text_b);

  std::istringstream implicit("metric=accuracy\nb\tx\na\ty\nc\tz\n");
  const TaskFile u = parse_task(implicit);
  CHECK(u.labels == std::vector<std::string>{"a", "b", "c"});
  CHECK(u.examples[0].label == 1);

  std::istringstream reg("metric=spearman\n3.5\tx\n-1\ty\n");
  const TaskFile s = parse_task(reg);
  CHECK(s.num_outputs() == 1);
  CHECK(s.examples[0].label == 3.5);
}

TEST_CASE("an undeclared label reports its line") {
  std::istringstream in("metric=accuracy labels=no,yes\nyes\ta\nno\tb\nmaybe\tc\n");
  CHECK_THROWS_WITH(parse_task(in, "task.tsv"), doctest::Contains("task.tsv:4"));

  std::istringstream ref("metric=accuracy\nno\ta\nyes\tb\n");
  std::istringstream other("metric=accuracy\nyes\ta\nmaybe\tb\n");
  const TaskFile r = parse_task(ref);
  TaskFile o = parse_task(other);
  CHECK_THROWS_WITH(align_labels(r, o), doctest::Contains("line 3"));

  std::istringstream nohead("yes\ta\n");
  CHECK_THROWS(parse_task(nohead));
}

TEST_CASE("report json") {
  TaskReport r;
  r.strategy = "none";
  r.runs = {{0, true, 0.75, ""}, {1, false, 0, "boom"}};
  r.median = 0.75;
  r.config_digest = "abc";
  const std::string j = r.to_json();
  CHECK(j.find("\"median\": 0.75") != std::string::npos);
  CHECK(j.find("\"error\": \"boom\"") != std::string::npos);
  FinetuneConfig a, b;
  CHECK(a.digest() == b.digest());
  b.lr = 2e-4;
  CHECK(a.digest() != b.digest());
}

TEST_CASE("fine-tuning: run protocol and transferred isolation from the store") {
  ToySpec spec;
  spec.vocab_size = 30;
  spec.n_concepts = 6;
  spec.n_examples = 40;
  spec.n_text_only = 0;
  spec.d_w = 8;
  spec.d_v = 8;
  spec.pair_train_examples = 64;
  spec.pair_test_examples = 32;
  spec.seed = 9;
  const ToyCorpus corpus = generate_toy_corpus(spec);
  std::vector<std::string> texts;
  for (const auto& c : corpus.train) texts.push_back(c.caption);
  const Vocabulary vocab = Vocabulary::build(texts);
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.d = 16;
  mc.d_v = spec.d_v;
  mc.n_layers_text = 1;
  mc.n_layers_cross = 1;
  mc.n_heads = 2;
  mc.max_len = 16;
  mc.k_max = 4;
  const CrossModalModel model(mc, 1);
  GroundingResources res;
  res.store = &corpus.store;
  FinetuneConfig cfg;
  cfg.runs = 3;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  cfg.base_seed = 10;

  const auto reads = corpus.store.read_count();
  const TaskReport rep =
      finetune(model, vocab, corpus.pair_train, corpus.pair_test, Strategy::transferred_both, res, cfg);
  CHECK(corpus.store.read_count() == reads);
  REQUIRE(rep.runs.size() == 3);
  std::vector<double> scores;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rep.runs[i].completed);
    CHECK(rep.runs[i].seed == 10 + i);
    scores.push_back(rep.runs[i].score);
  }
  CHECK(*rep.median == median(scores));

  cfg.parallel_runs = 3;
  const TaskReport par =
      finetune(model, vocab, corpus.pair_train, corpus.pair_test, Strategy::transferred_both, res, cfg);
  for (std::size_t i = 0; i < 3; ++i) CHECK(par.runs[i].score == rep.runs[i].score);

  // Fine-tuning works on a copy.
  CHECK(model.parameters().size() == CrossModalModel(mc, 1).parameters().size());
  CHECK_FALSE(model.cls_outputs());
}
