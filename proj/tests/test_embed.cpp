#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "groundlm/embed.hpp"
#include "support.hpp"

using namespace glm;

namespace {

WordEmbeddingTable animals() {
  WordEmbeddingTable t(3);
  t.insert("dog", {1, 0, 2});
  t.insert("cat", {0, 4, 0});
  t.insert("domestic", {2, 2, 2});
  t.insert("animal", {0, 0, 6});
  return t;
}

void check_vec(const std::vector<float>& got, const std::vector<float>& want) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]));
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
  CHECK(tokenize("A Dog's  life, 2x!") == std::vector<std::string>{"a", "dog", "s", "life", "2x"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("caf\xc3\xa9 au-lait") == std::vector<std::string>{"caf\xc3\xa9", "au", "lait"});
}

TEST_CASE("parse word vectors with and without a header") {
  std::istringstream plain("dog 1 2 3\ncat 4 5 6\n");
  auto t = parse_word_vectors(plain);
  CHECK(t.dim() == 3);
  CHECK(t.size() == 2);

  std::string body = "2 300\n";
  for (const char* w : {"a", "b"}) {
    body += w;
    for (int i = 0; i < 300; ++i) body += " 0.5";
    body += "\n";
  }
  std::istringstream headed(body);
  CHECK(parse_word_vectors(headed).dim() == 300);
}

TEST_CASE("a short line is reported with its line number") {
  std::string body = "2 300\na";
  for (int i = 0; i < 300; ++i) body += " 1";
  body += "\nb";
  for (int i = 0; i < 299; ++i) body += " 1";
  body += "\n";
  std::istringstream in(body);
  try {
    parse_word_vectors(in);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("duplicate tokens keep the first vector, lookup is case-insensitive") {
  std::istringstream in("Dog 1 1\ndog 2 2\n");
  auto t = parse_word_vectors(in);
  CHECK(t.size() == 1);
  check_vec(*t.find("DOG"), {1, 1});
}

TEST_CASE("word vector file loading") {
  glm::test::TempDir dir("embed");
  glm::test::write_text(dir / "v.txt", "x 1 0\ny 0 1\n");
  glm::test::write_text(dir / "stop.txt", "# comment\nthe\nOf\n");
  CHECK(load_word_vectors(dir / "v.txt").size() == 2);
  const auto stop = load_stopwords(dir / "stop.txt");
  CHECK(stop.size() == 2);
  CHECK(stop.contains("of"));
  CHECK_THROWS(load_word_vectors(dir / "missing.txt"));
}

TEST_CASE("cbow means") {
  auto t = animals();
  check_vec(encode_cbow("dog", t).values, {1, 0, 2});
  check_vec(encode_cbow("dog cat", t).values, {0.5, 2, 1});
  check_vec(encode_cbow("cat dog", t).values, encode_cbow("dog cat", t).values);
  // Multiplicity counts.
  check_vec(encode_cbow("dog dog cat", t).values, {2.0f / 3, 4.0f / 3, 4.0f / 3});
}

TEST_CASE("stopwords are skipped unless nothing else is in vocabulary") {
  auto t = animals();
  t.insert("the", {9, 9, 9});
  t.set_stopwords({"the", "of", "a"});
  check_vec(encode_cbow("the dog", t).values, {1, 0, 2});
  // Only stopwords with vectors: fall back to them.
  check_vec(encode_cbow("the of a", t).values, {9, 9, 9});

  // Stopwords without vectors leave nothing to average.
  auto bare = animals();
  bare.set_stopwords({"the", "of", "a"});
  const auto q = encode_cbow("the of a", bare);
  CHECK(q.is_degenerate);
  check_vec(q.values, {0, 0, 0});
}

TEST_CASE("cbow is linear in a uniform table scale") {
  auto t = animals();
  const auto a = encode_cbow("dog cat animal", t);
  const auto b = encode_cbow("dog cat animal", t.scaled(2.5f));
  for (std::size_t i = 0; i < 3; ++i) CHECK(b.values[i] == doctest::Approx(2.5 * a.values[i]));
}

TEST_CASE("synset keys") {
  auto t = animals();
  t.set_stopwords({"a"});
  const std::vector<std::string> dog = {"dog"};
  check_vec(encode_synset_key(dog, "", t).values, {1, 0, 2});
  const auto def = encode_cbow("a domestic animal", t).values;  // (1, 1, 4)
  check_vec(def, {1, 1, 4});
  check_vec(encode_synset_key(dog, "a domestic animal", t).values, {1, 0.5, 3});
  const std::vector<std::string> oov = {"zebra"};
  CHECK(encode_synset_key(oov, "quagga", t).is_degenerate);
  // Duplicate lemmas count toward the mean.
  const std::vector<std::string> dup = {"dog", "dog", "cat"};
  check_vec(encode_synset_key(dup, "", t).values, {2.0f / 3, 4.0f / 3, 4.0f / 3});
  CHECK_THROWS_AS(encode_synset_key(std::vector<std::string>{}, "dog", t), std::invalid_argument);
}
