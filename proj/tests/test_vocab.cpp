#include <string>
#include <vector>

#include "doctest.h"
#include "groundlm/vocab.hpp"
#include "support.hpp"

using namespace glm;

TEST_CASE("reserved ids") {
  Vocabulary v;
  CHECK(v.size() == 5);
  CHECK(v.id("[pad]") == Vocabulary::kPad);
  CHECK(v.id("[cls]") == Vocabulary::kCls);
  CHECK(v.id("[masked]") == Vocabulary::kMask);
  CHECK(v.id("[sep]") == Vocabulary::kSep);
  CHECK(v.id("anything") == Vocabulary::kUnk);
  CHECK(Vocabulary::is_special(4));
  CHECK_FALSE(Vocabulary::is_special(5));
}

TEST_CASE("build orders by count then alphabetically, honouring min_count") {
  const std::vector<std::string> texts = {"b a c", "a b", "a d", "e"};
  const auto v = Vocabulary::build(texts, 2);
  REQUIRE(v.size() == 7);
  CHECK(v.token(5) == "a");
  CHECK(v.token(6) == "b");
  CHECK(v.id("c") == Vocabulary::kUnk);
  const auto all = Vocabulary::build(texts, 1);
  CHECK(all.size() == 10);
  CHECK(all.token(7) == "c");
  CHECK(Vocabulary::build(texts, 1, 2).size() == 7);
}

TEST_CASE("single and pair encodings are clipped") {
  const std::vector<std::string> texts = {"x y z", "x y z"};
  const auto v = Vocabulary::build(texts);
  const std::vector<std::string> a = {"x", "y", "q"}, b = {"z", "x"};
  const auto ids = encode_single(v, a, 64);
  CHECK(ids == std::vector<std::int32_t>{1, v.id("x"), v.id("y"), Vocabulary::kUnk});
  CHECK(encode_single(v, a, 2).size() == 2);
  const auto pair = encode_pair(v, a, b, 64);
  CHECK(pair == std::vector<std::int32_t>{1, v.id("x"), v.id("y"), 3, 4, v.id("z"), v.id("x")});
  CHECK(encode_pair(v, a, b, 5).size() == 5);
}

TEST_CASE("vocabulary file round trip") {
  glm::test::TempDir dir("vocab");
  const std::vector<std::string> texts = {"red red blue", "blue green green"};
  const auto v = Vocabulary::build(texts);
  v.save(dir / "v.txt");
  const auto back = Vocabulary::load(dir / "v.txt");
  REQUIRE(back.size() == v.size());
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(v.size()); ++i) CHECK(back.token(i) == v.token(i));
  glm::test::write_text(dir / "bad.txt", "hello\n");
  CHECK_THROWS(Vocabulary::load(dir / "bad.txt"));
}
