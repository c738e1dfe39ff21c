#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "groundlm/autograd.hpp"
#include "groundlm/model.hpp"
#include "micro.hpp"
#include "support.hpp"

using namespace glm;
using glm::test::check_gradients;
using glm::test::random_tensor;

static_assert(sizeof(Real) == 8, "gradient checks run on the 64-bit build");

namespace {

constexpr double kTol = 1e-6;

Parameter make_param(const char* name, Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  return Parameter{name, random_tensor(std::move(shape), rng, scale), Tensor(), true};
}

// Reduces any output to a scalar with fixed random weights so every output
// element carries a distinct gradient.
Var project(Graph& g, Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, g.constant(random_tensor(out.shape(), rng))));
}

}  // namespace

TEST_CASE("matmul, add_bias, add, mul, scale") {
  std::mt19937_64 rng(1);
  Parameter a = make_param("a", {3, 4}, rng), b = make_param("b", {4, 2}, rng),
            bias = make_param("bias", {2}, rng), c = make_param("c", {3, 2}, rng);
  auto f = [&](Graph& g) {
    Var y = add_bias(matmul(g.param(a), g.param(b)), g.param(bias));
    y = add(mul(y, g.param(c)), scale(g.param(c), 0.5));
    return project(g, y, 2);
  };
  CHECK(check_gradients(f, {&a, &b, &bias, &c}).max_rel_error < kTol);
}

TEST_CASE("softmax") {
  std::mt19937_64 rng(3);
  Parameter x = make_param("x", {4, 5}, rng);
  auto f = [&](Graph& g) { return project(g, softmax(g.param(x)), 4); };
  CHECK(check_gradients(f, {&x}).max_rel_error < kTol);
}

TEST_CASE("layernorm") {
  std::mt19937_64 rng(5);
  Parameter x = make_param("x", {3, 6}, rng), gamma = make_param("g", {6}, rng),
            beta = make_param("b", {6}, rng);
  auto f = [&](Graph& g) {
    return project(g, layernorm(g.param(x), g.param(gamma), g.param(beta)), 6);
  };
  CHECK(check_gradients(f, {&x, &gamma, &beta}).max_rel_error < kTol);
}

TEST_CASE("gelu and relu") {
  std::mt19937_64 rng(7);
  Parameter x = make_param("x", {4, 4}, rng);
  // Keep relu inputs away from the kink.
  for (auto& v : x.value.values())
    if (std::abs(v) < 0.05) v = 0.3;
  auto f = [&](Graph& g) {
    Var in = g.param(x);
    return add(project(g, gelu(in), 8), project(g, relu(in), 9));
  };
  CHECK(check_gradients(f, {&x}).max_rel_error < kTol);
}

TEST_CASE("gather_rows with repeated rows and concat_rows") {
  std::mt19937_64 rng(9);
  Parameter table = make_param("table", {5, 3}, rng), extra = make_param("extra", {2, 3}, rng);
  const std::vector<std::int32_t> rows = {4, 0, 4, 2, 4};
  auto f = [&](Graph& g) {
    const Var parts[] = {gather_rows(g.param(table), rows), g.param(extra)};
    return project(g, concat_rows(parts), 10);
  };
  auto r = check_gradients(f, {&table, &extra});
  CHECK(r.max_rel_error < kTol);
  // Row 1 and row 3 are never gathered.
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(table.grad.at(1, c) == 0.0);
    CHECK(table.grad.at(3, c) == 0.0);
  }
}

TEST_CASE("attention with padded keys") {
  std::mt19937_64 rng(11);
  const AttentionShape shape{2, 3, 2};
  Parameter q = make_param("q", {6, 4}, rng), k = make_param("k", {6, 4}, rng),
            v = make_param("v", {6, 4}, rng);
  const std::vector<std::uint8_t> valid = {1, 1, 0, 1, 1, 1};
  auto f = [&](Graph& g) {
    return project(g, attention(g.param(q), g.param(k), g.param(v), shape, valid), 12);
  };
  CHECK(check_gradients(f, {&q, &k, &v}).max_rel_error < kTol);
  // The hidden key and value of sequence 0 receive nothing.
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(k.grad.at(2, c) == 0.0);
    CHECK(v.grad.at(2, c) == 0.0);
  }
}

TEST_CASE("cross_entropy skips negative targets") {
  std::mt19937_64 rng(13);
  Parameter logits = make_param("logits", {4, 6}, rng);
  const std::vector<std::int32_t> targets = {2, -1, 5, 0};
  auto f = [&](Graph& g) { return cross_entropy(g.param(logits), targets); };
  CHECK(check_gradients(f, {&logits}).max_rel_error < kTol);
  for (std::size_t c = 0; c < 6; ++c) CHECK(logits.grad.at(1, c) == 0.0);
}

TEST_CASE("lp_loss for p = 2 and p = 3, l1_norm") {
  std::mt19937_64 rng(15);
  Parameter pred = make_param("pred", {3, 4}, rng), w = make_param("w", {2, 3}, rng);
  const Tensor target = random_tensor({3, 4}, rng);
  const std::vector<std::uint8_t> rows = {1, 0, 1};
  for (double p : {2.0, 3.0}) {
    auto f = [&](Graph& g) {
      return add(lp_loss(g.param(pred), target, rows, p), l1_norm(g.param(w)));
    };
    CHECK(check_gradients(f, {&pred, &w}).max_rel_error < kTol);
  }
}

TEST_CASE("full model loss on the micro config") {
  CrossModalModel model(glm::test::micro_config(), 5);
  const MaskedBatch batch = glm::test::micro_batch(model.config());
  auto f = [&](Graph& g) { return glm::test::micro_loss(model, g, batch); };
  const auto r = check_gradients(f, model.parameters());
  INFO("worst element " << r.worst);
  CHECK(r.max_rel_error < 1e-3);
  CHECK(r.checked > 1000);
}
