#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "groundlm/tensor.hpp"

namespace glm {

// A named model weight. Frozen parameters (trainable == false) never receive
// a gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor(value.shape());
    else grad.fill(Real(0));
  }
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the Graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// Tape of operation records. Nodes are appended in creation order, which is a
// topological order, so backward walks the tape in reverse.
class Graph {
 public:
  // Called with the gradient of the node's output; propagates into parents.
  using BackwardFn = std::function<void(const Tensor& out_grad)>;

  // A graph built with grad_enabled == false records values only.
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);

  // Records an op output. requires_grad is inherited from the parents.
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents,
             BackwardFn backward);
  Var record(const char* op, Tensor value, std::span<const Var> parents,
             BackwardFn backward);

  // Populates node gradients and accumulates into every trainable Parameter.
  void backward(Var loss);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::uint32_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  // Zero-initialised on first use.
  Tensor& grad_slot(std::uint32_t id);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t last_backward_visits() const noexcept { return visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
  bool grad_enabled_ = true;
};

// ---- differentiable ops -------------------------------------------------
// Every op validates shapes and throws std::invalid_argument naming the op
// and the offending shapes.

Var matmul(Var a, Var b);                 // [m,k] x [k,n]
Var add(Var a, Var b);                    // same shape
Var add_bias(Var a, Var bias);            // [m,n] + [n]
Var mul(Var a, Var b);                    // elementwise
Var scale(Var a, Real factor);
Var sum(Var a);                           // -> scalar
Var softmax(Var a);                       // over the last axis
Var layernorm(Var x, Var gamma, Var beta, Real eps = Real(1e-5));
Var gelu(Var a);
Var relu(Var a);
Var gather_rows(Var table, std::span<const std::int32_t> rows);
Var concat_rows(std::span<const Var> parts);

struct AttentionShape {
  std::size_t batch = 1;
  std::size_t seq = 1;
  std::size_t heads = 1;
};

// Multi-head scaled dot-product attention over packed [batch*seq, d] inputs.
// key_valid[b*seq + j] == 0 hides key j from every query of sequence b.
Var attention(Var q, Var k, Var v, AttentionShape shape,
              std::span<const std::uint8_t> key_valid);

// Sum of softmax cross-entropies of rows whose target is >= 0.
Var cross_entropy(Var logits, std::span<const std::int32_t> targets);

// Sum over flagged rows of sum_j |pred - target|^p / cols.
Var lp_loss(Var pred, const Tensor& target, std::span<const std::uint8_t> rows,
            Real p);

Var l1_norm(Var a);

}  // namespace glm
