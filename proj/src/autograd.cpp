#include "groundlm/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace glm {

namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

void require_rank2(const char* op, const char* what, const Tensor& t) {
  if (t.rank() != 2) {
    shape_error(op, std::string(what) + " must be rank 2, got " +
                        shape_str(t.shape()));
  }
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
}

std::size_t last_dim(const Tensor& t) {
  return t.rank() == 0 ? 1 : t.shape().back();
}

}  // namespace

// ---- Var / Graph ----------------------------------------------------------

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = p.trainable && grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::record(const char* op, Tensor value, std::initializer_list<Var> parents,
                  BackwardFn backward) {
  return record(op, std::move(value),
                std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Graph::record(const char* op, Tensor value, std::span<const Var> parents,
                  BackwardFn backward) {
  if (!value.all_finite()) {
    throw std::domain_error(std::string(op) + ": produced non-finite values");
  }
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.graph() != this) throw std::logic_error(std::string(op) + ": mixed graphs");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor& Graph::grad_slot(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) {
    n.grad = Tensor(n.value.shape());
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  if (&loss.graph() != this) throw std::logic_error("backward: foreign loss");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  visits_ = 0;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_slot(loss.id()).fill(Real(1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    ++visits_;
    if (n.backward) n.backward(n.grad);
    if (n.param != nullptr && n.param->trainable) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      auto dst = p.grad.values();
      auto src = n.grad.values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
}

// ---- ops ------------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2("matmul", "lhs", av);
  require_rank2("matmul", "rhs", bv);
  if (av.cols() != bv.rows()) {
    shape_error("matmul", "inner dimensions differ " + shape_str(av.shape()) +
                              " x " + shape_str(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  MapR(out.data(), m, n).noalias() =
      CMapR(av.data(), m, k) * CMapR(bv.data(), k, n);
  Graph* g = &a.graph();
  const auto ia = a.id(), ib = b.id();
  return g->record("matmul", std::move(out), {a, b},
                   [g, ia, ib, m, k, n](const Tensor& dc) {
                     CMapR dC(dc.data(), m, n);
                     if (g->requires_grad(ia)) {
                       MapR(g->grad_slot(ia).data(), m, k).noalias() +=
                           dC * CMapR(g->value(ib).data(), k, n).transpose();
                     }
                     if (g->requires_grad(ib)) {
                       MapR(g->grad_slot(ib).data(), k, n).noalias() +=
                           CMapR(g->value(ia).data(), m, k).transpose() * dC;
                     }
                   });
}

Var add(Var a, Var b) {
  require_same("add", a.value(), b.value());
  Tensor out = a.value();
  auto o = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  Graph* g = &a.graph();
  const auto ia = a.id(), ib = b.id();
  return g->record("add", std::move(out), {a, b}, [g, ia, ib](const Tensor& d) {
    for (auto id : {ia, ib}) {
      if (!g->requires_grad(id)) continue;
      auto dst = g->grad_slot(id).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += d[i];
    }
  });
}

Var add_bias(Var a, Var bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (av.rank() != 2 || bv.rank() != 1 || av.cols() != bv.size()) {
    shape_error("add_bias", "cannot add " + shape_str(bv.shape()) + " to rows of " +
                                shape_str(av.shape()));
  }
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = av;
  for (std::size_t r = 0; r < m; ++r) {
    Real* row = out.data() + r * n;
    for (std::size_t c = 0; c < n; ++c) row[c] += bv[c];
  }
  Graph* g = &a.graph();
  const auto ia = a.id(), ib = bias.id();
  return g->record("add_bias", std::move(out), {a, bias},
                   [g, ia, ib, m, n](const Tensor& d) {
                     if (g->requires_grad(ia)) {
                       auto dst = g->grad_slot(ia).values();
                       for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += d[i];
                     }
                     if (g->requires_grad(ib)) {
                       Tensor& db = g->grad_slot(ib);
                       for (std::size_t r = 0; r < m; ++r) {
                         const Real* row = d.data() + r * n;
                         for (std::size_t c = 0; c < n; ++c) db[c] += row[c];
                       }
                     }
                   });
}

Var mul(Var a, Var b) {
  require_same("mul", a.value(), b.value());
  Tensor out = a.value();
  auto o = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  Graph* g = &a.graph();
  const auto ia = a.id(), ib = b.id();
  return g->record("mul", std::move(out), {a, b}, [g, ia, ib](const Tensor& d) {
    if (g->requires_grad(ia)) {
      auto dst = g->grad_slot(ia).values();
      auto other = g->value(ib).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += d[i] * other[i];
    }
    if (g->requires_grad(ib)) {
      auto dst = g->grad_slot(ib).values();
      auto other = g->value(ia).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += d[i] * other[i];
    }
  });
}

Var scale(Var a, Real factor) {
  Tensor out = a.value();
  for (Real& v : out.values()) v *= factor;
  Graph* g = &a.graph();
  const auto ia = a.id();
  return g->record("scale", std::move(out), {a}, [g, ia, factor](const Tensor& d) {
    auto dst = g->grad_slot(ia).values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += d[i] * factor;
  });
}

Var sum(Var a) {
  Real total = 0;
  for (Real v : a.value().values()) total += v;
  Graph* g = &a.graph();
  const auto ia = a.id();
  return g->record("sum", Tensor::scalar(total), {a}, [g, ia](const Tensor& d) {
    const Real s = d[0];
    for (Real& v : g->grad_slot(ia).values()) v += s;
  });
}

Var softmax(Var a) {
  const Tensor& av = a.value();
  if (av.rank() == 0) shape_error("softmax", "input must have at least one axis");
  const std::size_t n = last_dim(av);
  const std::size_t m = av.size() / n;
  Tensor out(av.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const Real* x = av.data() + r * n;
    Real* y = out.data() + r * n;
    const Real mx = *std::max_element(x, x + n);
    Real z = 0;
    for (std::size_t c = 0; c < n; ++c) z += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < n; ++c) y[c] /= z;
  }
  Graph* g = &a.graph();
  const auto ia = a.id();
  const auto io = static_cast<std::uint32_t>(g->size());
  return g->record("softmax", std::move(out), {a}, [g, ia, io, m, n](const Tensor& d) {
    const Tensor& y = g->value(io);
    Tensor& dx = g->grad_slot(ia);
    for (std::size_t r = 0; r < m; ++r) {
      const Real* yr = y.data() + r * n;
      const Real* dr = d.data() + r * n;
      Real dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += yr[c] * dr[c];
      Real* out = dx.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) out[c] += yr[c] * (dr[c] - dot);
    }
  });
}

Var layernorm(Var x, Var gamma, Var beta, Real eps) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || gamma.value().rank() != 1 ||
      gamma.value().size() != xv.cols() || beta.value().shape() != gamma.value().shape()) {
    shape_error("layernorm", "input " + shape_str(xv.shape()) + " gamma " +
                                 shape_str(gamma.shape()) + " beta " +
                                 shape_str(beta.shape()));
  }
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out({m, n});
  std::vector<Real> xhat(m * n), inv_std(m);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < m; ++r) {
    const Real* row = xv.data() + r * n;
    Real mean = 0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= Real(n);
    Real var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= Real(n);
    const Real inv = Real(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < n; ++c) {
      const Real h = (row[c] - mean) * inv;
      xhat[r * n + c] = h;
      out.data()[r * n + c] = gv[c] * h + bv[c];
    }
  }
  Graph* g = &x.graph();
  const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
  return g->record(
      "layernorm", std::move(out), {x, gamma, beta},
      [g, ix, ig, ib, m, n, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const Tensor& d) {
        const Tensor& gv = g->value(ig);
        if (g->requires_grad(ig)) {
          Tensor& dg = g->grad_slot(ig);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) dg[c] += d[r * n + c] * xhat[r * n + c];
        }
        if (g->requires_grad(ib)) {
          Tensor& db = g->grad_slot(ib);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) db[c] += d[r * n + c];
        }
        if (g->requires_grad(ix)) {
          Tensor& dx = g->grad_slot(ix);
          std::vector<Real> dh(n);
          for (std::size_t r = 0; r < m; ++r) {
            Real mean_dh = 0, mean_dh_h = 0;
            for (std::size_t c = 0; c < n; ++c) {
              dh[c] = d[r * n + c] * gv[c];
              mean_dh += dh[c];
              mean_dh_h += dh[c] * xhat[r * n + c];
            }
            mean_dh /= Real(n);
            mean_dh_h /= Real(n);
            for (std::size_t c = 0; c < n; ++c) {
              dx[r * n + c] +=
                  inv_std[r] * (dh[c] - mean_dh - xhat[r * n + c] * mean_dh_h);
            }
          }
        }
      });
}

Var gelu(Var a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  Tensor out = a.value();
  for (Real& v : out.values()) {
    v = Real(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
  }
  Graph* g = &a.graph();
  const auto ia = a.id();
  return g->record("gelu", std::move(out), {a}, [g, ia](const Tensor& d) {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    const Tensor& x = g->value(ia);
    Tensor& dx = g->grad_slot(ia);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double xi = x[i];
      const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
      dx[i] += d[i] * Real(cdf + xi * pdf);
    }
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (Real& v : out.values()) v = v > 0 ? v : Real(0);
  Graph* g = &a.graph();
  const auto ia = a.id();
  return g->record("relu", std::move(out), {a}, [g, ia](const Tensor& d) {
    const Tensor& x = g->value(ia);
    Tensor& dx = g->grad_slot(ia);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (x[i] > 0) dx[i] += d[i];
    }
  });
}

Var gather_rows(Var table, std::span<const std::int32_t> rows) {
  const Tensor& tv = table.value();
  require_rank2("gather_rows", "table", tv);
  const std::size_t n = tv.cols();
  const auto limit = static_cast<std::int32_t>(tv.rows());
  Tensor out({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= limit) {
      shape_error("gather_rows", "row " + std::to_string(rows[r]) +
                                     " out of range for table " +
                                     shape_str(tv.shape()));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(rows[r]) * n, n,
                out.data() + r * n);
  }
  Graph* g = &table.graph();
  const auto it = table.id();
  std::vector<std::int32_t> idx(rows.begin(), rows.end());
  return g->record("gather_rows", std::move(out), {table},
                   [g, it, n, idx = std::move(idx)](const Tensor& d) {
                     Tensor& dt = g->grad_slot(it);
                     for (std::size_t r = 0; r < idx.size(); ++r) {
                       Real* dst = dt.data() + static_cast<std::size_t>(idx[r]) * n;
                       const Real* src = d.data() + r * n;
                       for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
                     }
                   });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) shape_error("concat_rows", "no inputs");
  const std::size_t n = parts.front().value().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank2("concat_rows", "part", p.value());
    if (p.value().cols() != n) {
      shape_error("concat_rows", "column mismatch " + shape_str(parts.front().shape()) +
                                     " vs " + shape_str(p.shape()));
    }
    total += p.value().rows();
  }
  Tensor out({total, n});
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + at);
    ids.push_back(p.id());
    offsets.push_back(at);
    at += p.value().size();
  }
  Graph* g = &parts.front().graph();
  return g->record("concat_rows", std::move(out), parts,
                   [g, ids = std::move(ids), offsets = std::move(offsets)](const Tensor& d) {
                     for (std::size_t i = 0; i < ids.size(); ++i) {
                       if (!g->requires_grad(ids[i])) continue;
                       Tensor& dp = g->grad_slot(ids[i]);
                       const Real* src = d.data() + offsets[i];
                       for (std::size_t j = 0; j < dp.size(); ++j) dp[j] += src[j];
                     }
                   });
}

Var attention(Var q, Var k, Var v, AttentionShape shape,
              std::span<const std::uint8_t> key_valid) {
  const Tensor& qv = q.value();
  require_rank2("attention", "query", qv);
  require_same("attention", qv, k.value());
  require_same("attention", qv, v.value());
  const std::size_t B = shape.batch, S = shape.seq, H = shape.heads;
  const std::size_t d = qv.cols();
  if (B * S != qv.rows() || H == 0 || d % H != 0 || key_valid.size() != B * S) {
    shape_error("attention", "inputs " + shape_str(qv.shape()) + " do not fit batch=" +
                                 std::to_string(B) + " seq=" + std::to_string(S) +
                                 " heads=" + std::to_string(H) + " mask=" +
                                 std::to_string(key_valid.size()));
  }
  const std::size_t dh = d / H;
  const Real sc = Real(1) / std::sqrt(Real(dh));
  const Real* Q = qv.data();
  const Real* K = k.value().data();
  const Real* V = v.value().data();
  Tensor out({B * S, d});
  std::vector<Real> probs(B * H * S * S, Real(0));
  for (std::size_t b = 0; b < B; ++b) {
    const std::uint8_t* valid = key_valid.data() + b * S;
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < S; ++i) {
        Real* p = probs.data() + ((b * H + h) * S + i) * S;
        const Real* qi = Q + (b * S + i) * d + h * dh;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < S; ++j) {
          if (!valid[j]) continue;
          const Real* kj = K + (b * S + j) * d + h * dh;
          Real s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          p[j] = s * sc;
          mx = std::max(mx, p[j]);
        }
        Real z = 0;
        for (std::size_t j = 0; j < S; ++j) {
          if (!valid[j]) continue;
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        if (z <= 0) continue;
        Real* oi = out.data() + (b * S + i) * d + h * dh;
        for (std::size_t j = 0; j < S; ++j) {
          if (!valid[j]) continue;
          p[j] /= z;
          const Real* vj = V + (b * S + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  std::vector<std::uint8_t> valid(key_valid.begin(), key_valid.end());
  Graph* g = &q.graph();
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return g->record(
      "attention", std::move(out), {q, k, v},
      [g, iq, ik, iv, B, S, H, d, dh, sc, probs = std::move(probs),
       valid = std::move(valid)](const Tensor& dout) {
        const Real* Q = g->value(iq).data();
        const Real* K = g->value(ik).data();
        const Real* V = g->value(iv).data();
        Real* dQ = g->requires_grad(iq) ? g->grad_slot(iq).data() : nullptr;
        Real* dK = g->requires_grad(ik) ? g->grad_slot(ik).data() : nullptr;
        Real* dV = g->requires_grad(iv) ? g->grad_slot(iv).data() : nullptr;
        std::vector<Real> dp(S);
        for (std::size_t b = 0; b < B; ++b) {
          const std::uint8_t* vb = valid.data() + b * S;
          for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < S; ++i) {
              const Real* p = probs.data() + ((b * H + h) * S + i) * S;
              const Real* doi = dout.data() + (b * S + i) * d + h * dh;
              Real dot = 0;
              for (std::size_t j = 0; j < S; ++j) {
                dp[j] = 0;
                if (!vb[j]) continue;
                const Real* vj = V + (b * S + j) * d + h * dh;
                Real s = 0;
                for (std::size_t c = 0; c < dh; ++c) s += doi[c] * vj[c];
                dp[j] = s;
                dot += p[j] * s;
                if (dV) {
                  Real* dvj = dV + (b * S + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) dvj[c] += p[j] * doi[c];
                }
              }
              const Real* qi = Q + (b * S + i) * d + h * dh;
              Real* dqi = dQ ? dQ + (b * S + i) * d + h * dh : nullptr;
              for (std::size_t j = 0; j < S; ++j) {
                if (!vb[j]) continue;
                const Real ds = p[j] * (dp[j] - dot) * sc;
                const Real* kj = K + (b * S + j) * d + h * dh;
                if (dqi) {
                  for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
                }
                if (dK) {
                  Real* dkj = dK + (b * S + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

Var cross_entropy(Var logits, std::span<const std::int32_t> targets) {
  const Tensor& lv = logits.value();
  require_rank2("cross_entropy", "logits", lv);
  if (targets.size() != lv.rows()) {
    shape_error("cross_entropy", std::to_string(targets.size()) +
                                     " targets for logits " + shape_str(lv.shape()));
  }
  const std::size_t m = lv.rows(), n = lv.cols();
  double total = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= n) {
      shape_error("cross_entropy", "target " + std::to_string(targets[r]) +
                                       " outside " + std::to_string(n) + " classes");
    }
    const Real* x = lv.data() + r * n;
    const Real mx = *std::max_element(x, x + n);
    double z = 0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(double(x[c] - mx));
    total += std::log(z) + double(mx) - double(x[targets[r]]);
  }
  Graph* g = &logits.graph();
  const auto il = logits.id();
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  return g->record("cross_entropy", Tensor::scalar(Real(total)), {logits},
                   [g, il, m, n, tg = std::move(tg)](const Tensor& d) {
                     const Tensor& lv = g->value(il);
                     Tensor& dl = g->grad_slot(il);
                     const Real s = d[0];
                     for (std::size_t r = 0; r < m; ++r) {
                       if (tg[r] < 0) continue;
                       const Real* x = lv.data() + r * n;
                       Real* dx = dl.data() + r * n;
                       const Real mx = *std::max_element(x, x + n);
                       Real z = 0;
                       for (std::size_t c = 0; c < n; ++c) z += std::exp(x[c] - mx);
                       for (std::size_t c = 0; c < n; ++c) {
                         dx[c] += s * std::exp(x[c] - mx) / z;
                       }
                       dx[tg[r]] -= s;
                     }
                   });
}

Var lp_loss(Var pred, const Tensor& target, std::span<const std::uint8_t> rows, Real p) {
  const Tensor& pv = pred.value();
  require_rank2("lp_loss", "prediction", pv);
  require_same("lp_loss", pv, target);
  if (rows.size() != pv.rows()) {
    shape_error("lp_loss", std::to_string(rows.size()) + " row flags for " +
                               shape_str(pv.shape()));
  }
  if (!(p >= 1)) shape_error("lp_loss", "exponent must be >= 1");
  const std::size_t m = pv.rows(), n = pv.cols();
  Tensor diff({m, n});
  double total = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (!rows[r]) continue;
    for (std::size_t c = 0; c < n; ++c) {
      const Real e = pv[r * n + c] - target[r * n + c];
      diff[r * n + c] = e;
      total += std::pow(std::abs(double(e)), double(p));
    }
  }
  total /= double(n);
  Graph* g = &pred.graph();
  const auto ip = pred.id();
  return g->record("lp_loss", Tensor::scalar(Real(total)), {pred},
                   [g, ip, n, p, diff = std::move(diff)](const Tensor& d) {
                     Tensor& dp = g->grad_slot(ip);
                     const Real s = d[0] / Real(n);
                     for (std::size_t i = 0; i < dp.size(); ++i) {
                       const Real e = diff[i];
                       if (e == 0) continue;
                       const Real mag = p == Real(2) ? Real(2) * std::abs(e)
                                                     : p * std::pow(std::abs(e), p - 1);
                       dp[i] += s * (e > 0 ? mag : -mag);
                     }
                   });
}

Var l1_norm(Var a) {
  double total = 0;
  for (Real v : a.value().values()) total += std::abs(double(v));
  Graph* g = &a.graph();
  const auto ia = a.id();
  return g->record("l1_norm", Tensor::scalar(Real(total)), {a}, [g, ia](const Tensor& d) {
    const Tensor& x = g->value(ia);
    Tensor& dx = g->grad_slot(ia);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (x[i] > 0) dx[i] += d[0];
      else if (x[i] < 0) dx[i] -= d[0];
    }
  });
}

}  // namespace glm
