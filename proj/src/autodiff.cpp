#include "camkd/autodiff.hpp"

#include <algorithm>
#include <string>

#include "camkd/errors.hpp"

namespace camkd {

const Tensor& Var::value() const {
  if (!graph_) throw UsageError("Var: detached handle");
  return graph_->value(*this);
}

const Tensor& Var::grad() const {
  if (!graph_) throw UsageError("Var: detached handle");
  return graph_->grad(*this);
}

const Graph::Node& Graph::node(Var v) const {
  check_owner(v);
  return nodes_[v.index_];
}

void Graph::check_owner(Var v) const {
  if (v.graph_ != this || v.index_ >= nodes_.size()) {
    throw UsageError("Graph: variable belongs to a different graph");
  }
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.parents.reserve(parents.size());
  for (const Var& p : parents) {
    check_owner(p);
    n.parents.push_back(p.index_);
    n.requires_grad = n.requires_grad || nodes_[p.index_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var loss) {
  check_owner(loss);
  if (nodes_[loss.index_].value.shape() != Shape{1, 1}) {
    throw UsageError("backward: loss must be scalar, got " +
                     to_string(nodes_[loss.index_].value.shape()));
  }
  for (std::size_t i = 0; i <= loss.index_; ++i) {
    nodes_[i].grad = Tensor(nodes_[i].value.rows(), nodes_[i].value.cols());
  }
  nodes_[loss.index_].grad[0] = 1.0;

  std::vector<Tensor*> slots;
  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward) continue;
    slots.clear();
    for (const std::size_t p : n.parents) {
      slots.push_back(nodes_[p].requires_grad ? &nodes_[p].grad : nullptr);
    }
    n.backward(*this, n, slots);
  }
}

namespace ad {

namespace {

Graph& owner(Var a) {
  if (!a.valid()) throw UsageError("ad: detached variable");
  return *a.graph();
}

Graph& owner(Var a, Var b) {
  if (a.graph() != b.graph()) throw UsageError("ad: operands belong to different graphs");
  return owner(a);
}

const Tensor& parent_value(const Graph& g, const Graph::Node& n, std::size_t k) {
  return g.node_at(n.parents[k]).value;
}

void accumulate(Tensor& into, const Tensor& delta) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += delta[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = owner(a, b);
  return g.record(camkd::matmul(a.value(), b.value()), {a, b},
                  [](const Graph& gr, const Graph::Node& n, std::span<Tensor* const> out) {
                    const Tensor& av = parent_value(gr, n, 0);
                    const Tensor& bv = parent_value(gr, n, 1);
                    const Tensor& go = n.grad;
                    const std::size_t m = av.rows(), k = av.cols(), cols = bv.cols();
                    if (out[0]) {
                      // dA = G * B^T
                      Tensor& ga = *out[0];
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          double acc = 0.0;
                          for (std::size_t j = 0; j < cols; ++j) acc += go(i, j) * bv(p, j);
                          ga(i, p) += acc;
                        }
                    }
                    if (out[1]) {
                      // dB = A^T * G
                      Tensor& gb = *out[1];
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double aip = av(i, p);
                          if (aip == 0.0) continue;
                          for (std::size_t j = 0; j < cols; ++j) gb(p, j) += aip * go(i, j);
                        }
                    }
                  });
}

Var add(Var a, Var b) {
  Graph& g = owner(a, b);
  return g.record(camkd::add(a.value(), b.value()), {a, b},
                  [](const Graph&, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (out[0]) accumulate(*out[0], n.grad);
                    if (out[1]) accumulate(*out[1], n.grad);
                  });
}

Var sub(Var a, Var b) {
  Graph& g = owner(a, b);
  return g.record(camkd::sub(a.value(), b.value()), {a, b},
                  [](const Graph&, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (out[0]) accumulate(*out[0], n.grad);
                    if (out[1]) accumulate(*out[1], camkd::scale(n.grad, -1.0));
                  });
}

Var mul(Var a, Var b) {
  Graph& g = owner(a, b);
  return g.record(camkd::mul(a.value(), b.value()), {a, b},
                  [](const Graph& gr, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (out[0]) accumulate(*out[0], camkd::mul(n.grad, parent_value(gr, n, 1)));
                    if (out[1]) accumulate(*out[1], camkd::mul(n.grad, parent_value(gr, n, 0)));
                  });
}

Var scale(Var a, double factor) {
  Graph& g = owner(a);
  return g.record(camkd::scale(a.value(), factor), {a},
                  [factor](const Graph&, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (out[0]) accumulate(*out[0], camkd::scale(n.grad, factor));
                  });
}

Var add_scalar(Var a, double offset) {
  Graph& g = owner(a);
  Tensor v = a.value();
  for (auto& x : v.values()) x += offset;
  return g.record(std::move(v), {a},
                  [](const Graph&, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (out[0]) accumulate(*out[0], n.grad);
                  });
}

Var add_row_broadcast(Var x, Var bias) {
  Graph& g = owner(x, bias);
  return g.record(camkd::add_row_broadcast(x.value(), bias.value()), {x, bias},
                  [](const Graph&, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (out[0]) accumulate(*out[0], n.grad);
                    if (out[1]) {
                      Tensor& gb = *out[1];
                      for (std::size_t i = 0; i < n.grad.rows(); ++i)
                        for (std::size_t j = 0; j < n.grad.cols(); ++j) gb[j] += n.grad(i, j);
                    }
                  });
}

Var relu(Var x) {
  Graph& g = owner(x);
  return g.record(camkd::relu(x.value()), {x},
                  [](const Graph& gr, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (!out[0]) return;
                    const Tensor& xv = parent_value(gr, n, 0);
                    for (std::size_t i = 0; i < xv.size(); ++i)
                      if (xv[i] > 0.0) (*out[0])[i] += n.grad[i];
                  });
}

Var softmax_t(Var z, double tau) {
  Graph& g = owner(z);
  return g.record(camkd::softmax_t(z.value(), tau), {z},
                  [tau](const Graph&, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (!out[0]) return;
                    // dz = s * (g - <g, s>) / tau, row by row.
                    const Tensor& s = n.value;
                    for (std::size_t i = 0; i < s.rows(); ++i) {
                      const auto sr = s.row(i);
                      const auto gr = n.grad.row(i);
                      double dot = 0.0;
                      for (std::size_t j = 0; j < sr.size(); ++j) dot += gr[j] * sr[j];
                      auto dz = out[0]->row(i);
                      for (std::size_t j = 0; j < sr.size(); ++j)
                        dz[j] += sr[j] * (gr[j] - dot) / tau;
                    }
                  });
}

Var log(Var p) {
  Graph& g = owner(p);
  return g.record(camkd::log_clamped(p.value()), {p},
                  [](const Graph& gr, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (!out[0]) return;
                    const Tensor& pv = parent_value(gr, n, 0);
                    for (std::size_t i = 0; i < pv.size(); ++i)
                      if (pv[i] > kLogFloor) (*out[0])[i] += n.grad[i] / pv[i];
                  });
}

Var cross_entropy(Var p, std::span<const int> labels) {
  Graph& g = owner(p);
  std::vector<int> kept(labels.begin(), labels.end());
  Tensor v = camkd::cross_entropy(p.value(), labels);
  return g.record(std::move(v), {p},
                  [kept = std::move(kept)](const Graph& gr, const Graph::Node& n,
                                           std::span<Tensor* const> out) {
                    if (!out[0]) return;
                    const Tensor& pv = parent_value(gr, n, 0);
                    for (std::size_t i = 0; i < kept.size(); ++i) {
                      const auto c = static_cast<std::size_t>(kept[i]);
                      const double pic = pv(i, c);
                      if (pic > kLogFloor) (*out[0])(i, c) -= n.grad[i] / pic;
                    }
                  });
}

Var l2_sq(Var a, Var b) {
  Graph& g = owner(a, b);
  return g.record(camkd::l2_sq(a.value(), b.value()), {a, b},
                  [](const Graph& gr, const Graph::Node& n, std::span<Tensor* const> out) {
                    const Tensor& av = parent_value(gr, n, 0);
                    const Tensor& bv = parent_value(gr, n, 1);
                    for (std::size_t i = 0; i < av.rows(); ++i) {
                      const double gi = 2.0 * n.grad[i];
                      for (std::size_t j = 0; j < av.cols(); ++j) {
                        const double d = gi * (av(i, j) - bv(i, j));
                        if (out[0]) (*out[0])(i, j) += d;
                        if (out[1]) (*out[1])(i, j) -= d;
                      }
                    }
                  });
}

Var row_sum(Var x) {
  Graph& g = owner(x);
  return g.record(camkd::row_sum(x.value()), {x},
                  [](const Graph&, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (!out[0]) return;
                    Tensor& gx = *out[0];
                    for (std::size_t i = 0; i < gx.rows(); ++i)
                      for (auto& v : gx.row(i)) v += n.grad[i];
                  });
}

Var mean(Var x) {
  Graph& g = owner(x);
  return g.record(camkd::mean(x.value()), {x},
                  [](const Graph&, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (!out[0]) return;
                    const double share = n.grad[0] / static_cast<double>(out[0]->size());
                    for (auto& v : out[0]->values()) v += share;
                  });
}

Var avg_pool(Var features, std::size_t spatial) {
  Graph& g = owner(features);
  return g.record(camkd::avg_pool(features.value(), spatial), {features},
                  [spatial](const Graph&, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (!out[0]) return;
                    const std::size_t channels = n.value.cols();
                    Tensor& gf = *out[0];
                    for (std::size_t i = 0; i < gf.rows(); ++i)
                      for (std::size_t s = 0; s < spatial; ++s)
                        for (std::size_t c = 0; c < channels; ++c)
                          gf(i, s * channels + c) += n.grad(i, c) / static_cast<double>(spatial);
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Graph& g = owner(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    owner(parts[0], p);
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row counts differ, " + to_string(parts[0].shape()) +
                           " vs " + to_string(p.shape()));
    }
    cols += p.value().cols();
  }
  Tensor v(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(pv.row(i).begin(), pv.row(i).end(), v.row(i).begin() + static_cast<long>(offset));
    offset += pv.cols();
  }
  return g.record(std::move(v), std::vector<Var>(parts.begin(), parts.end()),
                  [](const Graph& gr, const Graph::Node& n, std::span<Tensor* const> out) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < out.size(); ++k) {
                      const std::size_t w = parent_value(gr, n, k).cols();
                      if (out[k]) {
                        for (std::size_t i = 0; i < n.grad.rows(); ++i)
                          for (std::size_t j = 0; j < w; ++j) (*out[k])(i, j) += n.grad(i, off + j);
                      }
                      off += w;
                    }
                  });
}

Var column(Var x, std::size_t index) {
  Graph& g = owner(x);
  const Tensor& xv = x.value();
  if (index >= xv.cols()) {
    throw IndexError("column: index " + std::to_string(index) + " outside " +
                     to_string(xv.shape()));
  }
  Tensor v(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) v[i] = xv(i, index);
  return g.record(std::move(v), {x},
                  [index](const Graph&, const Graph::Node& n, std::span<Tensor* const> out) {
                    if (!out[0]) return;
                    for (std::size_t i = 0; i < n.grad.rows(); ++i) (*out[0])(i, index) += n.grad[i];
                  });
}

}  // namespace ad

}  // namespace camkd
