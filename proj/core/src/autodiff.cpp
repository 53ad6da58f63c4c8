#include "protoattend/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "protoattend/error.hpp"

namespace protoattend {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MatrixMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MatrixMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

ConstMatrixMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_matrix(const Tensor& t, const char* op, const char* name) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": " + name + " must be a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), false, nullptr, {}, {}});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::parameter(Parameter& param) {
  if (param.grad.size() != param.value.size()) param.zero_grad();
  nodes_.push_back(Node{"parameter", param.value, true, &param, {}, {}});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::variable(Tensor value) {
  nodes_.push_back(Node{"variable", std::move(value), true, nullptr, {}, {}});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

bool Graph::any_requires_grad(std::initializer_list<Var> inputs) const {
  return std::any_of(inputs.begin(), inputs.end(), [&](Var v) { return nodes_[v.id].requires_grad; });
}

Var Graph::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  const bool needs = any_requires_grad(inputs);
  nodes_.push_back(Node{op, std::move(value), needs, nullptr, {}, needs ? std::move(backward) : BackwardFn{}});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::span<double> Graph::grad_slot(Var v) {
  Node& node = nodes_[v.id];
  if (!node.requires_grad) return {};
  if (node.grad.size() != node.value.size()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void Graph::backward(Var loss) {
  if (nodes_[loss.id].value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_string(nodes_[loss.id].value.shape()));
  }
  if (!nodes_[loss.id].requires_grad) return;
  for (auto& node : nodes_) node.grad.clear();
  nodes_[loss.id].grad.assign(1, 1.0);

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.grad.empty()) continue;
    if (node.backward) node.backward(*this, Var{static_cast<std::uint32_t>(id)});
    if (node.param != nullptr) {
      auto& target = node.param->grad;
      for (std::size_t k = 0; k < target.size(); ++k) target[k] += node.grad[k];
    }
  }
}

namespace ops {

Var linear(Graph& g, Var x, Var weight, Var bias) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(weight);
  const Tensor& bv = g.value(bias);
  require_matrix(xv, "linear", "input");
  require_matrix(wv, "linear", "weight");
  if (xv.cols() != wv.rows() || bv.size() != wv.cols()) {
    throw DimensionError("linear: input " + shape_string(xv.shape()) + ", weight " + shape_string(wv.shape()) +
                         ", bias " + shape_string(bv.shape()));
  }
  const std::size_t batch = xv.rows();
  const std::size_t out_dim = wv.cols();
  Tensor out({batch, out_dim});
  auto y = as_matrix(out.data(), batch, out_dim);
  if (batch > 0) {
    y.noalias() = as_matrix(xv) * as_matrix(wv);
    auto b = as_matrix(bv.data(), 1, out_dim);
    y.rowwise() += b.row(0);
  }

  return g.record("linear", std::move(out), {x, weight, bias}, [=](Graph& graph, Var self) {
    auto upstream = as_matrix(graph.grad(self), batch, out_dim);
    const Tensor& xval = graph.value(x);
    const Tensor& wval = graph.value(weight);
    if (auto dx = graph.grad_slot(x); !dx.empty()) {
      as_matrix(dx, batch, wval.rows()).noalias() += upstream * as_matrix(wval).transpose();
    }
    if (auto dw = graph.grad_slot(weight); !dw.empty()) {
      as_matrix(dw, wval.rows(), out_dim).noalias() += as_matrix(xval).transpose() * upstream;
    }
    if (auto db = graph.grad_slot(bias); !db.empty()) {
      as_matrix(db, 1, out_dim) += upstream.colwise().sum();
    }
  });
}

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_matrix(av, "matmul", "lhs");
  require_matrix(bv, "matmul", "rhs");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_string(av.shape()) + " * " + shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  if (m > 0 && n > 0) as_matrix(out.data(), m, n).noalias() = as_matrix(av) * as_matrix(bv);

  return g.record("matmul", std::move(out), {a, b}, [=](Graph& graph, Var self) {
    auto upstream = as_matrix(graph.grad(self), m, n);
    if (auto da = graph.grad_slot(a); !da.empty()) {
      as_matrix(da, m, k).noalias() += upstream * as_matrix(graph.value(b)).transpose();
    }
    if (auto db = graph.grad_slot(b); !db.empty()) {
      as_matrix(db, k, n).noalias() += as_matrix(graph.value(a)).transpose() * upstream;
    }
  });
}

Var matmul_nt(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_matrix(av, "matmul_nt", "lhs");
  require_matrix(bv, "matmul_nt", "rhs");
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul_nt: " + shape_string(av.shape()) + " * " + shape_string(bv.shape()) + "^T");
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  if (m > 0 && n > 0) as_matrix(out.data(), m, n).noalias() = as_matrix(av) * as_matrix(bv).transpose();

  return g.record("matmul_nt", std::move(out), {a, b}, [=](Graph& graph, Var self) {
    auto upstream = as_matrix(graph.grad(self), m, n);
    if (auto da = graph.grad_slot(a); !da.empty()) {
      as_matrix(da, m, k).noalias() += upstream * as_matrix(graph.value(b));
    }
    if (auto db = graph.grad_slot(b); !db.empty()) {
      as_matrix(db, n, k).noalias() += upstream.transpose() * as_matrix(graph.value(a));
    }
  });
}

Var relu(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  Tensor out(xv.shape());
  for (std::size_t k = 0; k < xv.size(); ++k) out[k] = xv[k] > 0.0 ? xv[k] : 0.0;

  return g.record("relu", std::move(out), {x}, [=](Graph& graph, Var self) {
    auto upstream = graph.grad(self);
    auto dx = graph.grad_slot(x);
    const Tensor& input = graph.value(x);
    for (std::size_t k = 0; k < dx.size(); ++k) {
      if (input[k] > 0.0) dx[k] += upstream[k];
    }
  });
}

Var layer_norm(Graph& g, Var x, Var gain, Var bias) {
  const Tensor& xv = g.value(x);
  const Tensor& gv = g.value(gain);
  const Tensor& bv = g.value(bias);
  require_matrix(xv, "layer_norm", "input");
  const std::size_t rows = xv.rows(), n = xv.cols();
  if (n == 0 || gv.size() != n || bv.size() != n) {
    throw DimensionError("layer_norm: input " + shape_string(xv.shape()) + ", gain " + shape_string(gv.shape()) +
                         ", bias " + shape_string(bv.shape()));
  }
  // Normalized values and inverse standard deviations are kept for backward.
  std::vector<double> normalized(xv.size());
  std::vector<double> inv_std(rows);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = xv.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    for (std::size_t j = 0; j < n; ++j) {
      const double xhat = (row[j] - mean) * inv_std[i];
      normalized[i * n + j] = xhat;
      out(i, j) = xhat * gv[j] + bv[j];
    }
  }

  return g.record("layer_norm", std::move(out), {x, gain, bias},
                  [=, normalized = std::move(normalized), inv_std = std::move(inv_std)](Graph& graph, Var self) {
                    auto upstream = graph.grad(self);
                    const Tensor& gain_value = graph.value(gain);
                    auto dgain = graph.grad_slot(gain);
                    auto dbias = graph.grad_slot(bias);
                    auto dx = graph.grad_slot(x);
                    for (std::size_t i = 0; i < rows; ++i) {
                      double sum_dxhat = 0.0;
                      double sum_dxhat_xhat = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double up = upstream[i * n + j];
                        const double xhat = normalized[i * n + j];
                        if (!dgain.empty()) dgain[j] += up * xhat;
                        if (!dbias.empty()) dbias[j] += up;
                        const double dxhat = up * gain_value[j];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                      }
                      if (dx.empty()) continue;
                      const double inv_n = 1.0 / static_cast<double>(n);
                      for (std::size_t j = 0; j < n; ++j) {
                        const double dxhat = upstream[i * n + j] * gain_value[j];
                        const double xhat = normalized[i * n + j];
                        dx[i * n + j] += inv_std[i] * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
                      }
                    }
                  });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = av[k] + bv[k];
  return g.record("add", std::move(out), {a, b}, [=](Graph& graph, Var self) {
    auto upstream = graph.grad(self);
    for (Var input : {a, b}) {
      auto d = graph.grad_slot(input);
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += upstream[k];
    }
  });
}

Var scale(Graph& g, Var x, double factor) {
  const Tensor& xv = g.value(x);
  Tensor out(xv.shape());
  for (std::size_t k = 0; k < xv.size(); ++k) out[k] = factor * xv[k];
  return g.record("scale", std::move(out), {x}, [=](Graph& graph, Var self) {
    auto upstream = graph.grad(self);
    auto d = graph.grad_slot(x);
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += factor * upstream[k];
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = av[k] * bv[k];
  return g.record("mul", std::move(out), {a, b}, [=](Graph& graph, Var self) {
    auto upstream = graph.grad(self);
    if (auto da = graph.grad_slot(a); !da.empty()) {
      const Tensor& other = graph.value(b);
      for (std::size_t k = 0; k < da.size(); ++k) da[k] += upstream[k] * other[k];
    }
    if (auto db = graph.grad_slot(b); !db.empty()) {
      const Tensor& other = graph.value(a);
      for (std::size_t k = 0; k < db.size(); ++k) db[k] += upstream[k] * other[k];
    }
  });
}

Var sum(Graph& g, Var x) {
  double total = 0.0;
  for (double v : g.value(x).data()) total += v;
  return g.record("sum", Tensor::scalar(total), {x}, [=](Graph& graph, Var self) {
    const double upstream = graph.grad(self)[0];
    auto d = graph.grad_slot(x);
    for (double& v : d) v += upstream;
  });
}

Var lerp(Graph& g, Var a, Var b, double t) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "lerp");
  Tensor out(av.shape());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = (1.0 - t) * av[k] + t * bv[k];
  return g.record("lerp", std::move(out), {a, b}, [=](Graph& graph, Var self) {
    auto upstream = graph.grad(self);
    if (auto da = graph.grad_slot(a); !da.empty()) {
      for (std::size_t k = 0; k < da.size(); ++k) da[k] += (1.0 - t) * upstream[k];
    }
    if (auto db = graph.grad_slot(b); !db.empty()) {
      for (std::size_t k = 0; k < db.size(); ++k) db[k] += t * upstream[k];
    }
  });
}

Var slice_rows(Graph& g, Var x, std::size_t begin, std::size_t end) {
  Tensor out = g.value(x).slice_rows(begin, end);
  const std::size_t offset = begin * g.value(x).cols();
  return g.record("slice_rows", std::move(out), {x}, [=](Graph& graph, Var self) {
    auto upstream = graph.grad(self);
    auto d = graph.grad_slot(x);
    for (std::size_t k = 0; k < upstream.size(); ++k) d[offset + k] += upstream[k];
  });
}

Var normalize_rows(Graph& g, Var scores, Normalization normalization) {
  Tensor out = protoattend::normalize_rows(g.value(scores), normalization);
  const std::size_t rows = out.rows(), cols = out.cols();
  return g.record("normalize_rows", std::move(out), {scores}, [=](Graph& graph, Var self) {
    auto upstream = graph.grad(self);
    auto d = graph.grad_slot(scores);
    const Tensor& p = graph.value(self);
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t base = i * cols;
      if (normalization == Normalization::Softmax) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += p[base + j] * upstream[base + j];
        for (std::size_t j = 0; j < cols; ++j) d[base + j] += p[base + j] * (upstream[base + j] - dot);
      } else {
        // The forward support is exactly the set of positive outputs.
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t j = 0; j < cols; ++j) {
          if (p[base + j] > 0.0) {
            total += upstream[base + j];
            ++count;
          }
        }
        const double mean = total / static_cast<double>(count);
        for (std::size_t j = 0; j < cols; ++j) {
          if (p[base + j] > 0.0) d[base + j] += upstream[base + j] - mean;
        }
      }
    }
  });
}

Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> labels) {
  const Tensor& lv = g.value(logits);
  const double loss = protoattend::softmax_cross_entropy(lv, labels);
  std::vector<int> targets(labels.begin(), labels.end());
  return g.record("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                  [=, targets = std::move(targets)](Graph& graph, Var self) {
                    const double upstream = graph.grad(self)[0];
                    const Tensor& values = graph.value(logits);
                    auto d = graph.grad_slot(logits);
                    const std::size_t batch = values.rows(), classes = values.cols();
                    const double factor = upstream / static_cast<double>(batch);
                    std::vector<double> probs(classes);
                    for (std::size_t i = 0; i < batch; ++i) {
                      softmax_into(values.row(i), probs);
                      probs[static_cast<std::size_t>(targets[i])] -= 1.0;
                      for (std::size_t c = 0; c < classes; ++c) d[i * classes + c] += factor * probs[c];
                    }
                  });
}

Var entropy_sparsity(Graph& g, Var weights, double eps) {
  const double value = protoattend::entropy_sparsity(g.value(weights), eps);
  return g.record("entropy_sparsity", Tensor::scalar(value), {weights}, [=](Graph& graph, Var self) {
    const Tensor& p = graph.value(weights);
    const double factor = graph.grad(self)[0] / static_cast<double>(p.rows());
    auto d = graph.grad_slot(weights);
    for (std::size_t k = 0; k < p.size(); ++k) {
      d[k] -= factor * (std::log(p[k] + eps) + p[k] / (p[k] + eps));
    }
  });
}

Var label_agreement_loss(Graph& g, Var weights, std::span<const int> candidate_labels, std::span<const int> labels) {
  const Tensor& p = g.value(weights);
  if (p.rows() != labels.size() || p.cols() != candidate_labels.size()) {
    throw DimensionError("label agreement: weights " + shape_string(p.shape()) + " with " +
                         std::to_string(labels.size()) + " labels and " + std::to_string(candidate_labels.size()) +
                         " candidate labels");
  }
  const std::size_t batch = p.rows(), cols = p.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (candidate_labels[j] == labels[i]) total += p(i, j);
    }
  }
  const double value = batch ? -total / static_cast<double>(batch) : 0.0;
  std::vector<int> cand(candidate_labels.begin(), candidate_labels.end());
  std::vector<int> targets(labels.begin(), labels.end());
  return g.record("label_agreement_loss", Tensor::scalar(value), {weights},
                  [=, cand = std::move(cand), targets = std::move(targets)](Graph& graph, Var self) {
                    const double factor = graph.grad(self)[0] / static_cast<double>(batch);
                    auto d = graph.grad_slot(weights);
                    for (std::size_t i = 0; i < batch; ++i) {
                      for (std::size_t j = 0; j < cols; ++j) {
                        if (cand[j] == targets[i]) d[i * cols + j] -= factor;
                      }
                    }
                  });
}

}  // namespace ops
}  // namespace protoattend
