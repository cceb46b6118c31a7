// Copyright 2026 the iasr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iasr/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace iasr {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var Tape::push(Mat value, bool requires_grad, std::function<void()> pull) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }
  n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::at(Var v) {
  if (v.i < 0 || v.i >= static_cast<int>(nodes_.size())) {
    throw std::out_of_range("Var does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.i)];
}

const Tape::Node& Tape::at(Var v) const {
  if (v.i < 0 || v.i >= static_cast<int>(nodes_.size())) {
    throw std::out_of_range("Var does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.i)];
}

const Mat& Tape::value(Var v) const { return at(v).value; }

const Mat& Tape::grad(Var v) const {
  const Node& n = at(v);
  if (!n.requires_grad) {
    throw std::logic_error("grad requested for a non-differentiable node");
  }
  return n.grad;
}

Var Tape::leaf(const Mat& value, bool requires_grad) {
  return push(value, requires_grad);
}

Var Tape::matmul(Var a, Var b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.value.cols() != nb.value.rows()) {
    throw std::invalid_argument("matmul shape mismatch");
  }
  const bool rg = na.requires_grad || nb.requires_grad;
  Mat out = na.value * nb.value;
  Var v = push(std::move(out), rg, {});
  if (rg) {
    at(v).pull = [this, a, b, v]() {
      const Mat& g = nodes_[v.i].grad;
      if (nodes_[a.i].requires_grad) {
        nodes_[a.i].grad.noalias() += g * nodes_[b.i].value.transpose();
      }
      if (nodes_[b.i].requires_grad) {
        nodes_[b.i].grad.noalias() += nodes_[a.i].value.transpose() * g;
      }
    };
  }
  return v;
}

Var Tape::add(Var a, Var b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.value.rows() != nb.value.rows() ||
      na.value.cols() != nb.value.cols()) {
    throw std::invalid_argument("add shape mismatch");
  }
  const bool rg = na.requires_grad || nb.requires_grad;
  Var v = push(na.value + nb.value, rg, {});
  if (rg) {
    at(v).pull = [this, a, b, v]() {
      const Mat& g = nodes_[v.i].grad;
      if (nodes_[a.i].requires_grad) {
        nodes_[a.i].grad += g;
      }
      if (nodes_[b.i].requires_grad) {
        nodes_[b.i].grad += g;
      }
    };
  }
  return v;
}

Var Tape::add_rowvec(Var a, Var row) {
  const Node& na = at(a);
  const Node& nr = at(row);
  if (nr.value.rows() != 1 || nr.value.cols() != na.value.cols()) {
    throw std::invalid_argument("add_rowvec expects a 1 x cols(a) vector");
  }
  const bool rg = na.requires_grad || nr.requires_grad;
  Mat out = na.value.rowwise() + nr.value.row(0);
  Var v = push(std::move(out), rg, {});
  if (rg) {
    at(v).pull = [this, a, row, v]() {
      const Mat& g = nodes_[v.i].grad;
      if (nodes_[a.i].requires_grad) {
        nodes_[a.i].grad += g;
      }
      if (nodes_[row.i].requires_grad) {
        nodes_[row.i].grad.row(0) += g.colwise().sum();
      }
    };
  }
  return v;
}

Var Tape::scale(Var a, double s) {
  const Node& na = at(a);
  const bool rg = na.requires_grad;
  Var v = push(na.value * s, rg, {});
  if (rg) {
    at(v).pull = [this, a, v, s]() {
      nodes_[a.i].grad += nodes_[v.i].grad * s;
    };
  }
  return v;
}

Var Tape::hadamard(Var a, Var b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.value.rows() != nb.value.rows() ||
      na.value.cols() != nb.value.cols()) {
    throw std::invalid_argument("hadamard shape mismatch");
  }
  const bool rg = na.requires_grad || nb.requires_grad;
  Var v = push(na.value.cwiseProduct(nb.value), rg, {});
  if (rg) {
    at(v).pull = [this, a, b, v]() {
      const Mat& g = nodes_[v.i].grad;
      if (nodes_[a.i].requires_grad) {
        nodes_[a.i].grad += g.cwiseProduct(nodes_[b.i].value);
      }
      if (nodes_[b.i].requires_grad) {
        nodes_[b.i].grad += g.cwiseProduct(nodes_[a.i].value);
      }
    };
  }
  return v;
}

Var Tape::gelu(Var a) {
  const Node& na = at(a);
  const Mat& x = na.value;
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double xv = x(r, c);
      const double u = kGeluC * (xv + kGeluA * xv * xv * xv);
      out(r, c) = 0.5 * xv * (1.0 + std::tanh(u));
    }
  }
  const bool rg = na.requires_grad;
  Var v = push(std::move(out), rg, {});
  if (rg) {
    at(v).pull = [this, a, v]() {
      const Mat& g = nodes_[v.i].grad;
      const Mat& x = nodes_[a.i].value;
      Mat& ga = nodes_[a.i].grad;
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
          const double xv = x(r, c);
          const double u = kGeluC * (xv + kGeluA * xv * xv * xv);
          const double t = std::tanh(u);
          const double du = kGeluC * (1.0 + 3.0 * kGeluA * xv * xv);
          const double d = 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du;
          ga(r, c) += g(r, c) * d;
        }
      }
    };
  }
  return v;
}

Var Tape::softmax_rows(Var a) {
  const Node& na = at(a);
  const Mat& x = na.value;
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    Eigen::RowVectorXd e = (x.row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  const bool rg = na.requires_grad;
  Var v = push(std::move(out), rg, {});
  if (rg) {
    at(v).pull = [this, a, v]() {
      const Mat& g = nodes_[v.i].grad;
      const Mat& s = nodes_[v.i].value;
      Mat& ga = nodes_[a.i].grad;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double dot = g.row(r).dot(s.row(r));
        ga.row(r) += (s.row(r).array() * (g.row(r).array() - dot)).matrix();
      }
    };
  }
  return v;
}

Var Tape::log_softmax_rows(Var a) {
  const Node& na = at(a);
  const Mat& x = na.value;
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  const bool rg = na.requires_grad;
  Var v = push(std::move(out), rg, {});
  if (rg) {
    at(v).pull = [this, a, v]() {
      const Mat& g = nodes_[v.i].grad;
      const Mat& ls = nodes_[v.i].value;
      Mat& ga = nodes_[a.i].grad;
      for (Eigen::Index r = 0; r < ls.rows(); ++r) {
        const double gsum = g.row(r).sum();
        ga.row(r) += g.row(r) - (ls.row(r).array().exp() * gsum).matrix();
      }
    };
  }
  return v;
}

Var Tape::layernorm(Var a, Var gamma, Var beta, double eps) {
  const Node& na = at(a);
  const Node& ng = at(gamma);
  const Node& nb = at(beta);
  const Eigen::Index cols = na.value.cols();
  if (ng.value.rows() != 1 || ng.value.cols() != cols || nb.value.rows() != 1 ||
      nb.value.cols() != cols) {
    throw std::invalid_argument("layernorm gamma/beta must be 1 x cols(a)");
  }
  const Mat& x = na.value;
  Mat xhat(x.rows(), cols);
  Eigen::VectorXd inv_sd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var =
        (x.row(r).array() - mu).square().sum() / static_cast<double>(cols);
    inv_sd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_sd(r);
  }
  Mat out = (xhat.array().rowwise() * ng.value.row(0).array()).rowwise() +
            nb.value.row(0).array();
  const bool rg = na.requires_grad || ng.requires_grad || nb.requires_grad;
  Var v = push(std::move(out), rg, {});
  if (rg) {
    at(v).pull = [this, a, gamma, beta, v, xhat, inv_sd]() {
      const Mat& g = nodes_[v.i].grad;
      const Eigen::Index cols = g.cols();
      if (nodes_[gamma.i].requires_grad) {
        nodes_[gamma.i].grad.row(0) +=
            g.cwiseProduct(xhat).colwise().sum();
      }
      if (nodes_[beta.i].requires_grad) {
        nodes_[beta.i].grad.row(0) += g.colwise().sum();
      }
      if (nodes_[a.i].requires_grad) {
        Mat& ga = nodes_[a.i].grad;
        const Eigen::RowVectorXd gam = nodes_[gamma.i].value.row(0);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gam);
          const double m1 = dxhat.mean();
          const double m2 =
              dxhat.cwiseProduct(xhat.row(r)).sum() / static_cast<double>(cols);
          ga.row(r) += inv_sd(r) * (dxhat.array() - m1 -
                                    xhat.row(r).array() * m2)
                           .matrix();
        }
      }
    };
  }
  return v;
}

Var Tape::transpose(Var a) {
  const Node& na = at(a);
  const bool rg = na.requires_grad;
  Var v = push(na.value.transpose(), rg, {});
  if (rg) {
    at(v).pull = [this, a, v]() {
      nodes_[a.i].grad += nodes_[v.i].grad.transpose();
    };
  }
  return v;
}

Var Tape::slice_cols(Var a, int start, int n) {
  const Node& na = at(a);
  if (start < 0 || n < 1 || start + n > na.value.cols()) {
    throw std::invalid_argument("slice_cols out of range");
  }
  const bool rg = na.requires_grad;
  Var v = push(na.value.middleCols(start, n), rg, {});
  if (rg) {
    at(v).pull = [this, a, v, start, n]() {
      nodes_[a.i].grad.middleCols(start, n) += nodes_[v.i].grad;
    };
  }
  return v;
}

Var Tape::concat_cols(Var a, Var b) {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.value.rows() != nb.value.rows()) {
    throw std::invalid_argument("concat_cols row mismatch");
  }
  Mat out(na.value.rows(), na.value.cols() + nb.value.cols());
  out << na.value, nb.value;
  const bool rg = na.requires_grad || nb.requires_grad;
  Var v = push(std::move(out), rg, {});
  if (rg) {
    const int ca = static_cast<int>(na.value.cols());
    const int cb = static_cast<int>(nb.value.cols());
    at(v).pull = [this, a, b, v, ca, cb]() {
      const Mat& g = nodes_[v.i].grad;
      if (nodes_[a.i].requires_grad) {
        nodes_[a.i].grad += g.leftCols(ca);
      }
      if (nodes_[b.i].requires_grad) {
        nodes_[b.i].grad += g.rightCols(cb);
      }
    };
  }
  return v;
}

Var Tape::gather_rows(Var table, const std::vector<int>& ids) {
  const Node& nt = at(table);
  if (ids.empty()) {
    throw std::invalid_argument("gather_rows needs at least one row");
  }
  for (int id : ids) {
    if (id < 0 || id >= nt.value.rows()) {
      throw std::out_of_range("gather_rows index out of range");
    }
  }
  Mat out(static_cast<Eigen::Index>(ids.size()), nt.value.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = nt.value.row(ids[r]);
  }
  const bool rg = nt.requires_grad;
  Var v = push(std::move(out), rg, {});
  if (rg) {
    at(v).pull = [this, table, v, ids]() {
      const Mat& g = nodes_[v.i].grad;
      Mat& gt = nodes_[table.i].grad;
      for (std::size_t r = 0; r < ids.size(); ++r) {
        gt.row(ids[r]) += g.row(static_cast<Eigen::Index>(r));
      }
    };
  }
  return v;
}

Var Tape::avg_pool_rows(Var a, int factor) {
  const Node& na = at(a);
  if (factor < 1) {
    throw std::invalid_argument("pool factor must be >= 1");
  }
  const Eigen::Index rows = na.value.rows();
  const Eigen::Index out_rows = (rows + factor - 1) / factor;
  Mat out(out_rows, na.value.cols());
  for (Eigen::Index r = 0; r < out_rows; ++r) {
    const Eigen::Index start = r * factor;
    const Eigen::Index len = std::min<Eigen::Index>(factor, rows - start);
    out.row(r) = na.value.middleRows(start, len).colwise().mean();
  }
  const bool rg = na.requires_grad;
  Var v = push(std::move(out), rg, {});
  if (rg) {
    at(v).pull = [this, a, v, factor]() {
      const Mat& g = nodes_[v.i].grad;
      Mat& ga = nodes_[a.i].grad;
      const Eigen::Index rows = ga.rows();
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const Eigen::Index start = r * factor;
        const Eigen::Index len = std::min<Eigen::Index>(factor, rows - start);
        for (Eigen::Index k = 0; k < len; ++k) {
          ga.row(start + k) += g.row(r) / static_cast<double>(len);
        }
      }
    };
  }
  return v;
}

Var Tape::sum_all(Var a) {
  const Node& na = at(a);
  Mat out(1, 1);
  out(0, 0) = na.value.sum();
  const bool rg = na.requires_grad;
  Var v = push(std::move(out), rg, {});
  if (rg) {
    at(v).pull = [this, a, v]() {
      nodes_[a.i].grad.array() += nodes_[v.i].grad(0, 0);
    };
  }
  return v;
}

Var Tape::masked_mean_nll(Var log_probs, const std::vector<int>& targets,
                          const std::vector<double>& mask) {
  const Node& nl = at(log_probs);
  const std::size_t rows = static_cast<std::size_t>(nl.value.rows());
  if (targets.size() != rows || mask.size() != rows) {
    throw std::invalid_argument("masked_mean_nll length mismatch");
  }
  double denom = 0.0;
  for (double m : mask) {
    if (m < 0.0) {
      throw std::invalid_argument("mask entries must be >= 0");
    }
    denom += m;
  }
  if (!(denom > 0.0)) {
    throw std::invalid_argument("mask must select at least one position");
  }
  double nll = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || targets[r] >= nl.value.cols()) {
      throw std::out_of_range("nll target out of vocab range");
    }
    nll -= mask[r] * nl.value(static_cast<Eigen::Index>(r), targets[r]);
  }
  Mat out(1, 1);
  out(0, 0) = nll / denom;
  const bool rg = nl.requires_grad;
  Var v = push(std::move(out), rg, {});
  if (rg) {
    at(v).pull = [this, log_probs, v, targets, mask, denom]() {
      const double g = nodes_[v.i].grad(0, 0);
      Mat& gl = nodes_[log_probs.i].grad;
      for (std::size_t r = 0; r < targets.size(); ++r) {
        gl(static_cast<Eigen::Index>(r), targets[r]) -=
            g * mask[r] / denom;
      }
    };
  }
  return v;
}

void Tape::backward(Var root) {
  Node& r = at(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw std::invalid_argument("backward root must be a 1 x 1 scalar");
  }
  if (!r.requires_grad) {
    throw std::logic_error("backward root does not require grad");
  }
  r.grad(0, 0) = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.pull) {
      n.pull();
    }
  }
}

}  // namespace iasr
