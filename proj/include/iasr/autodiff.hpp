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

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace iasr {

using Mat = Eigen::MatrixXd;

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  int i = -1;
};

// Reverse-mode tape over dense matrices. Nodes are appended in
// evaluation order, so running their pullbacks in reverse creation
// order is a valid topological sweep. One tape per training step; it
// is not reusable after backward().
class Tape {
 public:
  Tape() = default;
  // Pullbacks capture the tape pointer, so the tape must not move.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(const Mat& value, bool requires_grad = true);
  Var constant(const Mat& value) { return leaf(value, false); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // Adds a 1 x C row vector to every row of a.
  Var add_rowvec(Var a, Var row);
  Var scale(Var a, double s);
  Var hadamard(Var a, Var b);
  Var gelu(Var a);
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var layernorm(Var a, Var gamma, Var beta, double eps = 1e-5);
  Var transpose(Var a);
  Var slice_cols(Var a, int start, int n);
  Var concat_cols(Var a, Var b);
  Var gather_rows(Var table, const std::vector<int>& ids);
  // Means over consecutive groups of `factor` rows; a short final
  // group is averaged over its own size.
  Var avg_pool_rows(Var a, int factor);
  Var sum_all(Var a);
  // Scalar -(sum_i mask_i * logp(i, target_i)) / sum_i mask_i.
  Var masked_mean_nll(Var log_probs, const std::vector<int>& targets,
                      const std::vector<double>& mask);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Seeds the (1 x 1) root with gradient 1 and sweeps the tape.
  void backward(Var root);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void()> pull;
  };

  Var push(Mat value, bool requires_grad, std::function<void()> pull = {});
  Node& at(Var v);
  const Node& at(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace iasr
