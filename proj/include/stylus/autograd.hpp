#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "stylus/common.hpp"

namespace stylus::ag {

// Reverse-mode autodiff over dense double matrices. A Tape owns the nodes of
// one forward pass; backward() walks them in reverse creation order. Node
// closures reference parents by index so the tape stays movable.

using Mat = Eigen::MatrixXd;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Var leaf(Mat value, bool requires_grad);
  Var constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& value(Var v) const { return node(v.id).value; }
  // Gradient accumulated for v after backward(); zero matrix if untouched.
  Mat grad_of(Var v) const;
  bool requires_grad(Var v) const { return node(v.id).requires_grad; }

  // ---- elementwise ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_const(Var a, Mat c);
  Var mul_const(Var a, Mat c);
  Var tanh_(Var a);
  Var sigmoid_(Var a);
  Var relu_(Var a);
  Var gelu_(Var a);
  // 1/sqrt(a + eps), elementwise
  Var rsqrt(Var a, double eps);

  // ---- broadcasting: (N x d) with (1 x d) rows or (N x 1) cols ----
  Var add_rowvec(Var a, Var row);
  Var mul_rowvec(Var a, Var row);
  Var sub_rowvec(Var a, Var row);
  Var add_colvec(Var a, Var col);
  Var mul_colvec(Var a, Var col);
  Var sub_colvec(Var a, Var col);

  // ---- linear algebra ----
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var matmul_tn(Var a, Var b);  // a^T * b

  // ---- shape ----
  Var rows(Var a, std::vector<int> idx);  // gather; backward scatter-adds
  Var slice_rows(Var a, int start, int len);
  Var block(Var a, int r0, int nr, int c0, int nc);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);

  // ---- reductions ----
  Var row_mean(Var a);  // N x d -> N x 1
  Var col_mean(Var a);  // N x d -> 1 x d
  Var col_max(Var a);   // N x d -> 1 x d, first maximum wins
  Var mean_all(Var a);  // -> 1 x 1
  Var sum_all(Var a);

  // ---- softmax / losses ----
  Var softmax_rows(Var a);
  // Per-row cross entropy of logits against integer targets: N x V -> N x 1.
  Var cross_entropy_rows(Var logits, std::vector<int> targets);

  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool grad_live = false;  // grad allocated and touched
    std::function<void(Tape&)> back;
  };

  Node& node(int id) {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      fail(Errc::numeric, "tape node id out of range");
    return nodes_[static_cast<size_t>(id)];
  }
  const Node& node(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      fail(Errc::numeric, "tape node id out of range");
    return nodes_[static_cast<size_t>(id)];
  }

  Mat& acc(int id);  // grad accumulator, allocated zero on first touch
  Var push(Mat value, bool requires_grad, std::function<void(Tape&)> back);

  std::vector<Node> nodes_;
};

// ---- composite helpers ----

// Row-wise layer normalization with learned gain/bias (1 x d).
Var layernorm_rows(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);

// Column-wise (over batch) normalization with learned gain/bias; returns the
// normalized output and writes batch mean/var values for running-stat updates.
struct BatchNormOut {
  Var out;
  Mat batch_mean;
  Mat batch_var;
};
BatchNormOut batchnorm_train(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);
Var batchnorm_eval(Tape& t, Var x, Var gain, Var bias, const Mat& run_mean, const Mat& run_var,
                   double eps = 1e-5);

// [last row; column max; column mean] of a T x d matrix -> 1 x 3d.
Var concat_pool(Tape& t, Var hidden);

// Numerically stable softmax of a plain vector (no tape).
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace stylus::ag
