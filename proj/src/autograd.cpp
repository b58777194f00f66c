#include "stylus/autograd.hpp"

#include <cmath>

namespace stylus::ag {

Var Tape::push(Mat value, bool requires_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = requires_grad ? std::move(back) : nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Mat value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

Mat& Tape::acc(int id) {
  Node& n = node(id);
  if (!n.grad_live) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad_live = true;
  }
  return n.grad;
}

Mat Tape::grad_of(Var v) const {
  const Node& n = node(v.id);
  if (n.grad_live) return n.grad;
  return Mat::Zero(n.value.rows(), n.value.cols());
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss.id);
  if (ln.value.rows() != 1 || ln.value.cols() != 1)
    fail(Errc::numeric, "backward target must be a scalar node");
  acc(loss.id).setOnes();
  for (int id = loss.id; id >= 0; id--) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.requires_grad && n.grad_live && n.back) n.back(*this);
  }
}

static void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(Errc::numeric, std::string(op) + ": shape mismatch");
}

// Convention used by every op below: compute the result eagerly, then attach
// a closure that reads the result node's accumulated grad and scatters into
// the parents that require grad.

#define RESULT_GRAD const Mat& g = t.node(r.id).grad

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  bool rg = requires_grad(a) || requires_grad(b);
  Var r = push(value(a) + value(b), rg, nullptr);
  if (rg)
    node(r.id).back = [a, b, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a)) t.acc(a.id) += g;
      if (t.requires_grad(b)) t.acc(b.id) += g;
    };
  return r;
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  bool rg = requires_grad(a) || requires_grad(b);
  Var r = push(value(a) - value(b), rg, nullptr);
  if (rg)
    node(r.id).back = [a, b, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a)) t.acc(a.id) += g;
      if (t.requires_grad(b)) t.acc(b.id) -= g;
    };
  return r;
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(value(a), value(b), "mul");
  bool rg = requires_grad(a) || requires_grad(b);
  Var r = push(value(a).cwiseProduct(value(b)), rg, nullptr);
  if (rg)
    node(r.id).back = [a, b, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a)) t.acc(a.id) += g.cwiseProduct(t.value(b));
      if (t.requires_grad(b)) t.acc(b.id) += g.cwiseProduct(t.value(a));
    };
  return r;
}

Var Tape::scale(Var a, double s) {
  bool rg = requires_grad(a);
  Var r = push(value(a) * s, rg, nullptr);
  if (rg)
    node(r.id).back = [a, r, s](Tape& t) {
      RESULT_GRAD;
      t.acc(a.id) += g * s;
    };
  return r;
}

Var Tape::add_const(Var a, Mat c) {
  check_same_shape(value(a), c, "add_const");
  bool rg = requires_grad(a);
  Var r = push(value(a) + c, rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      t.acc(a.id) += g;
    };
  return r;
}

Var Tape::mul_const(Var a, Mat c) {
  check_same_shape(value(a), c, "mul_const");
  bool rg = requires_grad(a);
  auto mask = std::make_shared<Mat>(std::move(c));
  Var r = push(value(a).cwiseProduct(*mask), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r, mask](Tape& t) {
      RESULT_GRAD;
      t.acc(a.id) += g.cwiseProduct(*mask);
    };
  return r;
}

Var Tape::tanh_(Var a) {
  bool rg = requires_grad(a);
  Var r = push(value(a).array().tanh().matrix(), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      const Mat& y = t.value(r);
      t.acc(a.id).array() += g.array() * (1.0 - y.array().square());
    };
  return r;
}

Var Tape::sigmoid_(Var a) {
  bool rg = requires_grad(a);
  Mat y = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
  Var r = push(std::move(y), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      const Mat& y = t.value(r);
      t.acc(a.id).array() += g.array() * y.array() * (1.0 - y.array());
    };
  return r;
}

Var Tape::relu_(Var a) {
  bool rg = requires_grad(a);
  Var r = push(value(a).cwiseMax(0.0), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      const Mat& x = t.value(a);
      t.acc(a.id).array() += g.array() * (x.array() > 0.0).cast<double>();
    };
  return r;
}

Var Tape::gelu_(Var a) {
  bool rg = requires_grad(a);
  const Mat& x = value(a);
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); i++) {
    double v = x.data()[i];
    y.data()[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  }
  Var r = push(std::move(y), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      const Mat& x = t.value(a);
      Mat& ga = t.acc(a.id);
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (Eigen::Index i = 0; i < x.size(); i++) {
        double v = x.data()[i];
        double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        ga.data()[i] += g.data()[i] * (cdf + v * pdf);
      }
    };
  return r;
}

Var Tape::rsqrt(Var a, double eps) {
  bool rg = requires_grad(a);
  Mat y = (value(a).array() + eps).rsqrt().matrix();
  Var r = push(std::move(y), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      const Mat& y = t.value(r);
      t.acc(a.id).array() += g.array() * (-0.5) * y.array().cube();
    };
  return r;
}

// ---- broadcasting ----

static void check_rowvec(const Mat& a, const Mat& row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols())
    fail(Errc::numeric, std::string(op) + ": row vector shape mismatch");
}
static void check_colvec(const Mat& a, const Mat& col, const char* op) {
  if (col.cols() != 1 || col.rows() != a.rows())
    fail(Errc::numeric, std::string(op) + ": column vector shape mismatch");
}

Var Tape::add_rowvec(Var a, Var row) {
  check_rowvec(value(a), value(row), "add_rowvec");
  bool rg = requires_grad(a) || requires_grad(row);
  Mat out = value(a);
  out.rowwise() += value(row).row(0);
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, row, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a)) t.acc(a.id) += g;
      if (t.requires_grad(row)) t.acc(row.id) += g.colwise().sum();
    };
  return r;
}

Var Tape::sub_rowvec(Var a, Var row) {
  check_rowvec(value(a), value(row), "sub_rowvec");
  bool rg = requires_grad(a) || requires_grad(row);
  Mat out = value(a);
  out.rowwise() -= value(row).row(0);
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, row, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a)) t.acc(a.id) += g;
      if (t.requires_grad(row)) t.acc(row.id) -= g.colwise().sum();
    };
  return r;
}

Var Tape::mul_rowvec(Var a, Var row) {
  check_rowvec(value(a), value(row), "mul_rowvec");
  bool rg = requires_grad(a) || requires_grad(row);
  Mat out = value(a).array().rowwise() * value(row).row(0).array();
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, row, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a))
        t.acc(a.id).array() += g.array().rowwise() * t.value(row).row(0).array();
      if (t.requires_grad(row))
        t.acc(row.id) += g.cwiseProduct(t.value(a)).colwise().sum();
    };
  return r;
}

Var Tape::add_colvec(Var a, Var col) {
  check_colvec(value(a), value(col), "add_colvec");
  bool rg = requires_grad(a) || requires_grad(col);
  Mat out = value(a);
  out.colwise() += value(col).col(0);
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, col, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a)) t.acc(a.id) += g;
      if (t.requires_grad(col)) t.acc(col.id) += g.rowwise().sum();
    };
  return r;
}

Var Tape::sub_colvec(Var a, Var col) {
  check_colvec(value(a), value(col), "sub_colvec");
  bool rg = requires_grad(a) || requires_grad(col);
  Mat out = value(a);
  out.colwise() -= value(col).col(0);
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, col, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a)) t.acc(a.id) += g;
      if (t.requires_grad(col)) t.acc(col.id) -= g.rowwise().sum();
    };
  return r;
}

Var Tape::mul_colvec(Var a, Var col) {
  check_colvec(value(a), value(col), "mul_colvec");
  bool rg = requires_grad(a) || requires_grad(col);
  Mat out = value(a).array().colwise() * value(col).col(0).array();
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, col, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a))
        t.acc(a.id).array() += g.array().colwise() * t.value(col).col(0).array();
      if (t.requires_grad(col))
        t.acc(col.id) += g.cwiseProduct(t.value(a)).rowwise().sum();
    };
  return r;
}

// ---- linear algebra ----

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) fail(Errc::numeric, "matmul: inner dim mismatch");
  bool rg = requires_grad(a) || requires_grad(b);
  Var r = push(value(a) * value(b), rg, nullptr);
  if (rg)
    node(r.id).back = [a, b, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a)) t.acc(a.id).noalias() += g * t.value(b).transpose();
      if (t.requires_grad(b)) t.acc(b.id).noalias() += t.value(a).transpose() * g;
    };
  return r;
}

Var Tape::matmul_nt(Var a, Var b) {
  if (value(a).cols() != value(b).cols()) fail(Errc::numeric, "matmul_nt: inner dim mismatch");
  bool rg = requires_grad(a) || requires_grad(b);
  Var r = push(value(a) * value(b).transpose(), rg, nullptr);
  if (rg)
    node(r.id).back = [a, b, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a)) t.acc(a.id).noalias() += g * t.value(b);
      if (t.requires_grad(b)) t.acc(b.id).noalias() += g.transpose() * t.value(a);
    };
  return r;
}

Var Tape::matmul_tn(Var a, Var b) {
  if (value(a).rows() != value(b).rows()) fail(Errc::numeric, "matmul_tn: inner dim mismatch");
  bool rg = requires_grad(a) || requires_grad(b);
  Var r = push(value(a).transpose() * value(b), rg, nullptr);
  if (rg)
    node(r.id).back = [a, b, r](Tape& t) {
      RESULT_GRAD;
      if (t.requires_grad(a)) t.acc(a.id).noalias() += t.value(b) * g.transpose();
      if (t.requires_grad(b)) t.acc(b.id).noalias() += t.value(a) * g;
    };
  return r;
}

// ---- shape ----

Var Tape::rows(Var a, std::vector<int> idx) {
  const Mat& src = value(a);
  for (int i : idx)
    if (i < 0 || i >= src.rows()) fail(Errc::numeric, "rows: index out of range");
  Mat out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (size_t k = 0; k < idx.size(); k++) out.row(static_cast<Eigen::Index>(k)) = src.row(idx[k]);
  bool rg = requires_grad(a);
  auto shared = std::make_shared<std::vector<int>>(std::move(idx));
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r, shared](Tape& t) {
      RESULT_GRAD;
      Mat& ga = t.acc(a.id);
      for (size_t k = 0; k < shared->size(); k++)
        ga.row((*shared)[k]) += g.row(static_cast<Eigen::Index>(k));
    };
  return r;
}

Var Tape::slice_rows(Var a, int start, int len) {
  const Mat& src = value(a);
  if (start < 0 || len < 0 || start + len > src.rows())
    fail(Errc::numeric, "slice_rows: range out of bounds");
  bool rg = requires_grad(a);
  Var r = push(src.middleRows(start, len), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r, start, len](Tape& t) {
      RESULT_GRAD;
      t.acc(a.id).middleRows(start, len) += g;
    };
  return r;
}

Var Tape::block(Var a, int r0, int nr, int c0, int nc) {
  const Mat& src = value(a);
  if (r0 < 0 || c0 < 0 || nr < 0 || nc < 0 || r0 + nr > src.rows() || c0 + nc > src.cols())
    fail(Errc::numeric, "block: range out of bounds");
  bool rg = requires_grad(a);
  Var r = push(Mat(src.block(r0, c0, nr, nc)), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r, r0, nr, c0, nc](Tape& t) {
      RESULT_GRAD;
      t.acc(a.id).block(r0, c0, nr, nc) += g;
    };
  return r;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail(Errc::numeric, "concat_cols: no parts");
  Eigen::Index rows_n = value(parts[0]).rows(), cols_n = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).rows() != rows_n) fail(Errc::numeric, "concat_cols: row mismatch");
    cols_n += value(p).cols();
    rg = rg || requires_grad(p);
  }
  Mat out(rows_n, cols_n);
  Eigen::Index off = 0;
  for (Var p : parts) {
    out.middleCols(off, value(p).cols()) = value(p);
    off += value(p).cols();
  }
  auto ps = std::make_shared<std::vector<Var>>(parts);
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [ps, r](Tape& t) {
      RESULT_GRAD;
      Eigen::Index off = 0;
      for (Var p : *ps) {
        Eigen::Index w = t.value(p).cols();
        if (t.requires_grad(p)) t.acc(p.id) += g.middleCols(off, w);
        off += w;
      }
    };
  return r;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail(Errc::numeric, "concat_rows: no parts");
  Eigen::Index cols_n = value(parts[0]).cols(), rows_n = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).cols() != cols_n) fail(Errc::numeric, "concat_rows: column mismatch");
    rows_n += value(p).rows();
    rg = rg || requires_grad(p);
  }
  Mat out(rows_n, cols_n);
  Eigen::Index off = 0;
  for (Var p : parts) {
    out.middleRows(off, value(p).rows()) = value(p);
    off += value(p).rows();
  }
  auto ps = std::make_shared<std::vector<Var>>(parts);
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [ps, r](Tape& t) {
      RESULT_GRAD;
      Eigen::Index off = 0;
      for (Var p : *ps) {
        Eigen::Index h = t.value(p).rows();
        if (t.requires_grad(p)) t.acc(p.id) += g.middleRows(off, h);
        off += h;
      }
    };
  return r;
}

// ---- reductions ----

Var Tape::row_mean(Var a) {
  const Mat& src = value(a);
  bool rg = requires_grad(a);
  Mat out = src.rowwise().mean();
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      double inv = 1.0 / static_cast<double>(t.value(a).cols());
      t.acc(a.id).array() += (g.col(0) * inv).replicate(1, t.value(a).cols()).array();
    };
  return r;
}

Var Tape::col_mean(Var a) {
  const Mat& src = value(a);
  bool rg = requires_grad(a);
  Mat out = src.colwise().mean();
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      double inv = 1.0 / static_cast<double>(t.value(a).rows());
      t.acc(a.id).array() += (g.row(0) * inv).replicate(t.value(a).rows(), 1).array();
    };
  return r;
}

Var Tape::col_max(Var a) {
  const Mat& src = value(a);
  if (src.rows() == 0) fail(Errc::empty_sequence, "col_max over empty matrix");
  bool rg = requires_grad(a);
  Mat out(1, src.cols());
  auto winners = std::make_shared<std::vector<int>>(static_cast<size_t>(src.cols()));
  for (Eigen::Index j = 0; j < src.cols(); j++) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < src.rows(); i++)
      if (src(i, j) > src(best, j)) best = i;
    out(0, j) = src(best, j);
    (*winners)[static_cast<size_t>(j)] = static_cast<int>(best);
  }
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r, winners](Tape& t) {
      RESULT_GRAD;
      Mat& ga = t.acc(a.id);
      for (Eigen::Index j = 0; j < ga.cols(); j++)
        ga((*winners)[static_cast<size_t>(j)], j) += g(0, j);
    };
  return r;
}

Var Tape::mean_all(Var a) {
  const Mat& src = value(a);
  bool rg = requires_grad(a);
  Mat out(1, 1);
  out(0, 0) = src.mean();
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      const Mat& src = t.value(a);
      double inv = 1.0 / static_cast<double>(src.rows() * src.cols());
      t.acc(a.id).array() += g(0, 0) * inv;
    };
  return r;
}

Var Tape::sum_all(Var a) {
  const Mat& src = value(a);
  bool rg = requires_grad(a);
  Mat out(1, 1);
  out(0, 0) = src.sum();
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      t.acc(a.id).array() += g(0, 0);
    };
  return r;
}

// ---- softmax / losses ----

Var Tape::softmax_rows(Var a) {
  const Mat& src = value(a);
  Mat y(src.rows(), src.cols());
  for (Eigen::Index i = 0; i < src.rows(); i++) {
    double m = src.row(i).maxCoeff();
    Eigen::ArrayXd e = (src.row(i).array() - m).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  bool rg = requires_grad(a);
  Var r = push(std::move(y), rg, nullptr);
  if (rg)
    node(r.id).back = [a, r](Tape& t) {
      RESULT_GRAD;
      const Mat& y = t.value(r);
      Mat& ga = t.acc(a.id);
      for (Eigen::Index i = 0; i < y.rows(); i++) {
        double dot = g.row(i).dot(y.row(i));
        ga.row(i).array() += (g.row(i).array() - dot) * y.row(i).array();
      }
    };
  return r;
}

Var Tape::cross_entropy_rows(Var logits, std::vector<int> targets) {
  const Mat& z = value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != z.rows())
    fail(Errc::numeric, "cross_entropy_rows: target count mismatch");
  auto probs = std::make_shared<Mat>(z.rows(), z.cols());
  Mat out(z.rows(), 1);
  for (Eigen::Index i = 0; i < z.rows(); i++) {
    int tgt = targets[static_cast<size_t>(i)];
    if (tgt < 0 || tgt >= z.cols()) fail(Errc::numeric, "cross_entropy_rows: bad target");
    double m = z.row(i).maxCoeff();
    Eigen::ArrayXd e = (z.row(i).array() - m).exp();
    double sum = e.sum();
    double lse = m + std::log(sum);
    probs->row(i) = (e / sum).matrix();
    out(i, 0) = lse - z(i, tgt);
  }
  bool rg = requires_grad(logits);
  auto tg = std::make_shared<std::vector<int>>(std::move(targets));
  Var r = push(std::move(out), rg, nullptr);
  if (rg)
    node(r.id).back = [logits, r, probs, tg](Tape& t) {
      RESULT_GRAD;
      Mat& ga = t.acc(logits.id);
      for (Eigen::Index i = 0; i < ga.rows(); i++) {
        ga.row(i) += g(i, 0) * probs->row(i);
        ga(i, (*tg)[static_cast<size_t>(i)]) -= g(i, 0);
      }
    };
  return r;
}

// ---- composites ----

Var layernorm_rows(Tape& t, Var x, Var gain, Var bias, double eps) {
  Var mu = t.row_mean(x);
  Var xc = t.sub_colvec(x, mu);
  Var var = t.row_mean(t.mul(xc, xc));
  Var inv = t.rsqrt(var, eps);
  Var xn = t.mul_colvec(xc, inv);
  return t.add_rowvec(t.mul_rowvec(xn, gain), bias);
}

BatchNormOut batchnorm_train(Tape& t, Var x, Var gain, Var bias, double eps) {
  Var mu = t.col_mean(x);
  Var xc = t.sub_rowvec(x, mu);
  Var var = t.col_mean(t.mul(xc, xc));
  Var inv = t.rsqrt(var, eps);
  Var xn = t.mul_rowvec(xc, inv);
  BatchNormOut out;
  out.out = t.add_rowvec(t.mul_rowvec(xn, gain), bias);
  out.batch_mean = t.value(mu);
  out.batch_var = t.value(var);
  return out;
}

Var batchnorm_eval(Tape& t, Var x, Var gain, Var bias, const Mat& run_mean, const Mat& run_var,
                   double eps) {
  const Mat& xv = t.value(x);
  Mat neg_mean = -run_mean;
  Mat inv = (run_var.array() + eps).rsqrt().matrix();
  Var xc = t.add_const(x, neg_mean.replicate(xv.rows(), 1));
  Var xn = t.mul_const(xc, inv.replicate(xv.rows(), 1));
  return t.add_rowvec(t.mul_rowvec(xn, gain), bias);
}

Var concat_pool(Tape& t, Var hidden) {
  const Mat& h = t.value(hidden);
  if (h.rows() == 0) fail(Errc::empty_sequence, "concat_pool over an empty sequence");
  Var last = t.slice_rows(hidden, static_cast<int>(h.rows()) - 1, 1);
  Var mx = t.col_max(hidden);
  Var mn = t.col_mean(hidden);
  return t.concat_cols({last, mx, mn});
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  double m = logits.maxCoeff();
  Eigen::ArrayXd e = (logits.array() - m).exp();
  return (e / e.sum()).matrix();
}

#undef RESULT_GRAD

}  // namespace stylus::ag
