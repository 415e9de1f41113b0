#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bkg/common.hpp"

namespace bkg::ad {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

struct VarId {
  std::uint32_t v = 0;
};

// Reverse-mode tape over dense matrices. Forward values are computed eagerly
// and checked finite as they are recorded; backward() replays the recorded
// pullbacks in reverse order. One backward pass per tape.
template <typename Scalar>
class Tape {
 public:
  VarId input(Mat<Scalar> value, bool needs_grad, std::string name = {}) {
    const char* op = name.empty() ? "input" : "param";
    return record(std::move(value), needs_grad, nullptr, op, std::move(name));
  }
  VarId constant(Mat<Scalar> value, std::string name = {}) {
    return input(std::move(value), false, std::move(name));
  }

  const Mat<Scalar>& value(VarId id) const { return nodes_[id.v].value; }
  bool needs_grad(VarId id) const { return nodes_[id.v].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  VarId add(VarId a, VarId b) {
    same_shape(a, b, "add");
    return binary(
        a, b, value(a) + value(b), "add",
        [](const Mat<Scalar>& g, Grads gr) {
          if (gr.a) *gr.a += g;
          if (gr.b) *gr.b += g;
        });
  }

  VarId sub(VarId a, VarId b) {
    same_shape(a, b, "sub");
    return binary(
        a, b, value(a) - value(b), "sub",
        [](const Mat<Scalar>& g, Grads gr) {
          if (gr.a) *gr.a += g;
          if (gr.b) *gr.b -= g;
        });
  }

  VarId scale(VarId a, Scalar s) {
    return unary(a, value(a) * s, "scale",
                 [s](const Mat<Scalar>& g, Mat<Scalar>* ga, const Mat<Scalar>&,
                     const Mat<Scalar>&) { *ga += g * s; });
  }

  // c - a, elementwise
  VarId rsub_const(Scalar c, VarId a) {
    Mat<Scalar> out = Mat<Scalar>::Constant(value(a).rows(), value(a).cols(), c) - value(a);
    return unary(a, std::move(out), "rsub_const",
                 [](const Mat<Scalar>& g, Mat<Scalar>* ga, const Mat<Scalar>&,
                    const Mat<Scalar>&) { *ga -= g; });
  }

  VarId mul(VarId a, VarId b) {  // Hadamard
    same_shape(a, b, "mul");
    return binary(
        a, b, value(a).cwiseProduct(value(b)), "mul",
        [va = value(a), vb = value(b)](const Mat<Scalar>& g, Grads gr) {
          if (gr.a) *gr.a += g.cwiseProduct(vb);
          if (gr.b) *gr.b += g.cwiseProduct(va);
        });
  }

  VarId matmul(VarId a, VarId b) {
    if (value(a).cols() != value(b).rows()) shape_fail("matmul");
    return binary(
        a, b, value(a) * value(b), "matmul",
        [va = value(a), vb = value(b)](const Mat<Scalar>& g, Grads gr) {
          if (gr.a) *gr.a += g * vb.transpose();
          if (gr.b) *gr.b += va.transpose() * g;
        });
  }

  VarId matmul_nt(VarId a, VarId b) {  // a · bᵀ
    if (value(a).cols() != value(b).cols()) shape_fail("matmul_nt");
    return binary(
        a, b, value(a) * value(b).transpose(), "matmul_nt",
        [va = value(a), vb = value(b)](const Mat<Scalar>& g, Grads gr) {
          if (gr.a) *gr.a += g * vb;
          if (gr.b) *gr.b += g.transpose() * va;
        });
  }

  VarId gather_rows(VarId table, std::vector<Eigen::Index> rows) {
    const Mat<Scalar>& t = value(table);
    for (Eigen::Index r : rows)
      if (r < 0 || r >= t.rows()) shape_fail("gather_rows");
    Mat<Scalar> out(static_cast<Eigen::Index>(rows.size()), t.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      out.row(i) = t.row(rows[static_cast<std::size_t>(i)]);
    return unary(table, std::move(out), "gather_rows",
                 [rows = std::move(rows)](const Mat<Scalar>& g, Mat<Scalar>* ga,
                                          const Mat<Scalar>&, const Mat<Scalar>&) {
                   for (Eigen::Index i = 0; i < g.rows(); ++i)
                     ga->row(rows[static_cast<std::size_t>(i)]) += g.row(i);
                 });
  }

  VarId hcat(VarId a, VarId b) {
    if (value(a).rows() != value(b).rows()) shape_fail("hcat");
    Mat<Scalar> out(value(a).rows(), value(a).cols() + value(b).cols());
    out << value(a), value(b);
    return binary(
        a, b, std::move(out), "hcat",
        [ca = value(a).cols(), cb = value(b).cols()](const Mat<Scalar>& g, Grads gr) {
          if (gr.a) *gr.a += g.leftCols(ca);
          if (gr.b) *gr.b += g.rightCols(cb);
        });
  }

  VarId vstack(std::vector<VarId> parts) {  // stack rows, equal column counts
    if (parts.empty()) shape_fail("vstack");
    Eigen::Index rows = 0;
    Eigen::Index cols = value(parts[0]).cols();
    bool ng = false;
    for (VarId p : parts) {
      if (value(p).cols() != cols) shape_fail("vstack");
      rows += value(p).rows();
      ng = ng || needs_grad(p);
    }
    Mat<Scalar> out(rows, cols);
    Eigen::Index at = 0;
    for (VarId p : parts) {
      out.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
    }
    std::function<void(Tape&, const Mat<Scalar>&)> back;
    if (ng)
      back = [parts = std::move(parts)](Tape& t, const Mat<Scalar>& g) {
        Eigen::Index at = 0;
        for (VarId p : parts) {
          Eigen::Index n = t.value(p).rows();
          if (Mat<Scalar>* gp = t.grad_of(p)) *gp += g.middleRows(at, n);
          at += n;
        }
      };
    return record(std::move(out), ng, std::move(back), "vstack");
  }

  VarId softmax_rows(VarId a) {
    Mat<Scalar> out = value(a);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      Scalar m = out.row(i).maxCoeff();
      out.row(i) = (out.row(i).array() - m).exp().matrix();
      out.row(i) /= out.row(i).sum();
    }
    return unary(a, out, "softmax_rows",
                 [](const Mat<Scalar>& g, Mat<Scalar>* ga, const Mat<Scalar>&,
                    const Mat<Scalar>& y) {
                   for (Eigen::Index i = 0; i < g.rows(); ++i) {
                     Scalar dot = g.row(i).cwiseProduct(y.row(i)).sum();
                     ga->row(i) +=
                         y.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
                   }
                 });
  }

  VarId relu(VarId a) {
    return unary(a, value(a).cwiseMax(Scalar(0)), "relu",
                 [](const Mat<Scalar>& g, Mat<Scalar>* ga, const Mat<Scalar>& va,
                    const Mat<Scalar>&) {
                   *ga += g.cwiseProduct(
                       (va.array() > Scalar(0)).template cast<Scalar>().matrix());
                 });
  }

  VarId sigmoid(VarId a) {
    Mat<Scalar> out = (Scalar(1) + (-value(a).array()).exp()).inverse().matrix();
    return unary(a, std::move(out), "sigmoid",
                 [](const Mat<Scalar>& g, Mat<Scalar>* ga, const Mat<Scalar>&,
                    const Mat<Scalar>& y) {
                   *ga += g.cwiseProduct(
                       y.cwiseProduct((Scalar(1) - y.array()).matrix()));
                 });
  }

  VarId log(VarId a) {
    return unary(a, value(a).array().log().matrix(), "log",
                 [](const Mat<Scalar>& g, Mat<Scalar>* ga, const Mat<Scalar>& va,
                    const Mat<Scalar>&) {
                   *ga += g.cwiseQuotient(va);
                 });
  }

  VarId clamp_min(VarId a, Scalar lo) {
    return unary(a, value(a).cwiseMax(lo), "clamp_min",
                 [lo](const Mat<Scalar>& g, Mat<Scalar>* ga, const Mat<Scalar>& va,
                      const Mat<Scalar>&) {
                   *ga += g.cwiseProduct(
                       (va.array() > lo).template cast<Scalar>().matrix());
                 });
  }

  VarId colwise_max(VarId a) {  // 1×cols; ties go to the first max row
    const Mat<Scalar>& v = value(a);
    if (v.rows() == 0) shape_fail("colwise_max");
    Mat<Scalar> out(1, v.cols());
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(v.cols()));
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < v.rows(); ++i)
        if (v(i, j) > v(best, j)) best = i;
      arg[static_cast<std::size_t>(j)] = best;
      out(0, j) = v(best, j);
    }
    return unary(a, std::move(out), "colwise_max",
                 [arg = std::move(arg)](const Mat<Scalar>& g, Mat<Scalar>* ga,
                                        const Mat<Scalar>&, const Mat<Scalar>&) {
                   for (Eigen::Index j = 0; j < g.cols(); ++j)
                     (*ga)(arg[static_cast<std::size_t>(j)], j) += g(0, j);
                 });
  }

  VarId add_row_bcast(VarId a, VarId row) {  // a + row replicated down
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
      shape_fail("add_row_bcast");
    Mat<Scalar> out = value(a).rowwise() + value(row).row(0);
    return binary(
        a, row, std::move(out), "add_row_bcast",
        [](const Mat<Scalar>& g, Grads gr) {
          if (gr.a) *gr.a += g;
          if (gr.b) gr.b->row(0) += g.colwise().sum();
        });
  }

  VarId add_col_bcast(VarId a, VarId col) {  // a + col replicated across
    if (value(col).cols() != 1 || value(col).rows() != value(a).rows())
      shape_fail("add_col_bcast");
    Mat<Scalar> out = value(a).colwise() + value(col).col(0);
    return binary(
        a, col, std::move(out), "add_col_bcast",
        [](const Mat<Scalar>& g, Grads gr) {
          if (gr.a) *gr.a += g;
          if (gr.b) gr.b->col(0) += g.rowwise().sum();
        });
  }

  VarId mul_row_bcast(VarId a, VarId row) {  // a ∘ row replicated down
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
      shape_fail("mul_row_bcast");
    Mat<Scalar> out =
        (value(a).array().rowwise() * value(row).row(0).array()).matrix();
    return binary(
        a, row, std::move(out), "mul_row_bcast",
        [va = value(a), vrow = value(row)](const Mat<Scalar>& g, Grads gr) {
          if (gr.a) *gr.a += (g.array().rowwise() * vrow.row(0).array()).matrix();
          if (gr.b) gr.b->row(0) += g.cwiseProduct(va).colwise().sum();
        });
  }

  VarId sum_all(VarId a) {
    Mat<Scalar> out(1, 1);
    out(0, 0) = value(a).sum();
    return unary(a, std::move(out), "sum_all",
                 [](const Mat<Scalar>& g, Mat<Scalar>* ga, const Mat<Scalar>&,
                    const Mat<Scalar>&) {
                   ga->array() += g(0, 0);
                 });
  }

  // Seeds d(loss)/d(loss) = 1 and pulls gradients back through the tape.
  void backward(VarId loss) {
    if (ran_backward_) throw NumericalError("tape backward ran twice");
    ran_backward_ = true;
    if (value(loss).rows() != 1 || value(loss).cols() != 1)
      throw NumericalError("backward target is not a scalar");
    for (Node& n : nodes_)
      if (n.needs_grad) n.grad = Mat<Scalar>::Zero(n.value.rows(), n.value.cols());
    if (!nodes_[loss.v].needs_grad) return;
    nodes_[loss.v].grad(0, 0) = Scalar(1);
    for (std::size_t i = nodes_.size(); i > 0; --i) {
      Node& n = nodes_[i - 1];
      if (!n.needs_grad || !n.back) continue;
      if (!n.grad.allFinite())
        throw NumericalError("non-finite gradient at " + label(n));
      n.back(*this, n.grad);
    }
  }

  // Zero matrix when the loss did not touch this node.
  const Mat<Scalar>& grad(VarId id) const {
    const Node& n = nodes_[id.v];
    if (!n.needs_grad || n.grad.size() == 0)
      throw NumericalError("gradient requested before backward for " + label(n));
    return n.grad;
  }

 private:
  struct Node {
    Mat<Scalar> value;
    Mat<Scalar> grad;
    bool needs_grad = false;
    const char* op = "";
    std::string name;
    std::function<void(Tape&, const Mat<Scalar>&)> back;
  };

  struct Grads {  // destination buffers; null when that input skips gradients
    Mat<Scalar>* a = nullptr;
    Mat<Scalar>* b = nullptr;
  };

  std::vector<Node> nodes_;
  bool ran_backward_ = false;

  static std::string label(const Node& n) { return n.name.empty() ? n.op : n.name; }

  void shape_fail(const char* op) const {
    throw NumericalError(std::string("tape shape mismatch in ") + op);
  }
  void same_shape(VarId a, VarId b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      shape_fail(op);
  }

  VarId record(Mat<Scalar> value, bool needs_grad,
               std::function<void(Tape&, const Mat<Scalar>&)> back, const char* op,
               std::string name = {}) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.op = op;
    n.name = std::move(name);
    n.back = std::move(back);
    if (!n.value.allFinite())
      throw NumericalError("non-finite value at " + label(n));
    nodes_.push_back(std::move(n));
    return VarId{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Mat<Scalar>* grad_of(VarId id) {
    Node& n = nodes_[id.v];
    return n.needs_grad ? &n.grad : nullptr;
  }

  // fn(upstream grad, grad buffer of a, value of a, value of out); the grad
  // buffer is always live because the pullback is only installed when a
  // needs gradients.
  template <typename Fn>
  VarId unary(VarId a, Mat<Scalar> out, const char* op, Fn fn) {
    bool ng = needs_grad(a);
    VarId id = record(std::move(out), ng, nullptr, op);
    if (ng)
      nodes_[id.v].back = [a, id, fn = std::move(fn)](Tape& t, const Mat<Scalar>& g) {
        fn(g, t.grad_of(a), t.value(a), t.value(id));
      };
    return id;
  }

  template <typename Fn>
  VarId binary(VarId a, VarId b, Mat<Scalar> out, const char* op, Fn fn) {
    bool ng = needs_grad(a) || needs_grad(b);
    std::function<void(Tape&, const Mat<Scalar>&)> back;
    if (ng)
      back = [a, b, fn = std::move(fn)](Tape& t, const Mat<Scalar>& g) {
        fn(g, Grads{t.grad_of(a), t.grad_of(b)});
      };
    return record(std::move(out), ng, std::move(back), op);
  }
};

}  // namespace bkg::ad
