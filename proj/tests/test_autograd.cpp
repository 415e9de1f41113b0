#include "bkg/autograd.hpp"

#include <cmath>

#include "doctest.h"
#include "support/gradcheck.hpp"

using namespace bkg;
using ad::Tape;
using ad::VarId;
using bkgtest::AdMat;
using bkgtest::finite_difference_check;
using bkgtest::random_mat;

namespace {

// Reduce any matrix to a scalar with non-uniform weights so every entry of
// the upstream gradient is distinct.
VarId weighted_sum(Tape<double>& t, VarId m) {
  const AdMat& v = t.value(m);
  AdMat w(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j)
      w(i, j) = 0.3 + 0.1 * static_cast<double>(i * v.cols() + j);
  return t.sum_all(t.mul(m, t.constant(w)));
}

}  // namespace

TEST_CASE("every tape op passes a finite-difference check") {
  Rng rng(1234);
  auto check = [&](std::vector<AdMat> leaves, auto build) {
    auto res = finite_difference_check(std::move(leaves), build);
    CHECK(res.entries > 0);
    CHECK(res.max_rel_err < 1e-4);
  };

  SUBCASE("add / sub / scale / rsub_const") {
    check({random_mat(rng, 2, 3), random_mat(rng, 2, 3)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            VarId s = t.add(v[0], v[1]);
            s = t.sub(s, v[1]);
            s = t.scale(s, 1.7);
            s = t.rsub_const(0.25, s);
            return weighted_sum(t, s);
          });
  }
  SUBCASE("mul / matmul / matmul_nt") {
    check({random_mat(rng, 2, 3), random_mat(rng, 3, 4), random_mat(rng, 2, 4)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            VarId p = t.matmul(v[0], v[1]);       // 2×4
            VarId q = t.mul(p, v[2]);             // 2×4
            VarId r = t.matmul_nt(q, v[2]);       // 2×2
            return weighted_sum(t, r);
          });
  }
  SUBCASE("gather_rows accumulates duplicate rows") {
    check({random_mat(rng, 4, 3)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            VarId g = t.gather_rows(v[0], {2, 0, 2, 3});
            return weighted_sum(t, g);
          });
  }
  SUBCASE("hcat splits gradients by column block") {
    check({random_mat(rng, 3, 2), random_mat(rng, 3, 4)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            return weighted_sum(t, t.hcat(v[0], v[1]));
          });
  }
  SUBCASE("vstack splits gradients by row block") {
    check({random_mat(rng, 2, 3), random_mat(rng, 1, 3), random_mat(rng, 4, 3)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            return weighted_sum(t, t.vstack({v[0], v[1], v[2], v[1]}));
          });
  }
  SUBCASE("softmax_rows / relu / sigmoid") {
    check({random_mat(rng, 3, 4)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            VarId s = t.softmax_rows(v[0]);
            VarId r = t.relu(t.sub(s, t.constant(AdMat::Constant(3, 4, 0.2))));
            return weighted_sum(t, t.sigmoid(r));
          });
  }
  SUBCASE("log over strictly positive inputs") {
    check({random_mat(rng, 2, 3, 0.5, 3.0)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            return weighted_sum(t, t.log(v[0]));
          });
  }
  SUBCASE("clamp_min away from the boundary") {
    check({random_mat(rng, 2, 3, 0.5, 3.0)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            return weighted_sum(t, t.clamp_min(v[0], 1.0));
          });
  }
  SUBCASE("colwise_max routes to the arg row") {
    check({random_mat(rng, 4, 3)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            return weighted_sum(t, t.colwise_max(v[0]));
          });
  }
  SUBCASE("broadcast adds and row scaling") {
    check({random_mat(rng, 3, 4), random_mat(rng, 1, 4), random_mat(rng, 3, 1)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            VarId a = t.add_row_bcast(v[0], v[1]);
            a = t.add_col_bcast(a, v[2]);
            a = t.mul_row_bcast(a, v[1]);
            return weighted_sum(t, a);
          });
  }
  SUBCASE("composite expression mixing most ops") {
    check({random_mat(rng, 3, 4), random_mat(rng, 4, 4), random_mat(rng, 1, 4)},
          [](Tape<double>& t, const std::vector<VarId>& v) {
            VarId h = t.matmul(v[0], v[1]);
            h = t.add_row_bcast(h, v[2]);
            VarId attn = t.softmax_rows(t.scale(t.matmul_nt(h, h), 0.5));
            h = t.add(t.matmul(attn, h), h);
            VarId pooled = t.colwise_max(t.relu(h));
            VarId p = t.sigmoid(t.matmul_nt(pooled, pooled));
            VarId ce = t.log(t.clamp_min(p, 1e-12));
            return t.scale(t.sum_all(ce), -1.0);
          });
  }
}

TEST_CASE("gradients of untouched parameters are zero") {
  Tape<double> tape;
  Rng rng(7);
  VarId used = tape.input(random_mat(rng, 2, 2), true, "used");
  VarId unused = tape.input(random_mat(rng, 3, 3), true, "unused");
  tape.backward(tape.sum_all(used));
  CHECK(tape.grad(unused).isZero(0.0));
  CHECK(tape.grad(used).isOnes(0.0));
}

TEST_CASE("scaling the loss scales every gradient linearly") {
  Rng rng(8);
  AdMat leaf = random_mat(rng, 3, 3);
  auto run = [&](double lambda) {
    Tape<double> tape;
    VarId v = tape.input(leaf, true);
    VarId loss = tape.scale(tape.sum_all(tape.sigmoid(tape.matmul(v, v))), lambda);
    tape.backward(loss);
    return AdMat(tape.grad(v));
  };
  AdMat g1 = run(1.0);
  AdMat g2 = run(2.0);
  CHECK((g2 - 2.0 * g1).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("colwise_max ties route the gradient to the first max row") {
  Tape<double> tape;
  AdMat m(3, 2);
  m << 5.0, 1.0, 5.0, 2.0, 0.0, 2.0;  // col 0 ties rows 0/1; col 1 ties rows 1/2
  VarId v = tape.input(m, true);
  tape.backward(tape.sum_all(tape.colwise_max(v)));
  AdMat expected(3, 2);
  expected << 1, 0, 0, 1, 0, 0;
  CHECK(tape.grad(v) == expected);
}

TEST_CASE("tape failure modes raise numerical errors") {
  Rng rng(9);
  SUBCASE("non-finite forward value is rejected at record time") {
    Tape<double> tape;
    AdMat neg = AdMat::Constant(2, 2, -1.0);
    VarId v = tape.input(neg, true, "weights");
    CHECK_THROWS_AS(tape.log(v), NumericalError);
  }
  SUBCASE("backward twice") {
    Tape<double> tape;
    VarId v = tape.input(random_mat(rng, 2, 2), true);
    VarId loss = tape.sum_all(v);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), NumericalError);
  }
  SUBCASE("backward on a non-scalar") {
    Tape<double> tape;
    VarId v = tape.input(random_mat(rng, 2, 2), true);
    CHECK_THROWS_AS(tape.backward(v), NumericalError);
  }
  SUBCASE("grad before backward") {
    Tape<double> tape;
    VarId v = tape.input(random_mat(rng, 2, 2), true);
    CHECK_THROWS_AS(tape.grad(v), NumericalError);
  }
}

TEST_CASE("softmax rows are proper distributions") {
  Tape<double> tape;
  Rng rng(10);
  VarId v = tape.input(random_mat(rng, 5, 7, -30.0, 30.0), false);
  const AdMat& y = tape.value(tape.softmax_rows(v));
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    CHECK(y.row(i).minCoeff() >= 0.0);
    CHECK(std::abs(y.row(i).sum() - 1.0) < 1e-12);
  }
}
