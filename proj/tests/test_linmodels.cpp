#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "speclab/linmodels.hpp"

#include <cmath>

using namespace speclab;
using namespace speclab::linmodels;

namespace {

Matrix random_matrix(int n, int d, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Matrix X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = rng.uniform(lo, hi);
  return X;
}

// Ordinary least squares with intercept via normal equations.
std::pair<Vector, double> ols_oracle(const Matrix& X, const Vector& y) {
  const int n = static_cast<int>(X.rows());
  Matrix A(n, X.cols() + 1);
  A.col(0) = Vector::Ones(n);
  A.rightCols(X.cols()) = X;
  const Vector sol = (A.transpose() * A).ldlt().solve(A.transpose() * y);
  return {sol.tail(X.cols()), sol[0]};
}

// Independent PLS1 route: explicit y-deflation and sequential prediction,
// avoiding the closed-form coefficient reconstruction entirely.
struct Pls1Oracle {
  std::vector<Vector> w, p;
  std::vector<double> q;
  Vector x_mean;
  double y_mean = 0.0;

  Pls1Oracle(const Matrix& X, const Vector& y, int A) {
    x_mean = X.colwise().mean();
    y_mean = y.mean();
    Matrix Xa = X.rowwise() - x_mean.transpose();
    Vector ya = y.array() - y_mean;
    for (int a = 0; a < A; ++a) {
      Vector wa = Xa.transpose() * ya;
      wa /= wa.norm();
      const Vector t = Xa * wa;
      const double tt = t.squaredNorm();
      const Vector pa = Xa.transpose() * t / tt;
      const double qa = ya.dot(t) / tt;
      Xa -= t * pa.transpose();
      ya -= qa * t;
      w.push_back(wa);
      p.push_back(pa);
      q.push_back(qa);
    }
  }

  double predict(const Vector& x) const {
    Vector xd = x - x_mean;
    double yhat = y_mean;
    for (std::size_t a = 0; a < w.size(); ++a) {
      const double t = xd.dot(w[a]);
      yhat += q[a] * t;
      xd -= t * p[a];
    }
    return yhat;
  }

  Vector coefficients(int d) const {
    const double y0 = predict(Vector::Zero(d));
    Vector c(d);
    for (int j = 0; j < d; ++j) {
      Vector e = Vector::Zero(d);
      e[j] = 1.0;
      c[j] = predict(e) - y0;
    }
    return c;
  }
};

}  // namespace

TEST_CASE("pcr with one informative direction fits collinear targets exactly") {
  // Rank-1 X: all rows multiples of one direction.
  Vector dir(4);
  dir << 1.0, -2.0, 0.5, 3.0;
  Matrix X(6, 4);
  Rng rng(3);
  Vector scale(6);
  for (int i = 0; i < 6; ++i) {
    scale[i] = rng.uniform(-2.0, 2.0);
    X.row(i) = scale[i] * dir.transpose();
  }
  const Vector y = 2.0 * scale;  // collinear with the only score direction

  const LinearFit fit = fit_pcr(X, y, 1);
  CHECK(fit.training_residuals.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pcr at full rank equals ordinary least squares") {
  const Matrix X = random_matrix(10, 6, 17);
  Rng rng(18);
  Vector y(10);
  for (int i = 0; i < 10; ++i) y[i] = rng.uniform(-2.0, 2.0);

  const LinearFit fit = fit_pcr(X, y, 6);
  const auto [beta, b0] = ols_oracle(X, y);
  CHECK((fit.coefficients - beta).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(fit.intercept - b0) < 1e-8);
}

TEST_CASE("pcr ignores zero-variance feature columns") {
  Matrix X = random_matrix(12, 5, 21);
  Rng rng(22);
  Vector y(12);
  for (int i = 0; i < 12; ++i) y[i] = X(i, 0) * 1.5 - X(i, 3) + 0.05 * rng.normal();

  Matrix Xz(12, 6);
  Xz.leftCols(5) = X;
  Xz.col(5) = Vector::Constant(12, 4.2);

  const LinearFit f1 = fit_pcr(X, y, 4);
  const LinearFit f2 = fit_pcr(Xz, y, 4);
  const Vector p1 = predict(f1, X);
  const Vector p2 = predict(f2, Xz);
  CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("plsr with a single feature reduces to simple least squares") {
  Matrix X(8, 1);
  Vector y(8);
  Rng rng(5);
  for (int i = 0; i < 8; ++i) {
    X(i, 0) = rng.uniform(0.0, 4.0);
    y[i] = 3.0 * X(i, 0) + rng.uniform(-0.1, 0.1);
  }
  const LinearFit fit = fit_plsr(X, y, 1);
  const auto [beta, b0] = ols_oracle(X, y);
  CHECK(fit.coefficients[0] == doctest::Approx(beta[0]).epsilon(1e-10));
  CHECK(fit.intercept == doctest::Approx(b0).epsilon(1e-9));
}

TEST_CASE("plsr recovers an exactly linear response at full rank") {
  const Matrix X = random_matrix(12, 5, 31);
  Vector beta(5);
  beta << 1.0, -0.5, 2.0, 0.0, 0.7;
  const Vector y = (X * beta).array() + 3.0;

  const LinearFit fit = fit_plsr(X, y, 5);
  const Vector pred = predict(fit, X);
  const double ss_res = (y - pred).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  CHECK(1.0 - ss_res / ss_tot == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("plsr matches an independently coded PLS1 oracle on random systems") {
  for (std::uint64_t seed : {101, 202, 303}) {
    const Matrix X = random_matrix(20, 8, seed);
    Rng rng(seed + 1);
    Vector y(20);
    for (int i = 0; i < 20; ++i) y[i] = rng.uniform(-3.0, 3.0);

    for (int A : {1, 3, 5}) {
      const LinearFit fit = fit_plsr(X, y, A);
      const Pls1Oracle oracle(X, y, A);
      const Vector oc = oracle.coefficients(8);
      CHECK((fit.coefficients - oc).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("plsr score vectors are pairwise orthogonal") {
  const Matrix X = random_matrix(15, 10, 77);
  Rng rng(78);
  Vector y(15);
  for (int i = 0; i < 15; ++i) y[i] = rng.uniform(-1.0, 1.0);

  const Vector xm = X.colwise().mean();
  const Matrix Xc = X.rowwise() - xm.transpose();
  Matrix Yc(15, 1);
  Yc.col(0) = y.array() - y.mean();

  const PlsDecomposition dec = nipals_pls(Xc, Yc, 6);
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      const double dot = std::abs(dec.scores.col(i).dot(dec.scores.col(j)));
      CHECK(dot < 1e-8 * dec.scores.col(i).norm() * dec.scores.col(j).norm());
    }
  }
}

TEST_CASE("plsr rejects degenerate inputs") {
  const Matrix X = random_matrix(6, 3, 1);
  CHECK_THROWS_AS(fit_plsr(X, Vector::Constant(6, 2.0), 2), SpecError);  // zero-variance y
  Vector y(6);
  y << 1, 2, 3, 4, 5, 6;
  CHECK_THROWS_AS(fit_plsr(X, y, 0), SpecError);
  CHECK_THROWS_AS(fit_plsr(X, y, 6), SpecError);
}

TEST_CASE("plsda separates two linear clouds with one latent variable") {
  Rng rng(9);
  Matrix X(20, 3);
  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) {
    const int c = i % 2;
    labels[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < 3; ++j) X(i, j) = (c ? 4.0 : -4.0) + rng.normal() * 0.3;
  }
  const ClassifierFit fit = fit_plsda(X, labels, 1);
  const std::vector<int> pred = predict(fit, X);
  CHECK(pred == labels);

  // A duplicated sample keeps its own label.
  Matrix Xd(21, 3);
  Xd.topRows(20) = X;
  Xd.row(20) = X.row(4);
  std::vector<int> ld = labels;
  ld.push_back(labels[4]);
  const ClassifierFit fd = fit_plsda(Xd, ld, 1);
  CHECK(predict(fd, Matrix(X.row(4)))[0] == labels[4]);
}

TEST_CASE("plsda argmax agrees with per-column PLS1 oracle on separated clouds") {
  Rng rng(40);
  const int n = 30;
  Matrix X(n, 4);
  std::vector<int> labels(n);
  const double centers[3][4] = {{4, 0, 0, 1}, {0, 4, 0, -1}, {0, 0, 4, 0}};
  for (int i = 0; i < n; ++i) {
    const int c = i % 3;
    labels[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < 4; ++j) X(i, j) = centers[c][j] + 0.2 * rng.normal();
  }
  const int A = 2;
  const ClassifierFit fit = fit_plsda(X, labels, A);
  const std::vector<int> pred = predict(fit, X);

  // Oracle: univariate PLS per centered dummy column, argmax over predictions.
  std::vector<LinearFit> per_col;
  for (int c = 0; c < 3; ++c) {
    Vector dummy(n);
    for (int i = 0; i < n; ++i) dummy[i] = labels[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
    per_col.push_back(fit_plsr(X, dummy, A));
  }
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_score = -1e300;
    for (int c = 0; c < 3; ++c) {
      const double s = predict(per_col[static_cast<std::size_t>(c)], Matrix(X.row(i)))[0];
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    CHECK(pred[static_cast<std::size_t>(i)] == best);
  }
}

TEST_CASE("plsda argmax is invariant under increasing affine maps of the scores") {
  Rng rng(50);
  Matrix X(16, 5);
  std::vector<int> labels(16);
  for (int i = 0; i < 16; ++i) {
    labels[static_cast<std::size_t>(i)] = i % 2;
    for (int j = 0; j < 5; ++j) X(i, j) = rng.normal() + (i % 2) * 2.0;
  }
  const ClassifierFit fit = fit_plsda(X, labels, 2);
  const Matrix scores = decision_scores(fit, X);
  const std::vector<int> base = predict(fit, X);
  const Matrix mapped = 3.5 * scores.array() + 11.0;  // strictly increasing affine
  for (int i = 0; i < mapped.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < mapped.cols(); ++c) {
      if (mapped(i, c) > mapped(i, best)) best = c;
    }
    CHECK(best == base[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("elastic net with zero penalty recovers least squares") {
  const Matrix X = random_matrix(20, 5, 61);
  Rng rng(62);
  Vector y(20);
  for (int i = 0; i < 20; ++i) y[i] = X(i, 1) * 2.0 - X(i, 3) + 0.1 * rng.normal();

  const LinearFit fit = fit_elastic_net(X, y, 0.0, 0.5);
  const auto [beta, b0] = ols_oracle(X, y);
  CHECK((fit.coefficients - beta).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(std::abs(fit.intercept - b0) < 1e-6);
}

TEST_CASE("lasso with a huge penalty zeroes every coefficient") {
  const Matrix X = random_matrix(15, 6, 63);
  Rng rng(64);
  Vector y(15);
  for (int i = 0; i < 15; ++i) y[i] = rng.uniform(-1.0, 1.0);
  const LinearFit fit = fit_elastic_net(X, y, 1e3, 1.0);
  CHECK(fit.coefficients.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ridge limit matches the closed-form solution") {
  // Columns standardized in-test so the internal standardization is a no-op.
  Matrix X = random_matrix(20, 5, 65);
  const int n = 20;
  for (int j = 0; j < 5; ++j) {
    const double mu = X.col(j).mean();
    X.col(j).array() -= mu;
    X.col(j) /= std::sqrt(X.col(j).squaredNorm() / n);
  }
  Rng rng(66);
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = X(i, 0) - 0.5 * X(i, 2) + 0.05 * rng.normal();
  y.array() -= y.mean();

  const double lambda = 0.3;
  const LinearFit fit = fit_elastic_net(X, y, lambda, 0.0);
  const Matrix lhs = X.transpose() * X + n * lambda * Matrix::Identity(5, 5);
  const Vector ridge = lhs.ldlt().solve(X.transpose() * y);
  CHECK((fit.coefficients - ridge).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("elastic net objective never increases across sweeps") {
  const Matrix X = random_matrix(25, 8, 67);
  Rng rng(68);
  Vector y(25);
  for (int i = 0; i < 25; ++i) y[i] = X(i, 0) + rng.normal() * 0.5;
  const LinearFit fit = fit_elastic_net(X, y, 0.05, 0.5);
  REQUIRE(fit.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
    CHECK(fit.objective_trace[i] <= fit.objective_trace[i - 1] + 1e-12);
  }
}

TEST_CASE("logreg classifies separable data with finite weights") {
  Rng rng(71);
  Matrix X(20, 2);
  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) {
    const int c = i % 2;
    labels[static_cast<std::size_t>(i)] = c;
    X(i, 0) = (c ? 2.0 : -2.0) + 0.2 * rng.normal();
    X(i, 1) = rng.normal();
  }
  const ClassifierFit fit = fit_logreg(X, labels, 0.1);
  CHECK(fit.weights.allFinite());
  CHECK(predict(fit, X) == labels);

  // Loss at the optimum is no worse than at zero weights.
  const double at_opt = logreg_loss(fit.weights, fit.intercepts, X, labels, 0.1);
  const double at_zero = logreg_loss(Matrix::Zero(2, 2), Vector::Zero(2), X, labels, 0.1);
  CHECK(at_opt <= at_zero);
}

TEST_CASE("logreg with an overwhelming penalty predicts the majority class") {
  Rng rng(72);
  Matrix X(15, 3);
  std::vector<int> labels(15);
  for (int i = 0; i < 15; ++i) {
    labels[static_cast<std::size_t>(i)] = (i < 10) ? 0 : 1;  // class 0 majority
    for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
  }
  const ClassifierFit fit = fit_logreg(X, labels, 1e6);
  CHECK(fit.weights.cwiseAbs().maxCoeff() < 1e-4);
  const std::vector<int> pred = predict(fit, X);
  for (int p : pred) CHECK(p == 0);
}

TEST_CASE("logreg analytic gradient matches central finite differences") {
  Rng rng(73);
  Matrix X(10, 3);
  std::vector<int> labels(10);
  for (int i = 0; i < 10; ++i) {
    labels[static_cast<std::size_t>(i)] = i % 3;
    for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
  }
  Matrix W(3, 3);
  Vector b(3);
  for (int i = 0; i < 3; ++i) {
    b[i] = rng.normal() * 0.1;
    for (int j = 0; j < 3; ++j) W(i, j) = rng.normal() * 0.1;
  }
  const double lambda = 0.05;
  Matrix gW;
  Vector gb;
  logreg_gradient(W, b, X, labels, lambda, gW, gb);

  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Matrix Wp = W, Wm = W;
      Wp(i, j) += h;
      Wm(i, j) -= h;
      const double fd = (logreg_loss(Wp, b, X, labels, lambda) -
                         logreg_loss(Wm, b, X, labels, lambda)) / (2 * h);
      const double denom = std::max(1.0, std::abs(fd) + std::abs(gW(i, j)));
      CHECK(std::abs(fd - gW(i, j)) / denom < 1e-4);
    }
    Vector bp = b, bm = b;
    bp[i] += h;
    bm[i] -= h;
    const double fd = (logreg_loss(W, bp, X, labels, lambda) -
                       logreg_loss(W, bm, X, labels, lambda)) / (2 * h);
    CHECK(std::abs(fd - gb[i]) / std::max(1.0, std::abs(fd) + std::abs(gb[i])) < 1e-4);
  }

  // At the returned optimum the finite-difference gradient is numerically zero.
  const ClassifierFit fit = fit_logreg(X, labels, lambda);
  Matrix gWopt;
  Vector gbopt;
  logreg_gradient(fit.weights, fit.intercepts, X, labels, lambda, gWopt, gbopt);
  CHECK(gWopt.cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("predict handles the degenerate and batching contracts") {
  LinearFit fit;
  fit.coefficients = Vector::Zero(4);
  fit.intercept = 2.5;
  const Matrix X = random_matrix(5, 4, 80);
  const Vector pred = predict(fit, X);
  for (int i = 0; i < 5; ++i) CHECK(pred[i] == doctest::Approx(2.5));

  // Batch equals per-row prediction.
  Rng rng(81);
  for (int j = 0; j < 4; ++j) fit.coefficients[j] = rng.normal();
  const Vector batch = predict(fit, X);
  for (int i = 0; i < 5; ++i) {
    CHECK(batch[i] == predict(fit, Matrix(X.row(i)))[0]);
  }

  CHECK_THROWS_AS(predict(fit, Matrix::Zero(2, 3)), SpecError);
}

TEST_CASE("training residual consistency") {
  const Matrix X = random_matrix(12, 4, 85);
  Rng rng(86);
  Vector y(12);
  for (int i = 0; i < 12; ++i) y[i] = X(i, 2) + 0.3 * rng.normal();
  const LinearFit fit = fit_plsr(X, y, 3);
  const Vector pred = predict(fit, X);
  CHECK(((y - pred) - fit.training_residuals).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fits are bitwise deterministic") {
  const Matrix X = random_matrix(14, 6, 90);
  Rng rng(91);
  Vector y(14);
  for (int i = 0; i < 14; ++i) y[i] = rng.normal();

  const LinearFit a = fit_plsr(X, y, 4);
  const LinearFit b = fit_plsr(X, y, 4);
  CHECK(a.coefficients == b.coefficients);

  const LinearFit c = fit_elastic_net(X, y, 0.1, 0.5);
  const LinearFit d = fit_elastic_net(X, y, 0.1, 0.5);
  CHECK(c.coefficients == d.coefficients);
}
