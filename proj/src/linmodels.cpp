#include "speclab/linmodels.hpp"

#include <algorithm>
#include <cmath>

namespace speclab::linmodels {

namespace {

constexpr double kTinyNorm = 1e-12;

void check_shapes(const Matrix& X, Eigen::Index y_len, const char* who) {
  if (X.rows() != y_len) {
    throw SpecError(std::string(who) + ": X has " + std::to_string(X.rows()) +
                    " rows but y has " + std::to_string(y_len));
  }
  if (X.rows() < 2) throw SpecError(std::string(who) + ": need at least 2 samples");
}

Matrix one_hot(const std::vector<int>& labels, int n_classes) {
  Matrix Y = Matrix::Zero(static_cast<int>(labels.size()), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) Y(static_cast<int>(i), labels[i]) = 1.0;
  return Y;
}

int count_classes(const std::vector<int>& labels, const char* who) {
  int c = 0;
  for (int l : labels) {
    if (l < 0) throw SpecError(std::string(who) + ": negative class id");
    c = std::max(c, l + 1);
  }
  if (c < 2) throw SpecError(std::string(who) + ": need at least 2 classes");
  return c;
}

}  // namespace

PlsDecomposition nipals_pls(const Matrix& Xc, const Matrix& Yc, int n_components) {
  const int n = static_cast<int>(Xc.rows());
  const int d = static_cast<int>(Xc.cols());
  const int m = static_cast<int>(Yc.cols());

  PlsDecomposition out;
  out.scores.resize(n, n_components);
  out.x_weights.resize(d, n_components);
  out.x_loadings.resize(d, n_components);
  out.y_loadings.resize(m, n_components);

  Matrix X = Xc;
  for (int a = 0; a < n_components; ++a) {
    Vector w(d);
    if (m == 1) {
      w = X.transpose() * Yc.col(0);
    } else {
      // Pick the response column with the largest variance as the starting score.
      int start = 0;
      double best = -1.0;
      for (int j = 0; j < m; ++j) {
        const double v = Yc.col(j).squaredNorm();
        if (v > best) {
          best = v;
          start = j;
        }
      }
      Vector u = Yc.col(start);
      Vector t_prev = Vector::Zero(n);
      for (int it = 0; it < 500; ++it) {
        w = X.transpose() * u;
        const double wn = w.norm();
        if (wn < kTinyNorm) break;
        w /= wn;
        const Vector t = X * w;
        const double tt = t.squaredNorm();
        if (tt < kTinyNorm) break;
        const Vector q = Yc.transpose() * t / tt;
        u = Yc * q / q.squaredNorm();
        if ((t - t_prev).norm() < 1e-12 * std::max(1.0, t.norm())) break;
        t_prev = t;
      }
      w = X.transpose() * u;
    }
    const double wn = w.norm();
    if (wn < kTinyNorm) {
      throw SpecError("PLS component " + std::to_string(a + 1) +
                      " extraction failed (weight norm below 1e-12)");
    }
    w /= wn;
    const Vector t = X * w;
    const double tt = t.squaredNorm();
    if (tt < kTinyNorm) {
      throw SpecError("PLS component " + std::to_string(a + 1) +
                      " extraction failed (score norm below 1e-12)");
    }
    const Vector p = X.transpose() * t / tt;
    const Vector q = Yc.transpose() * t / tt;

    out.scores.col(a) = t;
    out.x_weights.col(a) = w;
    out.x_loadings.col(a) = p;
    out.y_loadings.col(a) = q;

    X.noalias() -= t * p.transpose();  // deflate X only
  }
  return out;
}

namespace {

// Coefficients in the original (centered) space: B = W (P^T W)^-1 Q^T.
Matrix pls_coefficients(const PlsDecomposition& d) {
  const Matrix pw = d.x_loadings.transpose() * d.x_weights;
  return d.x_weights * pw.colPivHouseholderQr().solve(d.y_loadings.transpose());
}

}  // namespace

LinearFit fit_plsr(const Matrix& X, const Vector& y, int n_lvs) {
  check_shapes(X, y.size(), "plsr");
  const int max_c = static_cast<int>(std::min<Eigen::Index>(X.rows() - 1, X.cols()));
  if (n_lvs < 1 || n_lvs > max_c) {
    throw SpecError("plsr: latent variable count " + std::to_string(n_lvs) +
                    " outside [1," + std::to_string(max_c) + "]");
  }
  const Vector x_mean = X.colwise().mean();
  const double y_mean = y.mean();
  const Matrix Xc = X.rowwise() - x_mean.transpose();
  Matrix Yc(y.size(), 1);
  Yc.col(0) = y.array() - y_mean;
  if (Yc.col(0).norm() < kTinyNorm) throw SpecError("plsr: response has zero variance");

  const PlsDecomposition dec = nipals_pls(Xc, Yc, n_lvs);
  const Matrix B = pls_coefficients(dec);

  LinearFit fit;
  fit.coefficients = B.col(0);
  fit.intercept = y_mean - x_mean.dot(fit.coefficients);
  fit.n_components = n_lvs;
  fit.training_residuals = y - (X * fit.coefficients).array().matrix() -
                           Vector::Constant(y.size(), fit.intercept);
  return fit;
}

LinearFit fit_pcr(const Matrix& X, const Vector& y, int n_pcs) {
  check_shapes(X, y.size(), "pcr");
  const int max_c = static_cast<int>(std::min<Eigen::Index>(X.rows() - 1, X.cols()));
  if (n_pcs < 1 || n_pcs > max_c) {
    throw SpecError("pcr: component count " + std::to_string(n_pcs) + " outside [1," +
                    std::to_string(max_c) + "]");
  }
  const Vector x_mean = X.colwise().mean();
  const double y_mean = y.mean();
  const Matrix Xc = X.rowwise() - x_mean.transpose();
  const Vector yc = y.array() - y_mean;

  Eigen::BDCSVD<Matrix> svd(Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();

  LinearFit fit;
  int rank = 0;
  const double tol = (s.size() ? s[0] : 0.0) * 1e-12;
  for (int i = 0; i < s.size(); ++i) rank += s[i] > tol;
  int k = n_pcs;
  if (k > rank) {
    fit.warnings.push_back("pcr: rank " + std::to_string(rank) + " below requested " +
                           std::to_string(n_pcs) + " components; reduced");
    k = std::max(1, rank);
  }

  // Regression of y on orthogonal scores t_i = u_i * s_i.
  Vector beta = Vector::Zero(X.cols());
  for (int i = 0; i < k; ++i) {
    const Vector t = svd.matrixU().col(i) * s[i];
    const double coef = t.dot(yc) / (s[i] * s[i]);
    beta += coef * svd.matrixV().col(i);
  }

  fit.coefficients = beta;
  fit.intercept = y_mean - x_mean.dot(beta);
  fit.n_components = k;
  fit.training_residuals = y - (X * beta).array().matrix() - Vector::Constant(y.size(), fit.intercept);
  return fit;
}

ClassifierFit fit_plsda(const Matrix& X, const std::vector<int>& labels, int n_lvs) {
  check_shapes(X, static_cast<Eigen::Index>(labels.size()), "plsda");
  const int c = count_classes(labels, "plsda");
  const int max_c = static_cast<int>(std::min<Eigen::Index>(X.rows() - 1, X.cols()));
  if (n_lvs < 1 || n_lvs > max_c) {
    throw SpecError("plsda: latent variable count " + std::to_string(n_lvs) + " outside [1," +
                    std::to_string(max_c) + "]");
  }

  const Vector x_mean = X.colwise().mean();
  const Matrix Xc = X.rowwise() - x_mean.transpose();
  Matrix Y = one_hot(labels, c);
  const Vector y_mean = Y.colwise().mean();
  const Matrix Yc = Y.rowwise() - y_mean.transpose();

  const PlsDecomposition dec = nipals_pls(Xc, Yc, n_lvs);
  const Matrix B = pls_coefficients(dec);  // d x c

  ClassifierFit fit;
  fit.n_classes = c;
  fit.n_components = n_lvs;
  fit.weights = B.transpose();
  fit.intercepts = y_mean - B.transpose() * x_mean;
  return fit;
}

LinearFit fit_elastic_net(const Matrix& X, const Vector& y, double lambda, double l1_ratio) {
  check_shapes(X, y.size(), "elastic_net");
  if (lambda < 0.0) throw SpecError("elastic_net: lambda must be >= 0");
  if (l1_ratio < 0.0 || l1_ratio > 1.0) throw SpecError("elastic_net: l1_ratio must lie in [0,1]");

  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  const Vector mu = X.colwise().mean();
  Vector sd(d);
  Matrix Z = X.rowwise() - mu.transpose();
  for (int j = 0; j < d; ++j) {
    const double s = std::sqrt(Z.col(j).squaredNorm() / n);
    sd[j] = (s < kTinyNorm) ? 1.0 : s;
    Z.col(j) /= sd[j];
  }
  const double y_mean = y.mean();
  const Vector yc = y.array() - y_mean;

  Vector znorm2(d);
  for (int j = 0; j < d; ++j) znorm2[j] = Z.col(j).squaredNorm();

  Vector beta = Vector::Zero(d);
  Vector resid = yc;
  const double l1 = lambda * l1_ratio;
  const double l2 = lambda * (1.0 - l1_ratio);

  LinearFit fit;
  fit.lambda = lambda;
  fit.l1_ratio = l1_ratio;

  auto objective = [&] {
    return 0.5 * resid.squaredNorm() / n +
           lambda * (l1_ratio * beta.cwiseAbs().sum() + (1.0 - l1_ratio) * 0.5 * beta.squaredNorm());
  };

  const int max_sweeps = 50000;
  double max_delta = 0.0;
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    max_delta = 0.0;
    for (int j = 0; j < d; ++j) {
      if (znorm2[j] < kTinyNorm) continue;
      const double old = beta[j];
      const double rho = Z.col(j).dot(resid) / n + (znorm2[j] / n) * old;
      const double soft = std::copysign(std::max(0.0, std::abs(rho) - l1), rho);
      const double next = soft / (znorm2[j] / n + l2);
      if (next != old) {
        resid -= Z.col(j) * (next - old);
        beta[j] = next;
      }
      max_delta = std::max(max_delta, std::abs(next - old));
    }
    fit.objective_trace.push_back(objective());
    if (max_delta < 1e-7) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw SpecError("elastic_net: coordinate descent did not converge (last max update " +
                    format_double(max_delta, 6) + ")");
  }

  fit.coefficients = beta.array() / sd.array();
  fit.intercept = y_mean - mu.dot(fit.coefficients);
  fit.training_residuals = y - (X * fit.coefficients).array().matrix() -
                           Vector::Constant(y.size(), fit.intercept);
  return fit;
}

double logreg_loss(const Matrix& W, const Vector& b, const Matrix& X,
                   const std::vector<int>& labels, double lambda) {
  const int n = static_cast<int>(X.rows());
  Matrix scores = X * W.transpose();
  scores.rowwise() += b.transpose();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double m = scores.row(i).maxCoeff();
    const double lse = m + std::log((scores.row(i).array() - m).exp().sum());
    loss += lse - scores(i, labels[static_cast<std::size_t>(i)]);
  }
  return loss / n + 0.5 * lambda * W.squaredNorm();
}

void logreg_gradient(const Matrix& W, const Vector& b, const Matrix& X,
                     const std::vector<int>& labels, double lambda, Matrix& gW, Vector& gb) {
  const int n = static_cast<int>(X.rows());
  Matrix scores = X * W.transpose();
  scores.rowwise() += b.transpose();
  Matrix P(scores.rows(), scores.cols());
  for (int i = 0; i < n; ++i) {
    const double m = scores.row(i).maxCoeff();
    const Eigen::ArrayXd e = (scores.row(i).array() - m).exp();
    P.row(i) = e / e.sum();
    P(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
  P /= static_cast<double>(n);
  gW = P.transpose() * X + lambda * W;
  gb = P.colwise().sum();
}

ClassifierFit fit_logreg(const Matrix& X, const std::vector<int>& labels, double lambda) {
  check_shapes(X, static_cast<Eigen::Index>(labels.size()), "logreg");
  if (lambda < 0.0) throw SpecError("logreg: lambda must be >= 0");
  const int c = count_classes(labels, "logreg");
  const int d = static_cast<int>(X.cols());

  Matrix W = Matrix::Zero(c, d);
  Vector b = Vector::Zero(c);
  Matrix gW;
  Vector gb;

  double step = 1.0;
  double loss = logreg_loss(W, b, X, labels, lambda);
  const int max_iter = 20000;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    logreg_gradient(W, b, X, labels, lambda, gW, gb);
    const double gmax = std::max(gW.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff());
    if (gmax < 1e-6) {
      converged = true;
      break;
    }
    const double gnorm2 = gW.squaredNorm() + gb.squaredNorm();
    // Backtracking line search on the full gradient step.
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Matrix Wn = W - step * gW;
      const Vector bn = b - step * gb;
      const double ln = logreg_loss(Wn, bn, X, labels, lambda);
      if (ln <= loss - 0.5 * step * gnorm2) {
        W = Wn;
        b = bn;
        loss = ln;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // Step underflow: gradient magnitudes are at numerical noise level.
      converged = gmax < 1e-4;
      break;
    }
    step = std::min(step * 1.5, 1e6);
  }
  if (!converged) {
    throw SpecError("logreg: gradient descent did not converge within iteration cap");
  }

  ClassifierFit fit;
  fit.n_classes = c;
  fit.lambda = lambda;
  fit.weights = W;
  fit.intercepts = b;
  return fit;
}

Vector predict(const LinearFit& fit, const Matrix& X) {
  if (X.cols() != fit.coefficients.size()) {
    throw SpecError("predict: feature count " + std::to_string(X.cols()) +
                    " does not match fit (" + std::to_string(fit.coefficients.size()) + ")");
  }
  return (X * fit.coefficients).array() + fit.intercept;
}

Matrix decision_scores(const ClassifierFit& fit, const Matrix& X) {
  if (X.cols() != fit.weights.cols()) {
    throw SpecError("predict: feature count " + std::to_string(X.cols()) +
                    " does not match fit (" + std::to_string(fit.weights.cols()) + ")");
  }
  Matrix scores = X * fit.weights.transpose();
  scores.rowwise() += fit.intercepts.transpose();
  return scores;
}

std::vector<int> predict(const ClassifierFit& fit, const Matrix& X) {
  const Matrix scores = decision_scores(fit, X);
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (int i = 0; i < scores.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, best)) best = c;  // ties keep the lowest id
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace speclab::linmodels
