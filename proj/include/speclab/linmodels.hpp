#pragma once

#include "speclab/common.hpp"

namespace speclab::linmodels {

struct LinearFit {
  Vector coefficients;  // in the original feature space
  double intercept = 0.0;
  int n_components = 0;  // PCs or LVs when applicable
  double lambda = 0.0;
  double l1_ratio = 0.0;
  Vector training_residuals;
  std::vector<double> objective_trace;  // elastic net: per-sweep objective
  std::vector<std::string> warnings;
};

struct ClassifierFit {
  // One score row per class; prediction is the argmax of X*W^T + intercepts.
  Matrix weights;  // n_classes x n_features
  Vector intercepts;
  int n_classes = 0;
  int n_components = 0;  // PLS-DA latent variables
  double lambda = 0.0;   // logistic penalty
};

LinearFit fit_pcr(const Matrix& X, const Vector& y, int n_pcs);
LinearFit fit_plsr(const Matrix& X, const Vector& y, int n_lvs);

// Multivariate PLS on centered one-hot responses; argmax prediction.
ClassifierFit fit_plsda(const Matrix& X, const std::vector<int>& labels, int n_lvs);

// Coordinate descent on 0.5*||y-Xb||^2/n + lambda*(l1*|b|_1 + (1-l1)*|b|_2^2/2),
// with internal column standardization.
LinearFit fit_elastic_net(const Matrix& X, const Vector& y, double lambda, double l1_ratio);

// Multinomial softmax with an L2 penalty on the weights (not the biases).
ClassifierFit fit_logreg(const Matrix& X, const std::vector<int>& labels, double lambda);

Vector predict(const LinearFit& fit, const Matrix& X);
std::vector<int> predict(const ClassifierFit& fit, const Matrix& X);
Matrix decision_scores(const ClassifierFit& fit, const Matrix& X);

// Internal PLS machinery exposed so tests can check score orthogonality.
struct PlsDecomposition {
  Matrix scores;       // n x A
  Matrix x_weights;    // d x A
  Matrix x_loadings;   // d x A
  Matrix y_loadings;   // m x A
};
PlsDecomposition nipals_pls(const Matrix& Xc, const Matrix& Yc, int n_components);

}  // namespace speclab::linmodels
