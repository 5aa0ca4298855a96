#pragma once

#include "speclab/common.hpp"

namespace speclab::mlmodels {

struct KnnFit {
  Matrix train;
  std::vector<int> labels;
  int k = 3;
};

KnnFit fit_knn(const Matrix& X, const std::vector<int>& labels, int k);
int knn_predict(const KnnFit& fit, const Vector& x);
std::vector<int> knn_predict(const KnnFit& fit, const Matrix& X);

struct SvmFit {
  // One-vs-rest linear machines; decision = argmax of W x + b.
  Matrix weights;  // n_classes x n_features (binary: 1 row, sign decision)
  Vector bias;
  double C = 1.0;
  int n_classes = 2;
};

SvmFit fit_svm(const Matrix& X, const std::vector<int>& labels, double C);
std::vector<int> svm_predict(const SvmFit& fit, const Matrix& X);

// Primal objective 0.5*||w||^2 + C*sum hinge, exposed for convergence checks.
double svm_objective(const Vector& w, double b, const Matrix& X, const std::vector<int>& y_pm,
                     double C);

// Binary trainer (labels in {-1,+1}) via dual coordinate descent.
std::pair<Vector, double> svm_train_binary(const Matrix& X, const std::vector<int>& y_pm, double C,
                                           int max_epochs = 2000);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;
};

struct ForestFit {
  std::vector<Tree> trees;
  int n_trees = 0;
  int max_depth = 0;  // 0 = unbounded
  int n_features = 0;
  std::uint64_t seed = 0;
  double y_min = 0.0;
  double y_max = 0.0;
};

ForestFit fit_forest(const Matrix& X, const Vector& y, int n_trees, int max_depth,
                     std::uint64_t seed);
double forest_predict(const ForestFit& fit, const Vector& x);
Vector forest_predict(const ForestFit& fit, const Matrix& X);
double tree_predict(const Tree& tree, const Vector& x);

}  // namespace speclab::mlmodels
