#include "speclab/mlmodels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace speclab::mlmodels {

// ---- kNN --------------------------------------------------------------------

KnnFit fit_knn(const Matrix& X, const std::vector<int>& labels, int k) {
  if (X.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw SpecError("knn: X rows and label count differ");
  }
  if (k < 1 || k > X.rows()) {
    throw SpecError("knn: k must lie in [1," + std::to_string(X.rows()) + "], got " +
                    std::to_string(k));
  }
  return {X, labels, k};
}

int knn_predict(const KnnFit& fit, const Vector& x) {
  if (x.size() != fit.train.cols()) throw SpecError("knn: feature count mismatch");
  const int n = static_cast<int>(fit.train.rows());

  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    dist[static_cast<std::size_t>(i)] = {(fit.train.row(i).transpose() - x).squaredNorm(), i};
  }
  std::partial_sort(dist.begin(), dist.begin() + fit.k, dist.end());

  // Majority vote; ties broken by smallest mean distance, then lowest id.
  std::map<int, std::pair<int, double>> votes;  // class -> (count, distance sum)
  for (int i = 0; i < fit.k; ++i) {
    auto& v = votes[fit.labels[static_cast<std::size_t>(dist[static_cast<std::size_t>(i)].second)]];
    v.first += 1;
    v.second += std::sqrt(dist[static_cast<std::size_t>(i)].first);
  }
  int best = -1;
  int best_count = -1;
  double best_mean = 0.0;
  for (const auto& [cls, v] : votes) {
    const double mean = v.second / v.first;
    if (v.first > best_count ||
        (v.first == best_count && (mean < best_mean || (mean == best_mean && cls < best)))) {
      best = cls;
      best_count = v.first;
      best_mean = mean;
    }
  }
  return best;
}

std::vector<int> knn_predict(const KnnFit& fit, const Matrix& X) {
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (int i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = knn_predict(fit, X.row(i));
  return out;
}

// ---- linear SVM -------------------------------------------------------------

double svm_objective(const Vector& w, double b, const Matrix& X, const std::vector<int>& y_pm,
                     double C) {
  double hinge = 0.0;
  for (int i = 0; i < X.rows(); ++i) {
    hinge += std::max(0.0, 1.0 - y_pm[static_cast<std::size_t>(i)] * (X.row(i).dot(w) + b));
  }
  return 0.5 * w.squaredNorm() + C * hinge;
}

std::pair<Vector, double> svm_train_binary(const Matrix& X, const std::vector<int>& y_pm, double C,
                                           int max_epochs) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());

  // Bias handled through an augmented constant feature (regularized, the
  // usual dual coordinate descent arrangement).
  std::vector<double> qii(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) qii[static_cast<std::size_t>(i)] = X.row(i).squaredNorm() + 1.0;

  Vector w = Vector::Zero(d);
  double b = 0.0;
  std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);

  const double tol = 1e-6;
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    double max_violation = 0.0;
    for (int i = 0; i < n; ++i) {
      const double yi = y_pm[static_cast<std::size_t>(i)];
      const double g = yi * (X.row(i).dot(w) + b) - 1.0;
      double pg = g;
      const double a = alpha[static_cast<std::size_t>(i)];
      if (a <= 0.0) pg = std::min(g, 0.0);
      if (a >= C) pg = std::max(g, 0.0);
      max_violation = std::max(max_violation, std::abs(pg));
      if (pg != 0.0) {
        const double next = std::clamp(a - g / qii[static_cast<std::size_t>(i)], 0.0, C);
        const double delta = next - a;
        if (delta != 0.0) {
          alpha[static_cast<std::size_t>(i)] = next;
          w += delta * yi * X.row(i).transpose();
          b += delta * yi;
        }
      }
    }
    if (max_violation < tol) return {w, b};
  }
  return {w, b};  // cap reached: best iterate, accuracy checked by the caller
}

SvmFit fit_svm(const Matrix& X, const std::vector<int>& labels, double C) {
  if (X.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw SpecError("svm: X rows and label count differ");
  }
  if (C <= 0.0) throw SpecError("svm: C must be positive");
  int n_classes = 0;
  for (int l : labels) {
    if (l < 0) throw SpecError("svm: negative class id");
    n_classes = std::max(n_classes, l + 1);
  }
  if (n_classes < 2) throw SpecError("svm: need at least 2 classes");

  SvmFit fit;
  fit.C = C;
  fit.n_classes = n_classes;
  fit.weights.resize(n_classes, X.cols());
  fit.bias.resize(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    std::vector<int> y_pm(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y_pm[i] = labels[i] == c ? 1 : -1;
    const auto [w, b] = svm_train_binary(X, y_pm, C);
    fit.weights.row(c) = w.transpose();
    fit.bias[c] = b;
  }
  return fit;
}

std::vector<int> svm_predict(const SvmFit& fit, const Matrix& X) {
  if (X.cols() != fit.weights.cols()) throw SpecError("svm: feature count mismatch");
  Matrix scores = X * fit.weights.transpose();
  scores.rowwise() += fit.bias.transpose();
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (int i = 0; i < scores.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

// ---- random forest regression -----------------------------------------------

namespace {

struct TreeBuilder {
  const Matrix& X;
  const Vector& y;
  int max_depth;
  int mtry;
  Rng& rng;
  Tree tree;

  int build(std::vector<int>& idx, int depth) {
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    double sum = 0.0;
    for (int i : idx) sum += y[i];
    const double mean = sum / static_cast<double>(idx.size());
    tree.nodes[static_cast<std::size_t>(node_id)].value = mean;

    if (static_cast<int>(idx.size()) < 2) return node_id;
    if (max_depth > 0 && depth >= max_depth) return node_id;

    double sse = 0.0;
    for (int i : idx) sse += (y[i] - mean) * (y[i] - mean);
    if (sse < 1e-24) return node_id;  // constant targets

    // Random feature subset of size mtry (without replacement).
    const int d = static_cast<int>(X.cols());
    std::vector<int> features(static_cast<std::size_t>(d));
    std::iota(features.begin(), features.end(), 0);
    for (int f = 0; f < mtry; ++f) {
      const std::size_t pick = f + rng.uniform_index(static_cast<std::size_t>(d - f));
      std::swap(features[static_cast<std::size_t>(f)], features[pick]);
    }

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 0.0;
    std::vector<std::pair<double, int>> vals;
    vals.reserve(idx.size());
    for (int f = 0; f < mtry; ++f) {
      const int feat = features[static_cast<std::size_t>(f)];
      vals.clear();
      for (int i : idx) vals.emplace_back(X(i, feat), i);
      std::sort(vals.begin(), vals.end());

      // Prefix sums over the sorted order; thresholds at midpoints between
      // distinct consecutive values.
      double left_sum = 0.0, left_sq = 0.0;
      double total_sum = 0.0, total_sq = 0.0;
      for (const auto& [v, i] : vals) {
        total_sum += y[i];
        total_sq += y[i] * y[i];
      }
      const double parent_sse = total_sq - total_sum * total_sum / static_cast<double>(vals.size());
      for (std::size_t s = 0; s + 1 < vals.size(); ++s) {
        const double yi = y[vals[s].second];
        left_sum += yi;
        left_sq += yi * yi;
        if (vals[s].first == vals[s + 1].first) continue;
        const double nl = static_cast<double>(s + 1);
        const double nr = static_cast<double>(vals.size() - s - 1);
        const double right_sum = total_sum - left_sum;
        const double right_sq = total_sq - left_sq;
        const double sse_l = left_sq - left_sum * left_sum / nl;
        const double sse_r = right_sq - right_sum * right_sum / nr;
        const double gain = parent_sse - sse_l - sse_r;
        if (gain > best_gain + 1e-15) {
          best_gain = gain;
          best_feature = feat;
          best_threshold = 0.5 * (vals[s].first + vals[s + 1].first);
        }
      }
    }
    if (best_feature < 0) return node_id;

    std::vector<int> left_idx, right_idx;
    for (int i : idx) {
      (X(i, best_feature) <= best_threshold ? left_idx : right_idx).push_back(i);
    }
    if (left_idx.empty() || right_idx.empty()) return node_id;

    tree.nodes[static_cast<std::size_t>(node_id)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(node_id)].threshold = best_threshold;
    const int left = build(left_idx, depth + 1);
    tree.nodes[static_cast<std::size_t>(node_id)].left = left;
    const int right = build(right_idx, depth + 1);
    tree.nodes[static_cast<std::size_t>(node_id)].right = right;
    return node_id;
  }
};

}  // namespace

ForestFit fit_forest(const Matrix& X, const Vector& y, int n_trees, int max_depth,
                     std::uint64_t seed) {
  if (X.rows() != y.size()) throw SpecError("forest: X rows and target count differ");
  if (n_trees < 1) throw SpecError("forest: need at least one tree");
  if (max_depth < 0) throw SpecError("forest: max_depth must be >= 0 (0 = unbounded)");
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  const int mtry = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d)))));

  ForestFit fit;
  fit.n_trees = n_trees;
  fit.max_depth = max_depth;
  fit.n_features = d;
  fit.seed = seed;
  fit.y_min = y.minCoeff();
  fit.y_max = y.maxCoeff();
  fit.trees.reserve(static_cast<std::size_t>(n_trees));

  for (int t = 0; t < n_trees; ++t) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t) + 0xf0e0));
    std::vector<int> sample(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      sample[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n)));
    }
    TreeBuilder builder{X, y, max_depth, mtry, rng, {}};
    builder.build(sample, 0);
    fit.trees.push_back(std::move(builder.tree));
  }
  return fit;
}

double tree_predict(const Tree& tree, const Vector& x) {
  int node = 0;
  while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
    node = (x[nd.feature] <= nd.threshold) ? nd.left : nd.right;
  }
  return tree.nodes[static_cast<std::size_t>(node)].value;
}

double forest_predict(const ForestFit& fit, const Vector& x) {
  if (fit.trees.empty()) throw SpecError("forest: empty model");
  if (x.size() != fit.n_features) throw SpecError("forest: feature count mismatch");
  double acc = 0.0;
  for (const Tree& t : fit.trees) acc += tree_predict(t, x);
  return acc / static_cast<double>(fit.trees.size());
}

Vector forest_predict(const ForestFit& fit, const Matrix& X) {
  Vector out(X.rows());
  for (int i = 0; i < X.rows(); ++i) out[i] = forest_predict(fit, Vector(X.row(i)));
  return out;
}

}  // namespace speclab::mlmodels
