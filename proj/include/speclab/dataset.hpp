#pragma once

#include "speclab/common.hpp"

#include <memory>
#include <mutex>
#include <optional>
#include <utility>

namespace speclab::dataset {

// Row-read instrumentation used by the harness to prove that test rows are
// never touched before final evaluation.
class AccessLog {
public:
  enum class Phase { selection, final_eval };

  void set_phase(Phase p) {
    std::lock_guard<std::mutex> lock(mu_);
    phase_ = p;
  }

  void record(int row) {
    std::lock_guard<std::mutex> lock(mu_);
    reads_.emplace_back(row, phase_);
  }

  std::vector<std::pair<int, Phase>> reads() const {
    std::lock_guard<std::mutex> lock(mu_);
    return reads_;
  }

  bool rows_read_during_selection(const std::vector<int>& rows) const;

private:
  mutable std::mutex mu_;
  Phase phase_ = Phase::selection;
  std::vector<std::pair<int, Phase>> reads_;
};

struct SpectralDataset {
  Vector wavenumbers;  // length n_features, strictly monotonic (either direction)
  Matrix spectra;      // n_samples x n_features
  Vector targets;      // concentrations (regression) or class ids (classification)
  Task task = Task::regression;
  std::vector<std::string> class_names;  // optional, classification only
  std::shared_ptr<AccessLog> access_log;

  int n_samples() const { return static_cast<int>(spectra.rows()); }
  int n_features() const { return static_cast<int>(spectra.cols()); }
  int n_classes() const;

  Vector row(int i) const;
  Matrix rows(const std::vector<int>& idx) const;
  Vector targets_at(const std::vector<int>& idx) const;
  std::vector<int> labels_at(const std::vector<int>& idx) const;

  // Throws SpecError if any invariant is violated.
  void validate() const;
};

struct SplitIndex {
  std::vector<int> train_idx;
  std::vector<int> test_idx;
};

struct FoldPlan {
  // (train indices, validation indices) pairs; indices refer to dataset rows.
  std::vector<std::pair<std::vector<int>, std::vector<int>>> folds;
};

SpectralDataset load_csv(const std::string& path, std::optional<Task> task = std::nullopt);
void save_csv(const SpectralDataset& ds, const std::string& path);

// Deterministic shuffle split; stratified per class for classification.
SplitIndex random_split(const SpectralDataset& ds, double train_fraction, std::uint64_t seed);

FoldPlan loocv_folds(const std::vector<int>& train_idx);

// ---- Synthetic mixture generator ------------------------------------------

struct Band {
  double center = 0.0;     // cm^-1
  double width = 1.0;      // Gaussian sigma, cm^-1
  double amplitude = 1.0;  // absorbance per concentration unit
};

struct Analyte {
  std::string name;
  std::vector<Band> bands;
  double conc_lo = 0.0;
  double conc_hi = 1.0;
};

// Classification mode: each recipe fixes nominal concentrations per analyte,
// jittered by rel_spread; the target is the recipe index.
struct Recipe {
  std::string name;
  std::vector<double> nominal;  // one entry per analyte
};

struct GeneratorConfig {
  int n_samples = 100;
  double axis_start = 1800.0;
  double axis_end = 900.0;
  int axis_points = 200;
  std::vector<Analyte> analytes;
  std::string target_analyte;   // regression mode: which concentration is the target
  std::vector<Recipe> recipes;  // classification mode when non-empty
  double recipe_spread = 0.1;   // relative jitter on recipe concentrations
  int baseline_degree = 0;
  double baseline_scale = 0.0;  // polynomial coefficients drawn from +-scale
  double scatter_spread = 0.0;  // per-sample factor from U(1-s, 1+s)
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

GeneratorConfig load_generator_config(const std::string& path);
SpectralDataset synth_mixture(const GeneratorConfig& cfg, std::uint64_t seed);

}  // namespace speclab::dataset
