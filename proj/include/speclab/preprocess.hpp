#pragma once

#include "speclab/common.hpp"

#include <optional>

namespace speclab::preprocess {

enum class Scatter { none, normalise, snv, msc };
enum class FilterKind { none, savgol, fourier, butterworth, hamming_fir, moving_average };
enum class FourierWindow { rect, blackman_harris, hamming, hann };
enum class BaselineKind { none, constant, linear, deriv1, deriv2 };
enum class Scaling { none, mean_center, autoscale };

struct FilterSpec {
  FilterKind kind = FilterKind::none;
  // savgol
  int sg_order = 2;
  int sg_width = 11;
  // fourier
  FourierWindow window = FourierWindow::rect;
  int cutoff = 30;
  double winsize = 1.1;
  // butterworth
  int bw_order = 2;
  double bw_cutoff = 0.2;  // fraction of Nyquist in (0,1)
  // hamming FIR
  int fir_taps = 11;
  double fir_cutoff = 0.2;
  // moving average
  int ma_width = 5;

  bool operator==(const FilterSpec&) const = default;
};

// One five-slot pre-processing configuration. Steps are applied in the fixed
// order binning -> scatter -> filter -> baseline -> scaling.
struct PipelineSpec {
  int binning = 1;
  Scatter scatter = Scatter::none;
  FilterSpec filter;
  BaselineKind baseline = BaselineKind::none;
  Scaling scaling = Scaling::none;

  bool operator==(const PipelineSpec&) const = default;

  // Canonical single-line form, e.g. bin=4|scatter=snv|filter=savgol(2,11)|baseline=deriv1|scale=auto
  std::string to_string() const;
  static PipelineSpec from_string(const std::string& text);

  // Number of slots that do something (binning counts when factor > 1).
  int active_steps() const;

  // Checks structural invariants against a feature count; on failure returns
  // false and, when `why` is given, stores the reason.
  bool valid_for(int n_features, std::string* why = nullptr) const;
};

// Train-derived statistics frozen at fit time; test application reuses them.
struct FittedPipeline {
  PipelineSpec spec;
  Vector binned_axis;
  double axis_spacing = 1.0;
  Vector msc_reference;  // mean training spectrum at the MSC stage
  Vector scale_mean;
  Vector scale_std;
  std::vector<std::string> warnings;

  int output_features() const { return static_cast<int>(binned_axis.size()); }
  Matrix apply(const Matrix& X) const;
};

// ---- Elementary transforms --------------------------------------------------

Matrix bin(const Matrix& X, int factor);
Vector bin_axis(const Vector& axis, int factor);

Vector normalise(const Vector& x);
Vector snv(const Vector& x);

// Rows regressed as a*ref+b, corrected to (row-b)/a. Rows with |a| below
// 1e-8 are left unchanged; a note is appended to `warnings` when provided.
Matrix msc(const Matrix& X, const Vector& reference, std::vector<std::string>* warnings = nullptr);

// Least-squares polynomial smoother / differentiator. The window shrinks at
// the spectrum ends instead of padding; `spacing` converts index-space
// derivatives to axis units.
Vector savgol(const Vector& x, int order, int width, int deriv, double spacing = 1.0);

// Dense weights of the central Savitzky-Golay window (exposed for verification).
Vector savgol_weights(int order, int width, int deriv);

Vector fourier_filter(const Vector& x, FourierWindow window, int cutoff, double winsize);

Vector butterworth_filtfilt(const Vector& x, int order, double cutoff);
Vector hamming_fir_filter(const Vector& x, int taps, double cutoff);
Vector moving_average(const Vector& x, int width);

// Butterworth coefficient design (b, a), exposed for oracle tests.
std::pair<std::vector<double>, std::vector<double>> butterworth_design(int order, double cutoff);

// Single forward IIR pass (direct form II transposed). `zi` may be empty.
Vector lfilter(const std::vector<double>& b, const std::vector<double>& a, const Vector& x,
               const Vector& zi = Vector());

Vector baseline_correct(const Vector& x, BaselineKind kind, double spacing = 1.0);

// Column statistics fitted on `train`, applied to both matrices. Zero-variance
// columns pass through centered; a note is appended to `warnings` if provided.
std::pair<Matrix, Matrix> scale_fit_apply(const Matrix& train, const Matrix& test, Scaling kind,
                                          std::vector<std::string>* warnings = nullptr);

// ---- Grid enumeration -------------------------------------------------------

struct GridConfig {
  std::vector<int> binning = {1, 2, 4, 8, 16};
  std::vector<Scatter> scatter = {Scatter::none, Scatter::normalise, Scatter::snv, Scatter::msc};
  std::vector<FilterSpec> filters;  // includes the none filter
  std::vector<BaselineKind> baseline = {BaselineKind::none, BaselineKind::constant,
                                        BaselineKind::linear, BaselineKind::deriv1,
                                        BaselineKind::deriv2};
  std::vector<Scaling> scaling = {Scaling::none, Scaling::mean_center, Scaling::autoscale};
  int n_features = 0;  // 0 disables width-dependent validity filtering

  // The full published search grid.
  static GridConfig defaults(int n_features);
  // A small grid useful for bounded desk-scale runs.
  static GridConfig compact(int n_features);
};

std::vector<FilterSpec> default_filter_grid();

std::vector<PipelineSpec> enumerate_pipelines(const GridConfig& grid);

FittedPipeline fit_pipeline(const PipelineSpec& spec, const Matrix& train, const Vector& axis);

std::tuple<Matrix, Matrix, FittedPipeline> fit_apply_pipeline(const PipelineSpec& spec,
                                                              const Matrix& train,
                                                              const Matrix& test,
                                                              const Vector& axis);

}  // namespace speclab::preprocess
