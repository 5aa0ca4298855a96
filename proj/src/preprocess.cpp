#include "speclab/preprocess.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>

namespace speclab::preprocess {

namespace {

constexpr double kMscSlopeTol = 1e-8;
constexpr double kZeroVarTol = 1e-12;

double sample_std(const Vector& x) {
  const double mean = x.mean();
  const double ss = (x.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace

// ---- Elementary transforms --------------------------------------------------

Matrix bin(const Matrix& X, int factor) {
  if (factor < 1) throw SpecError("binning factor must be >= 1, got " + std::to_string(factor));
  if (factor == 1) return X;
  const int nb = static_cast<int>(X.cols()) / factor;
  if (nb < 1) throw SpecError("binning factor " + std::to_string(factor) + " exceeds channel count");
  Matrix out(X.rows(), nb);
  for (int g = 0; g < nb; ++g) {
    out.col(g) = X.middleCols(g * factor, factor).rowwise().mean();
  }
  return out;
}

Vector bin_axis(const Vector& axis, int factor) {
  if (factor < 1) throw SpecError("binning factor must be >= 1, got " + std::to_string(factor));
  if (factor == 1) return axis;
  const int nb = static_cast<int>(axis.size()) / factor;
  Vector out(nb);
  for (int g = 0; g < nb; ++g) out[g] = axis.segment(g * factor, factor).mean();
  return out;
}

Vector normalise(const Vector& x) {
  const double norm = x.norm();
  if (norm < 1e-300) throw SpecError("cannot normalise an all-zero spectrum");
  return x / norm;
}

Vector snv(const Vector& x) {
  if (x.size() < 2) throw SpecError("SNV needs at least 2 channels");
  const double sd = sample_std(x);
  if (sd < kZeroVarTol) throw SpecError("SNV undefined for a constant spectrum");
  return (x.array() - x.mean()) / sd;
}

Matrix msc(const Matrix& X, const Vector& reference, std::vector<std::string>* warnings) {
  if (X.cols() != reference.size()) throw SpecError("MSC reference length mismatch");
  const double ref_mean = reference.mean();
  const Vector ref_c = reference.array() - ref_mean;
  const double ref_ss = ref_c.squaredNorm();
  if (ref_ss < kZeroVarTol) throw SpecError("MSC reference spectrum is constant");

  Matrix out(X.rows(), X.cols());
  for (int i = 0; i < X.rows(); ++i) {
    const Vector row = X.row(i);
    const double row_mean = row.mean();
    const double slope = ref_c.dot((row.array() - row_mean).matrix()) / ref_ss;
    const double offset = row_mean - slope * ref_mean;
    if (std::abs(slope) < kMscSlopeTol) {
      out.row(i) = row;
      if (warnings) {
        warnings->push_back("msc: row " + std::to_string(i) + " left uncorrected (slope " +
                            format_double(slope, 3) + ")");
      }
    } else {
      out.row(i) = (row.array() - offset) / slope;
    }
  }
  return out;
}

namespace {

// Weights for one Savitzky-Golay window: out = w . x[lo..hi], where t runs
// over offsets relative to the evaluation point.
Vector sg_window_weights(int t_lo, int t_hi, int order, int deriv) {
  const int w = t_hi - t_lo + 1;
  Matrix A(w, order + 1);
  for (int r = 0; r < w; ++r) {
    double p = 1.0;
    for (int c = 0; c <= order; ++c) {
      A(r, c) = p;
      p *= static_cast<double>(t_lo + r);
    }
  }
  // Row `deriv` of the pseudoinverse, times deriv!.
  const Matrix ata = A.transpose() * A;
  Vector e = Vector::Zero(order + 1);
  e[deriv] = 1.0;
  const Vector c = ata.ldlt().solve(e);
  Vector weights = A * c;
  double fact = 1.0;
  for (int k = 2; k <= deriv; ++k) fact *= k;
  return weights * fact;
}

}  // namespace

Vector savgol_weights(int order, int width, int deriv) {
  const int h = width / 2;
  return sg_window_weights(-h, h, order, deriv);
}

Vector savgol(const Vector& x, int order, int width, int deriv, double spacing) {
  const int n = static_cast<int>(x.size());
  if (width % 2 == 0) throw SpecError("Savitzky-Golay width must be odd");
  if (order < 1 || order >= width) throw SpecError("Savitzky-Golay order must satisfy 1 <= order < width");
  if (deriv < 0 || deriv > order) throw SpecError("Savitzky-Golay derivative order exceeds polynomial order");
  if (n < order + 1) throw SpecError("spectrum too short for Savitzky-Golay window");

  const int h = width / 2;
  const Vector center = sg_window_weights(-std::min(h, n - 1), std::min(h, n - 1), order, deriv);

  Vector out(n);
  const double scale = std::pow(spacing, -deriv);
  for (int i = 0; i < n; ++i) {
    int lo = std::max(0, i - h);
    int hi = std::min(n - 1, i + h);
    // Keep at least order+1 points by extending into the valid range.
    while (hi - lo < order && lo > 0) --lo;
    while (hi - lo < order && hi < n - 1) ++hi;
    double acc = 0.0;
    if (lo == i - h && hi == i + h) {
      for (int t = -h; t <= h; ++t) acc += center[t + h] * x[i + t];
    } else {
      const Vector w = sg_window_weights(lo - i, hi - i, order, deriv);
      for (int t = lo; t <= hi; ++t) acc += w[t - lo] * x[t];
    }
    out[i] = acc * scale;
  }
  return out;
}

namespace {

double half_window_gain(FourierWindow w, double u) {
  // u in [0,1]: 1 at the passband center, tapering toward the edge.
  switch (w) {
    case FourierWindow::rect:
      return 1.0;
    case FourierWindow::hann:
      return 0.5 * (1.0 + std::cos(M_PI * u));
    case FourierWindow::hamming:
      return 0.54 + 0.46 * std::cos(M_PI * u);
    case FourierWindow::blackman_harris:
      return 0.35875 + 0.48829 * std::cos(M_PI * u) + 0.14128 * std::cos(2.0 * M_PI * u) +
             0.01168 * std::cos(3.0 * M_PI * u);
  }
  return 0.0;
}

}  // namespace

Vector fourier_filter(const Vector& x, FourierWindow window, int cutoff, double winsize) {
  const int n = static_cast<int>(x.size());
  if (cutoff < 1 || cutoff >= n / 2) {
    throw SpecError("Fourier cutoff must lie in [1, n/2), got " + std::to_string(cutoff));
  }
  if (winsize < 1.0) throw SpecError("Fourier window size must be >= 1");

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  std::vector<double> input(x.data(), x.data() + n);
  fft.fwd(spectrum, input);

  // One-sided retained coefficients; the taper width is cutoff*winsize.
  const double width = (window == FourierWindow::rect) ? static_cast<double>(cutoff)
                                                       : static_cast<double>(cutoff) * winsize;
  for (int k = 0; k < n; ++k) {
    const double f = static_cast<double>(std::min(k, n - k));
    double gain = 0.0;
    if (window == FourierWindow::rect) {
      gain = (f < width) ? 1.0 : 0.0;
    } else {
      gain = (f <= width) ? half_window_gain(window, f / width) : 0.0;
    }
    spectrum[static_cast<std::size_t>(k)] *= gain;
  }

  std::vector<double> back;
  fft.inv(back, spectrum);
  return Eigen::Map<Vector>(back.data(), n);
}

// ---- IIR / FIR --------------------------------------------------------------

std::pair<std::vector<double>, std::vector<double>> butterworth_design(int order, double cutoff) {
  if (order < 1 || order > 8) throw SpecError("Butterworth order must lie in [1,8]");
  if (!(cutoff > 0.0 && cutoff < 1.0)) {
    throw SpecError("Butterworth cutoff must lie in (0,1) as a fraction of Nyquist");
  }
  using cd = std::complex<double>;
  const double wc = std::tan(M_PI * cutoff / 2.0);

  // Analog prototype poles mapped through the bilinear transform; zeros at z=-1.
  std::vector<cd> zpoles(order);
  for (int k = 0; k < order; ++k) {
    const double theta = M_PI * (2.0 * k + order + 1.0) / (2.0 * order);
    const cd p = wc * std::exp(cd(0.0, theta));
    zpoles[k] = (1.0 + p) / (1.0 - p);
  }

  auto poly_from_roots = [](const std::vector<cd>& roots) {
    std::vector<cd> c{1.0};
    for (const cd& r : roots) {
      std::vector<cd> next(c.size() + 1, 0.0);
      for (std::size_t i = 0; i < c.size(); ++i) {
        next[i] += c[i];
        next[i + 1] -= c[i] * r;
      }
      c = next;
    }
    return c;
  };

  const std::vector<cd> a_c = poly_from_roots(zpoles);
  const std::vector<cd> b_c = poly_from_roots(std::vector<cd>(order, cd(-1.0, 0.0)));

  std::vector<double> a(a_c.size()), b(b_c.size());
  for (std::size_t i = 0; i < a_c.size(); ++i) a[i] = a_c[i].real();
  // Normalize for unit gain at DC: H(1) = b(1)/a(1) = 1.
  double a_sum = 0.0, b_sum = 0.0;
  for (double v : a) a_sum += v;
  for (std::size_t i = 0; i < b_c.size(); ++i) b_sum += b_c[i].real();
  const double gain = a_sum / b_sum;
  for (std::size_t i = 0; i < b_c.size(); ++i) b[i] = b_c[i].real() * gain;
  return {b, a};
}

Vector lfilter(const std::vector<double>& b, const std::vector<double>& a, const Vector& x,
               const Vector& zi) {
  const std::size_t m = std::max(a.size(), b.size());
  std::vector<double> bb(b.begin(), b.end());
  std::vector<double> aa(a.begin(), a.end());
  bb.resize(m, 0.0);
  aa.resize(m, 0.0);

  Vector z = zi.size() ? zi : Vector::Zero(static_cast<int>(m - 1));
  Vector y(x.size());
  // Direct form II transposed.
  for (int i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double yi = bb[0] * xi + (m > 1 ? z[0] : 0.0);
    for (std::size_t k = 1; k + 1 < m; ++k) {
      z[static_cast<int>(k - 1)] = bb[k] * xi + z[static_cast<int>(k)] - aa[k] * yi;
    }
    if (m > 1) z[static_cast<int>(m - 2)] = bb[m - 1] * xi - aa[m - 1] * yi;
    y[i] = yi;
  }
  return y;
}

namespace {

// Steady-state initial conditions of the step response (unit input).
Vector filter_zi(const std::vector<double>& b, const std::vector<double>& a) {
  const int m = static_cast<int>(std::max(a.size(), b.size()));
  std::vector<double> bb(b.begin(), b.end());
  std::vector<double> aa(a.begin(), a.end());
  bb.resize(m, 0.0);
  aa.resize(m, 0.0);

  Matrix sys = Matrix::Identity(m - 1, m - 1);
  for (int r = 0; r < m - 1; ++r) sys(r, 0) += aa[r + 1];
  for (int r = 0; r + 1 < m - 1; ++r) sys(r, r + 1) -= 1.0;
  Vector rhs(m - 1);
  for (int r = 0; r < m - 1; ++r) rhs[r] = bb[r + 1] - aa[r + 1] * bb[0];
  return sys.colPivHouseholderQr().solve(rhs);
}

Vector odd_extend(const Vector& x, int pad) {
  const int n = static_cast<int>(x.size());
  Vector ext(n + 2 * pad);
  for (int i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  ext.segment(pad, n) = x;
  for (int i = 0; i < pad; ++i) ext[n + pad + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  return ext;
}

}  // namespace

Vector butterworth_filtfilt(const Vector& x, int order, double cutoff) {
  const auto [b, a] = butterworth_design(order, cutoff);
  const int n = static_cast<int>(x.size());
  int pad = 3 * static_cast<int>(std::max(a.size(), b.size()));
  if (pad >= n) pad = n - 1;
  if (pad < 1) throw SpecError("spectrum too short for Butterworth filtering");

  const Vector zi = filter_zi(b, a);
  const Vector ext = odd_extend(x, pad);

  Vector y = lfilter(b, a, ext, zi * ext[0]);
  y.reverseInPlace();
  y = lfilter(b, a, y, zi * y[0]);
  y.reverseInPlace();
  return y.segment(pad, n);
}

Vector hamming_fir_filter(const Vector& x, int taps, double cutoff) {
  const int n = static_cast<int>(x.size());
  if (taps < 3 || taps % 2 == 0) throw SpecError("FIR taps must be odd and >= 3");
  if (taps > n) throw SpecError("FIR taps exceed channel count");
  if (!(cutoff > 0.0 && cutoff < 1.0)) throw SpecError("FIR cutoff must lie in (0,1)");

  const int mid = (taps - 1) / 2;
  Vector h(taps);
  for (int m = 0; m < taps; ++m) {
    const double t = static_cast<double>(m - mid);
    const double arg = M_PI * cutoff * t;
    const double sinc = (t == 0.0) ? 1.0 : std::sin(arg) / arg;
    const double win = 0.54 - 0.46 * std::cos(2.0 * M_PI * m / (taps - 1));
    h[m] = cutoff * sinc * win;
  }
  h /= h.sum();  // exact unit DC gain

  // Symmetric (zero-phase) application with mirror boundaries.
  Vector out(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int m = 0; m < taps; ++m) {
      int idx = i + m - mid;
      if (idx < 0) idx = -idx;
      if (idx >= n) idx = 2 * n - 2 - idx;
      acc += h[m] * x[idx];
    }
    out[i] = acc;
  }
  return out;
}

Vector moving_average(const Vector& x, int width) {
  const int n = static_cast<int>(x.size());
  if (width < 3 || width % 2 == 0) throw SpecError("moving-average width must be odd and >= 3");
  if (width > n) throw SpecError("moving-average width exceeds channel count");
  const int mid = width / 2;
  Vector out(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int m = -mid; m <= mid; ++m) {
      int idx = i + m;
      if (idx < 0) idx = -idx;
      if (idx >= n) idx = 2 * n - 2 - idx;
      acc += x[idx];
    }
    out[i] = acc / width;
  }
  return out;
}

Vector baseline_correct(const Vector& x, BaselineKind kind, double spacing) {
  const int n = static_cast<int>(x.size());
  if (n < 3) throw SpecError("baseline correction needs at least 3 channels");
  switch (kind) {
    case BaselineKind::none:
      return x;
    case BaselineKind::constant:
      return x.array() - x.minCoeff();
    case BaselineKind::linear: {
      // Least-squares line over the index.
      const double tm = (n - 1) / 2.0;
      double stt = 0.0, sty = 0.0;
      const double ym = x.mean();
      for (int i = 0; i < n; ++i) {
        const double t = i - tm;
        stt += t * t;
        sty += t * (x[i] - ym);
      }
      const double slope = sty / stt;
      Vector out(n);
      for (int i = 0; i < n; ++i) out[i] = x[i] - (ym + slope * (i - tm));
      return out;
    }
    case BaselineKind::deriv1: {
      Vector out(n);
      out[0] = (x[1] - x[0]) / spacing;
      for (int i = 1; i + 1 < n; ++i) out[i] = (x[i + 1] - x[i - 1]) / (2.0 * spacing);
      out[n - 1] = (x[n - 1] - x[n - 2]) / spacing;
      return out;
    }
    case BaselineKind::deriv2: {
      const double s2 = spacing * spacing;
      Vector out(n);
      for (int i = 1; i + 1 < n; ++i) out[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) / s2;
      out[0] = out[1];
      out[n - 1] = out[n - 2];
      return out;
    }
  }
  throw SpecError("unknown baseline kind");
}

std::pair<Matrix, Matrix> scale_fit_apply(const Matrix& train, const Matrix& test, Scaling kind,
                                          std::vector<std::string>* warnings) {
  if (kind == Scaling::none) return {train, test};
  const Vector mean = train.colwise().mean();
  Matrix tr = train.rowwise() - mean.transpose();
  Matrix te = test.rows() ? Matrix(test.rowwise() - mean.transpose()) : test;
  if (kind == Scaling::autoscale) {
    for (int j = 0; j < tr.cols(); ++j) {
      const double sd = std::sqrt(tr.col(j).squaredNorm() / std::max<int>(1, train.rows() - 1));
      if (sd < kZeroVarTol) {
        if (warnings) warnings->push_back("autoscale: zero-variance column " + std::to_string(j));
        continue;
      }
      tr.col(j) /= sd;
      if (te.rows()) te.col(j) /= sd;
    }
  }
  return {tr, te};
}

// ---- PipelineSpec -----------------------------------------------------------

namespace {

std::string scatter_name(Scatter s) {
  switch (s) {
    case Scatter::none: return "none";
    case Scatter::normalise: return "norm";
    case Scatter::snv: return "snv";
    case Scatter::msc: return "msc";
  }
  return "?";
}

std::string window_name(FourierWindow w) {
  switch (w) {
    case FourierWindow::rect: return "rect";
    case FourierWindow::blackman_harris: return "bh";
    case FourierWindow::hamming: return "hamming";
    case FourierWindow::hann: return "hann";
  }
  return "?";
}

std::string baseline_name(BaselineKind b) {
  switch (b) {
    case BaselineKind::none: return "none";
    case BaselineKind::constant: return "const";
    case BaselineKind::linear: return "linear";
    case BaselineKind::deriv1: return "deriv1";
    case BaselineKind::deriv2: return "deriv2";
  }
  return "?";
}

std::string scaling_name(Scaling s) {
  switch (s) {
    case Scaling::none: return "none";
    case Scaling::mean_center: return "center";
    case Scaling::autoscale: return "auto";
  }
  return "?";
}

std::string filter_name(const FilterSpec& f) {
  switch (f.kind) {
    case FilterKind::none:
      return "none";
    case FilterKind::savgol:
      return "savgol(" + std::to_string(f.sg_order) + "," + std::to_string(f.sg_width) + ")";
    case FilterKind::fourier:
      return "fourier(" + window_name(f.window) + "," + std::to_string(f.cutoff) + "," +
             format_double(f.winsize, 6) + ")";
    case FilterKind::butterworth:
      return "butter(" + std::to_string(f.bw_order) + "," + format_double(f.bw_cutoff, 6) + ")";
    case FilterKind::hamming_fir:
      return "fir(" + std::to_string(f.fir_taps) + "," + format_double(f.fir_cutoff, 6) + ")";
    case FilterKind::moving_average:
      return "ma(" + std::to_string(f.ma_width) + ")";
  }
  return "?";
}

std::vector<std::string> parse_args(const std::string& token, const std::string& head) {
  const std::string inner = token.substr(head.size() + 1, token.size() - head.size() - 2);
  return split(inner, ',');
}

FilterSpec parse_filter(const std::string& token) {
  FilterSpec f;
  if (token == "none") return f;
  const auto open = token.find('(');
  if (open == std::string::npos || token.back() != ')') {
    throw SpecError("bad filter token '" + token + "'");
  }
  const std::string head = token.substr(0, open);
  const auto args = parse_args(token, head);
  auto need = [&](std::size_t n) {
    if (args.size() != n) throw SpecError("filter '" + head + "' expects " + std::to_string(n) + " arguments");
  };
  if (head == "savgol") {
    need(2);
    f.kind = FilterKind::savgol;
    f.sg_order = std::stoi(args[0]);
    f.sg_width = std::stoi(args[1]);
  } else if (head == "fourier") {
    need(3);
    f.kind = FilterKind::fourier;
    if (args[0] == "rect") f.window = FourierWindow::rect;
    else if (args[0] == "bh") f.window = FourierWindow::blackman_harris;
    else if (args[0] == "hamming") f.window = FourierWindow::hamming;
    else if (args[0] == "hann") f.window = FourierWindow::hann;
    else throw SpecError("unknown Fourier window '" + args[0] + "'");
    f.cutoff = std::stoi(args[1]);
    f.winsize = std::stod(args[2]);
  } else if (head == "butter") {
    need(2);
    f.kind = FilterKind::butterworth;
    f.bw_order = std::stoi(args[0]);
    f.bw_cutoff = std::stod(args[1]);
  } else if (head == "fir") {
    need(2);
    f.kind = FilterKind::hamming_fir;
    f.fir_taps = std::stoi(args[0]);
    f.fir_cutoff = std::stod(args[1]);
  } else if (head == "ma") {
    need(1);
    f.kind = FilterKind::moving_average;
    f.ma_width = std::stoi(args[0]);
  } else {
    throw SpecError("unknown filter '" + head + "'");
  }
  return f;
}

}  // namespace

std::string PipelineSpec::to_string() const {
  return "bin=" + std::to_string(binning) + "|scatter=" + scatter_name(scatter) +
         "|filter=" + filter_name(filter) + "|baseline=" + baseline_name(baseline) +
         "|scale=" + scaling_name(scaling);
}

PipelineSpec PipelineSpec::from_string(const std::string& text) {
  PipelineSpec spec;
  const auto fields = split(text, '|');
  if (fields.size() != 5) throw SpecError("pipeline spec must have 5 fields: '" + text + "'");
  for (const std::string& field : fields) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw SpecError("bad pipeline field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "bin") {
      spec.binning = std::stoi(val);
    } else if (key == "scatter") {
      if (val == "none") spec.scatter = Scatter::none;
      else if (val == "norm") spec.scatter = Scatter::normalise;
      else if (val == "snv") spec.scatter = Scatter::snv;
      else if (val == "msc") spec.scatter = Scatter::msc;
      else throw SpecError("unknown scatter method '" + val + "'");
    } else if (key == "filter") {
      spec.filter = parse_filter(val);
    } else if (key == "baseline") {
      if (val == "none") spec.baseline = BaselineKind::none;
      else if (val == "const") spec.baseline = BaselineKind::constant;
      else if (val == "linear") spec.baseline = BaselineKind::linear;
      else if (val == "deriv1") spec.baseline = BaselineKind::deriv1;
      else if (val == "deriv2") spec.baseline = BaselineKind::deriv2;
      else throw SpecError("unknown baseline method '" + val + "'");
    } else if (key == "scale") {
      if (val == "none") spec.scaling = Scaling::none;
      else if (val == "center") spec.scaling = Scaling::mean_center;
      else if (val == "auto") spec.scaling = Scaling::autoscale;
      else throw SpecError("unknown scaling method '" + val + "'");
    } else {
      throw SpecError("unknown pipeline field '" + key + "'");
    }
  }
  return spec;
}

int PipelineSpec::active_steps() const {
  int n = 0;
  n += binning > 1;
  n += scatter != Scatter::none;
  n += filter.kind != FilterKind::none;
  n += baseline != BaselineKind::none;
  n += scaling != Scaling::none;
  return n;
}

bool PipelineSpec::valid_for(int n_features, std::string* why) const {
  auto fail = [&](const std::string& reason) {
    if (why) *why = reason;
    return false;
  };
  if (binning < 1) return fail("binning factor < 1");
  const int nb = (n_features > 0) ? n_features / binning : 0;
  if (n_features > 0 && nb < 2) return fail("binning leaves fewer than 2 channels");

  const FilterSpec& f = filter;
  switch (f.kind) {
    case FilterKind::none:
      break;
    case FilterKind::savgol:
      if (f.sg_width % 2 == 0 || f.sg_width < 3 || f.sg_width > 21) return fail("savgol width must be odd in [3,21]");
      if (f.sg_order < 1 || f.sg_order > 3) return fail("savgol order must lie in [1,3]");
      if (f.sg_order >= f.sg_width) return fail("savgol order must be < width");
      if (n_features > 0 && f.sg_width > nb) return fail("savgol width exceeds channel count");
      break;
    case FilterKind::fourier:
      if (f.cutoff < 1) return fail("fourier cutoff < 1");
      if (n_features > 0 && f.cutoff >= nb / 2) return fail("fourier cutoff >= n/2");
      if (f.winsize < 1.0) return fail("fourier window size < 1");
      break;
    case FilterKind::butterworth:
      if (f.bw_order < 1 || f.bw_order > 8) return fail("butterworth order outside [1,8]");
      if (!(f.bw_cutoff > 0.0 && f.bw_cutoff < 1.0)) return fail("butterworth cutoff outside (0,1)");
      if (n_features > 0 && nb <= 3 * (f.bw_order + 1)) return fail("too few channels for butterworth padding");
      break;
    case FilterKind::hamming_fir:
      if (f.fir_taps < 3 || f.fir_taps % 2 == 0) return fail("fir taps must be odd and >= 3");
      if (!(f.fir_cutoff > 0.0 && f.fir_cutoff < 1.0)) return fail("fir cutoff outside (0,1)");
      if (n_features > 0 && f.fir_taps > nb) return fail("fir taps exceed channel count");
      break;
    case FilterKind::moving_average:
      if (f.ma_width < 3 || f.ma_width % 2 == 0) return fail("moving-average width must be odd and >= 3");
      if (n_features > 0 && f.ma_width > nb) return fail("moving-average width exceeds channel count");
      break;
  }

  if (baseline == BaselineKind::deriv1 || baseline == BaselineKind::deriv2) {
    if (n_features > 0 && nb < 3) return fail("derivative needs at least 3 channels");
    const int d = (baseline == BaselineKind::deriv1) ? 1 : 2;
    if (f.kind == FilterKind::savgol && f.sg_order < d) {
      return fail("savgol order below requested derivative");
    }
  }
  return true;
}

// ---- Pipeline fitting -------------------------------------------------------

namespace {

Matrix apply_scatter(const Matrix& X, Scatter kind, const Vector& msc_ref,
                     std::vector<std::string>* warnings) {
  switch (kind) {
    case Scatter::none:
      return X;
    case Scatter::normalise: {
      Matrix out(X.rows(), X.cols());
      for (int i = 0; i < X.rows(); ++i) out.row(i) = normalise(X.row(i));
      return out;
    }
    case Scatter::snv: {
      Matrix out(X.rows(), X.cols());
      for (int i = 0; i < X.rows(); ++i) out.row(i) = snv(X.row(i));
      return out;
    }
    case Scatter::msc:
      return msc(X, msc_ref, warnings);
  }
  return X;
}

Matrix apply_filter_baseline(const Matrix& X, const PipelineSpec& spec, double spacing) {
  const FilterSpec& f = spec.filter;
  BaselineKind baseline = spec.baseline;
  int sg_deriv = 0;
  if (f.kind == FilterKind::savgol &&
      (baseline == BaselineKind::deriv1 || baseline == BaselineKind::deriv2)) {
    // Savitzky-Golay differentiation replaces the separate difference step.
    sg_deriv = (baseline == BaselineKind::deriv1) ? 1 : 2;
    baseline = BaselineKind::none;
  }

  Matrix out(X.rows(), X.cols());
  for (int i = 0; i < X.rows(); ++i) {
    Vector row = X.row(i);
    switch (f.kind) {
      case FilterKind::none:
        break;
      case FilterKind::savgol:
        row = savgol(row, f.sg_order, f.sg_width, sg_deriv, spacing);
        break;
      case FilterKind::fourier:
        row = fourier_filter(row, f.window, f.cutoff, f.winsize);
        break;
      case FilterKind::butterworth:
        row = butterworth_filtfilt(row, f.bw_order, f.bw_cutoff);
        break;
      case FilterKind::hamming_fir:
        row = hamming_fir_filter(row, f.fir_taps, f.fir_cutoff);
        break;
      case FilterKind::moving_average:
        row = moving_average(row, f.ma_width);
        break;
    }
    if (baseline != BaselineKind::none) row = baseline_correct(row, baseline, spacing);
    out.row(i) = row;
  }
  return out;
}

template <class Fn>
auto annotate(const char* step, Fn&& fn) {
  try {
    return fn();
  } catch (const SpecError& e) {
    throw SpecError(std::string("pipeline step '") + step + "': " + e.what());
  }
}

}  // namespace

FittedPipeline fit_pipeline(const PipelineSpec& spec, const Matrix& train, const Vector& axis) {
  if (train.rows() < 1) throw SpecError("cannot fit a pipeline on an empty training set");
  std::string why;
  if (!spec.valid_for(static_cast<int>(train.cols()), &why)) {
    throw SpecError("invalid pipeline spec " + spec.to_string() + ": " + why);
  }

  FittedPipeline fp;
  fp.spec = spec;

  const Matrix Xb = annotate("binning", [&] { return bin(train, spec.binning); });
  fp.binned_axis = (axis.size() == train.cols()) ? bin_axis(axis, spec.binning)
                                                 : Vector::LinSpaced(Xb.cols(), 0, Xb.cols() - 1);
  const int nb = static_cast<int>(Xb.cols());
  fp.axis_spacing = (nb >= 2) ? (fp.binned_axis[nb - 1] - fp.binned_axis[0]) / (nb - 1) : 1.0;
  if (fp.axis_spacing == 0.0) fp.axis_spacing = 1.0;

  if (spec.scatter == Scatter::msc) fp.msc_reference = Xb.colwise().mean();
  const Matrix Xs = annotate("scatter", [&] {
    return apply_scatter(Xb, spec.scatter, fp.msc_reference, &fp.warnings);
  });

  const Matrix Xf = annotate("filter/baseline", [&] {
    return apply_filter_baseline(Xs, spec, fp.axis_spacing);
  });

  if (spec.scaling != Scaling::none) {
    fp.scale_mean = Xf.colwise().mean();
    if (spec.scaling == Scaling::autoscale) {
      fp.scale_std = Vector::Ones(Xf.cols());
      for (int j = 0; j < Xf.cols(); ++j) {
        const double sd = std::sqrt((Xf.col(j).array() - fp.scale_mean[j]).square().sum() /
                                    std::max<int>(1, static_cast<int>(Xf.rows()) - 1));
        if (sd < kZeroVarTol) {
          fp.warnings.push_back("autoscale: zero-variance column " + std::to_string(j));
        } else {
          fp.scale_std[j] = sd;
        }
      }
    }
  }
  return fp;
}

Matrix FittedPipeline::apply(const Matrix& X) const {
  if (X.rows() == 0) return X;
  const Matrix Xb = annotate("binning", [&] { return bin(X, spec.binning); });
  const Matrix Xs = annotate("scatter", [&] {
    return apply_scatter(Xb, spec.scatter, msc_reference, nullptr);
  });
  Matrix Xf = annotate("filter/baseline", [&] {
    return apply_filter_baseline(Xs, spec, axis_spacing);
  });
  if (spec.scaling != Scaling::none) {
    Xf.rowwise() -= scale_mean.transpose();
    if (spec.scaling == Scaling::autoscale) {
      for (int j = 0; j < Xf.cols(); ++j) Xf.col(j) /= scale_std[j];
    }
  }
  return Xf;
}

std::tuple<Matrix, Matrix, FittedPipeline> fit_apply_pipeline(const PipelineSpec& spec,
                                                              const Matrix& train,
                                                              const Matrix& test,
                                                              const Vector& axis) {
  FittedPipeline fp = fit_pipeline(spec, train, axis);
  Matrix tr = fp.apply(train);
  Matrix te = test.rows() ? fp.apply(test) : test;
  return {std::move(tr), std::move(te), std::move(fp)};
}

// ---- Grid enumeration -------------------------------------------------------

std::vector<FilterSpec> default_filter_grid() {
  std::vector<FilterSpec> out;
  out.push_back({});  // none

  for (int order = 1; order <= 3; ++order) {
    for (int width = 3; width <= 21; width += 2) {
      if (order >= width) continue;
      FilterSpec f;
      f.kind = FilterKind::savgol;
      f.sg_order = order;
      f.sg_width = width;
      out.push_back(f);
    }
  }
  for (FourierWindow w : {FourierWindow::rect, FourierWindow::blackman_harris,
                          FourierWindow::hamming, FourierWindow::hann}) {
    for (int cutoff = 20; cutoff <= 50; ++cutoff) {
      for (double winsize : {1.1, 1.2, 1.3}) {
        FilterSpec f;
        f.kind = FilterKind::fourier;
        f.window = w;
        f.cutoff = cutoff;
        f.winsize = winsize;
        out.push_back(f);
      }
    }
  }
  for (int order : {2, 4}) {
    for (double cutoff : {0.1, 0.2, 0.3}) {
      FilterSpec f;
      f.kind = FilterKind::butterworth;
      f.bw_order = order;
      f.bw_cutoff = cutoff;
      out.push_back(f);
    }
  }
  for (int taps : {11, 21}) {
    for (double cutoff : {0.1, 0.2, 0.3}) {
      FilterSpec f;
      f.kind = FilterKind::hamming_fir;
      f.fir_taps = taps;
      f.fir_cutoff = cutoff;
      out.push_back(f);
    }
  }
  for (int width = 3; width <= 21; width += 2) {
    FilterSpec f;
    f.kind = FilterKind::moving_average;
    f.ma_width = width;
    out.push_back(f);
  }
  return out;
}

GridConfig GridConfig::defaults(int n_features) {
  GridConfig g;
  g.filters = default_filter_grid();
  g.n_features = n_features;
  return g;
}

GridConfig GridConfig::compact(int n_features) {
  GridConfig g;
  g.binning = {1, 2};
  g.filters.push_back({});
  {
    FilterSpec f;
    f.kind = FilterKind::savgol;
    f.sg_order = 2;
    f.sg_width = 9;
    g.filters.push_back(f);
    f.sg_width = 13;
    g.filters.push_back(f);
  }
  {
    FilterSpec f;
    f.kind = FilterKind::moving_average;
    f.ma_width = 5;
    g.filters.push_back(f);
  }
  g.n_features = n_features;
  return g;
}

std::vector<PipelineSpec> enumerate_pipelines(const GridConfig& grid) {
  if (grid.binning.empty() || grid.scatter.empty() || grid.filters.empty() ||
      grid.baseline.empty() || grid.scaling.empty()) {
    throw SpecError("pipeline grid has an empty slot");
  }
  std::vector<PipelineSpec> out;
  for (int b : grid.binning) {
    for (Scatter sc : grid.scatter) {
      for (const FilterSpec& f : grid.filters) {
        for (BaselineKind bl : grid.baseline) {
          for (Scaling s : grid.scaling) {
            PipelineSpec spec;
            spec.binning = b;
            spec.scatter = sc;
            spec.filter = f;
            spec.baseline = bl;
            spec.scaling = s;
            if (spec.valid_for(grid.n_features)) out.push_back(spec);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace speclab::preprocess
