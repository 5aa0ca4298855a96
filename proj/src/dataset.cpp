#include "speclab/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace speclab::dataset {

using nlohmann::json;

bool AccessLog::rows_read_during_selection(const std::vector<int>& rows) const {
  std::lock_guard<std::mutex> lock(mu_);
  for (const auto& [row, phase] : reads_) {
    if (phase == Phase::selection &&
        std::find(rows.begin(), rows.end(), row) != rows.end()) {
      return true;
    }
  }
  return false;
}

int SpectralDataset::n_classes() const {
  if (task != Task::classification || targets.size() == 0) return 0;
  return static_cast<int>(targets.maxCoeff()) + 1;
}

Vector SpectralDataset::row(int i) const {
  if (access_log) access_log->record(i);
  return spectra.row(i);
}

Matrix SpectralDataset::rows(const std::vector<int>& idx) const {
  Matrix out(static_cast<int>(idx.size()), n_features());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (access_log) access_log->record(idx[r]);
    out.row(static_cast<int>(r)) = spectra.row(idx[r]);
  }
  return out;
}

Vector SpectralDataset::targets_at(const std::vector<int>& idx) const {
  Vector out(static_cast<int>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out[static_cast<int>(r)] = targets[idx[r]];
  return out;
}

std::vector<int> SpectralDataset::labels_at(const std::vector<int>& idx) const {
  std::vector<int> out(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) out[r] = static_cast<int>(targets[idx[r]]);
  return out;
}

void SpectralDataset::validate() const {
  const int n = n_samples();
  const int d = n_features();
  if (n < 2) throw SpecError("dataset must contain at least 2 samples, got " + std::to_string(n));
  if (wavenumbers.size() != d) {
    throw SpecError("wavenumber axis length " + std::to_string(wavenumbers.size()) +
                    " does not match feature count " + std::to_string(d));
  }
  if (targets.size() != n) {
    throw SpecError("target length " + std::to_string(targets.size()) +
                    " does not match sample count " + std::to_string(n));
  }
  if (d >= 2) {
    const bool ascending = wavenumbers[1] > wavenumbers[0];
    for (int j = 1; j < d; ++j) {
      const double prev = wavenumbers[j - 1];
      const double cur = wavenumbers[j];
      if ((ascending && cur <= prev) || (!ascending && cur >= prev)) {
        throw SpecError("wavenumber axis not strictly monotonic at column " + std::to_string(j + 1));
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      if (!std::isfinite(spectra(i, j))) {
        throw SpecError("non-finite value at row " + std::to_string(i + 2) + ", column " +
                        std::to_string(j + 2));
      }
    }
    if (!std::isfinite(targets[i])) {
      throw SpecError("non-finite target at row " + std::to_string(i + 2));
    }
  }
  if (task == Task::classification) {
    const int c = n_classes();
    for (int i = 0; i < n; ++i) {
      const double t = targets[i];
      if (t != std::floor(t) || t < 0 || t >= c) {
        throw SpecError("class id out of range at row " + std::to_string(i + 2));
      }
    }
  }
}

namespace {

double parse_cell(const std::string& cell, int file_row, int column) {
  const std::string t = trim(cell);
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &consumed);
  } catch (const std::exception&) {
    throw SpecError("row " + std::to_string(file_row) + ": non-numeric value '" + t +
                    "' in column " + std::to_string(column));
  }
  if (consumed != t.size()) {
    throw SpecError("row " + std::to_string(file_row) + ": non-numeric value '" + t +
                    "' in column " + std::to_string(column));
  }
  return v;
}

Task detect_task(const Vector& targets) {
  std::set<double> distinct;
  for (int i = 0; i < targets.size(); ++i) {
    const double t = targets[i];
    if (t != std::floor(t) || t < 0) return Task::regression;
    distinct.insert(t);
  }
  // Small set of non-negative integers reads as class ids.
  if (distinct.size() >= 2 && distinct.size() <= 20 &&
      *distinct.rbegin() == static_cast<double>(distinct.size() - 1)) {
    return Task::classification;
  }
  return Task::regression;
}

}  // namespace

SpectralDataset load_csv(const std::string& path, std::optional<Task> task) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open dataset file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw SpecError("empty dataset file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split(line, ',');
  if (header.size() < 2 || trim(header[0]) != "target") {
    throw SpecError("row 1: header must be 'target,<w1>,<w2>,...'");
  }
  const int d = static_cast<int>(header.size()) - 1;
  Vector axis(d);
  for (int j = 0; j < d; ++j) axis[j] = parse_cell(header[j + 1], 1, j + 2);

  std::vector<double> targets;
  std::vector<double> values;
  int file_row = 1;
  while (std::getline(in, line)) {
    ++file_row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (static_cast<int>(cells.size()) != d + 1) {
      throw SpecError("row " + std::to_string(file_row) + ": expected " + std::to_string(d + 1) +
                      " fields, got " + std::to_string(cells.size()));
    }
    targets.push_back(parse_cell(cells[0], file_row, 1));
    for (int j = 0; j < d; ++j) values.push_back(parse_cell(cells[j + 1], file_row, j + 2));
  }

  const int n = static_cast<int>(targets.size());
  SpectralDataset ds;
  ds.wavenumbers = axis;
  ds.spectra = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, d);
  ds.targets = Eigen::Map<Vector>(targets.data(), n);
  ds.task = task.value_or(detect_task(ds.targets));
  ds.validate();
  return ds;
}

void save_csv(const SpectralDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SpecError("cannot write dataset file '" + path + "'");
  out << "target";
  for (int j = 0; j < ds.n_features(); ++j) out << ',' << format_double(ds.wavenumbers[j]);
  out << '\n';
  for (int i = 0; i < ds.n_samples(); ++i) {
    out << format_double(ds.targets[i]);
    for (int j = 0; j < ds.n_features(); ++j) out << ',' << format_double(ds.spectra(i, j));
    out << '\n';
  }
}

SplitIndex random_split(const SpectralDataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw SpecError("train_fraction must lie in (0,1), got " + format_double(train_fraction));
  }
  const int n = ds.n_samples();
  const int n_train = static_cast<int>(std::lround(train_fraction * n));
  if (n_train < 1 || n_train >= n) {
    throw SpecError("split leaves an empty side: " + std::to_string(n_train) + "/" +
                    std::to_string(n - n_train));
  }

  Rng rng(mix_seed(seed, 0x5917));
  SplitIndex split;

  if (ds.task == Task::classification) {
    const int c = ds.n_classes();
    std::vector<std::vector<int>> per_class(c);
    for (int i = 0; i < n; ++i) per_class[static_cast<int>(ds.targets[i])].push_back(i);
    for (int k = 0; k < c; ++k) {
      if (per_class[k].size() < 2) {
        throw SpecError("class " + std::to_string(k) + " has fewer than 2 samples");
      }
    }
    // Largest-remainder allocation so per-class counts sum to n_train exactly,
    // with at least one sample per class on each side.
    std::vector<int> take(c);
    std::vector<std::pair<double, int>> remainders;
    int allocated = 0;
    for (int k = 0; k < c; ++k) {
      const double exact = train_fraction * static_cast<double>(per_class[k].size());
      take[k] = static_cast<int>(std::floor(exact));
      take[k] = std::clamp(take[k], 1, static_cast<int>(per_class[k].size()) - 1);
      allocated += take[k];
      remainders.emplace_back(exact - std::floor(exact), k);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    int extra = n_train - allocated;
    for (std::size_t r = 0; r < remainders.size() && extra != 0; ++r) {
      const int k = remainders[r].second;
      if (extra > 0 && take[k] < static_cast<int>(per_class[k].size()) - 1) {
        ++take[k];
        --extra;
      } else if (extra < 0 && take[k] > 1) {
        --take[k];
        ++extra;
      }
    }
    for (int k = 0; k < c; ++k) {
      rng.shuffle(per_class[k]);
      for (std::size_t i = 0; i < per_class[k].size(); ++i) {
        (static_cast<int>(i) < take[k] ? split.train_idx : split.test_idx).push_back(per_class[k][i]);
      }
    }
    std::sort(split.train_idx.begin(), split.train_idx.end());
    std::sort(split.test_idx.begin(), split.test_idx.end());
  } else {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    split.train_idx.assign(order.begin(), order.begin() + n_train);
    split.test_idx.assign(order.begin() + n_train, order.end());
    std::sort(split.train_idx.begin(), split.train_idx.end());
    std::sort(split.test_idx.begin(), split.test_idx.end());
  }
  return split;
}

FoldPlan loocv_folds(const std::vector<int>& train_idx) {
  if (train_idx.size() < 2) throw SpecError("LOOCV requires at least 2 training samples");
  FoldPlan plan;
  plan.folds.reserve(train_idx.size());
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    std::vector<int> train;
    train.reserve(train_idx.size() - 1);
    for (std::size_t j = 0; j < train_idx.size(); ++j) {
      if (j != i) train.push_back(train_idx[j]);
    }
    plan.folds.emplace_back(std::move(train), std::vector<int>{train_idx[i]});
  }
  return plan;
}

namespace {

GeneratorConfig parse_generator_json(const json& j) {
  GeneratorConfig cfg;
  cfg.n_samples = j.value("n_samples", cfg.n_samples);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("axis")) {
    const auto& a = j.at("axis");
    cfg.axis_start = a.value("start", cfg.axis_start);
    cfg.axis_end = a.value("end", cfg.axis_end);
    cfg.axis_points = a.value("points", cfg.axis_points);
  }
  for (const auto& aj : j.value("analytes", json::array())) {
    Analyte a;
    a.name = aj.value("name", "analyte" + std::to_string(cfg.analytes.size()));
    if (aj.contains("conc_range")) {
      a.conc_lo = aj.at("conc_range").at(0).get<double>();
      a.conc_hi = aj.at("conc_range").at(1).get<double>();
    }
    for (const auto& bj : aj.value("bands", json::array())) {
      Band b;
      b.center = bj.value("center", 0.0);
      b.width = bj.value("width", 1.0);
      b.amplitude = bj.value("amplitude", 1.0);
      a.bands.push_back(b);
    }
    cfg.analytes.push_back(std::move(a));
  }
  cfg.target_analyte = j.value("target", "");
  for (const auto& rj : j.value("recipes", json::array())) {
    Recipe r;
    r.name = rj.value("name", "recipe" + std::to_string(cfg.recipes.size()));
    r.nominal = rj.value("nominal", std::vector<double>{});
    cfg.recipes.push_back(std::move(r));
  }
  cfg.recipe_spread = j.value("recipe_spread", cfg.recipe_spread);
  if (j.contains("baseline")) {
    cfg.baseline_degree = j.at("baseline").value("degree", 0);
    cfg.baseline_scale = j.at("baseline").value("scale", 0.0);
  }
  cfg.scatter_spread = j.value("scatter_spread", 0.0);
  cfg.noise_sigma = j.value("noise_sigma", 0.0);
  return cfg;
}

}  // namespace

GeneratorConfig load_generator_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open generator config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SpecError("generator config '" + path + "': " + e.what());
  }
  return parse_generator_json(j);
}

SpectralDataset synth_mixture(const GeneratorConfig& cfg, std::uint64_t seed) {
  if (cfg.analytes.empty()) throw SpecError("generator config lists no analytes");
  if (cfg.noise_sigma < 0.0) throw SpecError("noise sigma must be non-negative");
  if (cfg.n_samples < 2) throw SpecError("generator needs at least 2 samples");
  if (cfg.axis_points < 2) throw SpecError("axis needs at least 2 points");

  const bool classify = !cfg.recipes.empty();
  int target_analyte = -1;
  if (!classify) {
    for (std::size_t a = 0; a < cfg.analytes.size(); ++a) {
      if (cfg.analytes[a].name == cfg.target_analyte) target_analyte = static_cast<int>(a);
    }
    if (target_analyte < 0) {
      throw SpecError("target analyte '" + cfg.target_analyte + "' not found in analyte list");
    }
  } else {
    for (const auto& r : cfg.recipes) {
      if (r.nominal.size() != cfg.analytes.size()) {
        throw SpecError("recipe '" + r.name + "' must list one concentration per analyte");
      }
    }
    if (cfg.recipes.size() < 2) throw SpecError("classification mode needs >= 2 recipes");
  }

  const int n = cfg.n_samples;
  const int d = cfg.axis_points;
  Vector axis(d);
  for (int j = 0; j < d; ++j) {
    axis[j] = cfg.axis_start + (cfg.axis_end - cfg.axis_start) * j / static_cast<double>(d - 1);
  }

  // Per-analyte unit spectra (absorbance at concentration 1).
  Matrix unit(static_cast<int>(cfg.analytes.size()), d);
  for (std::size_t a = 0; a < cfg.analytes.size(); ++a) {
    for (int j = 0; j < d; ++j) {
      double v = 0.0;
      for (const Band& b : cfg.analytes[a].bands) {
        const double z = (axis[j] - b.center) / b.width;
        v += b.amplitude * std::exp(-0.5 * z * z);
      }
      unit(static_cast<int>(a), j) = v;
    }
  }

  Rng rng(mix_seed(seed, 0xa11ce));
  SpectralDataset ds;
  ds.wavenumbers = axis;
  ds.spectra.resize(n, d);
  ds.targets.resize(n);
  ds.task = classify ? Task::classification : Task::regression;

  for (int i = 0; i < n; ++i) {
    std::vector<double> conc(cfg.analytes.size());
    int recipe_id = -1;
    if (classify) {
      recipe_id = i % static_cast<int>(cfg.recipes.size());
      for (std::size_t a = 0; a < cfg.analytes.size(); ++a) {
        const double nominal = cfg.recipes[recipe_id].nominal[a];
        conc[a] = nominal * (1.0 + rng.uniform(-cfg.recipe_spread, cfg.recipe_spread));
      }
    } else {
      for (std::size_t a = 0; a < cfg.analytes.size(); ++a) {
        conc[a] = rng.uniform(cfg.analytes[a].conc_lo, cfg.analytes[a].conc_hi);
      }
    }

    Vector spectrum = Vector::Zero(d);
    for (std::size_t a = 0; a < cfg.analytes.size(); ++a) {
      spectrum += conc[a] * unit.row(static_cast<int>(a)).transpose();
    }

    if (cfg.baseline_scale > 0.0) {
      std::vector<double> coeff(cfg.baseline_degree + 1);
      for (double& c : coeff) c = rng.uniform(-cfg.baseline_scale, cfg.baseline_scale);
      for (int j = 0; j < d; ++j) {
        const double u = static_cast<double>(j) / static_cast<double>(d - 1);
        double b = 0.0;
        double p = 1.0;
        for (const double c : coeff) {
          b += c * p;
          p *= u;
        }
        spectrum[j] += b;
      }
    }

    const double scatter = 1.0 + rng.uniform(-cfg.scatter_spread, cfg.scatter_spread);
    spectrum *= scatter;

    for (int j = 0; j < d; ++j) spectrum[j] += cfg.noise_sigma * rng.normal();

    ds.spectra.row(i) = spectrum.transpose();
    ds.targets[i] = classify ? static_cast<double>(recipe_id) : conc[target_analyte];
  }

  if (classify) {
    for (const auto& r : cfg.recipes) ds.class_names.push_back(r.name);
  }
  ds.validate();
  return ds;
}

}  // namespace speclab::dataset
