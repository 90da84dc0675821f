#include "oodgate/experiments.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>

#include "oodgate/error.hpp"

namespace oodgate {

namespace {

std::vector<double> parse_axis(const std::string& key, const std::string& spec) {
  const auto number = [&](const std::string& s) {
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(x)) {
      throw Error(ErrorCode::InvalidParameter, "bad grid value '" + s + "' for " + key);
    }
    return x;
  };
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.size() != 3) throw Error(ErrorCode::InvalidParameter, "grid range for " + key + " must be lo:hi:step");
    const double lo = number(parts[0]);
    const double hi = number(parts[1]);
    const double step = number(parts[2]);
    if (!(step > 0.0) || !(lo <= hi) || std::isinf(hi)) {
      throw Error(ErrorCode::InvalidParameter, "grid range for " + key + " needs lo <= hi and step > 0");
    }
    // Index-based stepping keeps values like 0.2 * 7 free of accumulated drift.
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(lo + step * static_cast<double>(i));
  } else {
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, '/')) out.push_back(number(part));
  }
  if (out.empty()) throw Error(ErrorCode::InvalidParameter, "empty grid axis " + key);
  return out;
}

DetectorConfig cell_config(const DetectorConfig& base, double p, double lambda, bool smoothing) {
  DetectorConfig cfg = base;
  cfg.masking_percentile = p;
  cfg.react = ReactExplicit{lambda};
  cfg.enable_mask = true;
  cfg.enable_react = true;
  cfg.enable_smoothing = smoothing;
  return cfg;
}

struct CellIndex {
  double p;
  double lambda;
  bool smoothing;
};

std::vector<CellIndex> enumerate(const SweepGrid& grid) {
  std::vector<CellIndex> cells;
  for (double p : grid.percentiles)
    for (double l : grid.lambdas)
      for (bool s : grid.smoothing) cells.push_back({p, l, s});
  return cells;
}

}  // namespace

EvalReport evaluate_config(const Split& split, const DetectorConfig& config, Parallelism par) {
  const FittedDetector det = fit(split.train, split.train_labels, split.head, config);
  const auto id = pipeline_scores(det, split.test_id, par);
  const auto ood = pipeline_scores(det, split.test_ood, par);
  return evaluate(id, ood);
}

EvalReport evaluate_energy_baseline(const Split& split, Parallelism par) {
  DetectorConfig cfg;
  cfg.enable_mask = cfg.enable_react = cfg.enable_smoothing = false;
  const FittedDetector det = fit(split.train, split.train_labels, split.head, cfg);
  const ScoreMethod energy{ScoreKind::Energy};
  return evaluate(baseline_scores(det, split.test_id, energy, par), baseline_scores(det, split.test_ood, energy, par));
}

SweepGrid parse_grid(const std::string& text) {
  SweepGrid g{{0.0}, {std::numeric_limits<double>::infinity()}, {true}};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidParameter, "grid entry '" + item + "' needs key=value");
    const std::string key = item.substr(0, eq);
    const auto values = parse_axis(key, item.substr(eq + 1));
    if (key == "p") {
      g.percentiles = values;
    } else if (key == "lambda") {
      g.lambdas = values;
    } else if (key == "smooth") {
      g.smoothing.clear();
      for (double v : values) {
        if (v != 0.0 && v != 1.0) throw Error(ErrorCode::InvalidParameter, "smooth values must be 0 or 1");
        g.smoothing.push_back(v == 1.0);
      }
    } else {
      throw Error(ErrorCode::InvalidParameter, "unknown grid key '" + key + "'");
    }
  }
  for (double p : g.percentiles) {
    if (!(p >= 0.0 && p < 100.0)) throw Error(ErrorCode::InvalidParameter, "grid p values must be in [0, 100)");
  }
  for (double l : g.lambdas) {
    if (!(l >= 0.0)) throw Error(ErrorCode::InvalidParameter, "grid lambda values must be >= 0");
  }
  return g;
}

std::vector<SweepCell> sweep(const Split& split, const SweepGrid& grid, const DetectorConfig& base,
                             Parallelism par) {
  const auto cells = enumerate(grid);
  for (const auto& c : cells) cell_config(base, c.p, c.lambda, c.smoothing).resolve_k(split.head.feature_dim());
  std::vector<SweepCell> out(cells.size());
  std::exception_ptr error;
  std::once_flag once;
  const auto n = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic) num_threads(effective_threads(par))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& c = cells[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] =
          SweepCell{c.p, c.lambda, c.smoothing,
                    evaluate_config(split, cell_config(base, c.p, c.lambda, c.smoothing), Parallelism{1})};
    } catch (...) {
      std::call_once(once, [&] { error = std::current_exception(); });
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<SweepCell> sweep_serial(const Split& split, const SweepGrid& grid, const DetectorConfig& base) {
  std::vector<SweepCell> out;
  for (const auto& c : enumerate(grid)) {
    out.push_back(SweepCell{c.p, c.lambda, c.smoothing,
                            evaluate_config(split, cell_config(base, c.p, c.lambda, c.smoothing), Parallelism{1})});
  }
  return out;
}

std::vector<AblationRow> ablate(const Split& split, const DetectorConfig& base, Parallelism par) {
  FittedDetector det = fit(split.train, split.train_labels, split.head, base);
  std::vector<AblationRow> rows;
  for (const auto& [react, mask, smooth] : kAblationToggles) {
    det.config.enable_react = react;
    det.config.enable_mask = mask;
    det.config.enable_smoothing = smooth;
    const auto id = pipeline_scores(det, split.test_id, par);
    const auto ood = pipeline_scores(det, split.test_ood, par);
    rows.push_back(AblationRow{react, mask, smooth, evaluate(id, ood)});
  }
  return rows;
}

}  // namespace oodgate
