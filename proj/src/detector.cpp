#include "oodgate/detector.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oodgate/error.hpp"

namespace oodgate {

namespace {

std::string dims(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

void check_labels(const Matrix& features, std::span<const ClassIndex> labels, std::size_t C) {
  if (labels.size() != features.rows()) {
    throw Error(ErrorCode::InvalidDimension, std::to_string(features.rows()) + " feature rows but " +
                                                 std::to_string(labels.size()) + " labels");
  }
  for (ClassIndex y : labels) {
    if (y >= C) throw Error(ErrorCode::InvalidInput, "label " + std::to_string(y) + " >= C=" + std::to_string(C));
  }
}

}  // namespace

void ClassifierHead::validate() const {
  if (weights.rows() == 0 || weights.cols() == 0) throw Error(ErrorCode::InvalidDimension, "empty classifier head");
  if (bias.size() != weights.cols()) {
    throw Error(ErrorCode::InvalidDimension,
                "bias has " + std::to_string(bias.size()) + " entries for W " + dims(weights.rows(), weights.cols()));
  }
  require_finite(bias, "bias");
}

MaskMatrix::MaskMatrix(std::size_t L, std::size_t C, std::size_t k, std::vector<std::uint8_t> bits)
    : L_(L), C_(C), k_(k), bits_(std::move(bits)) {
  if (bits_.size() != L_ * C_) throw Error(ErrorCode::InvalidDimension, "mask bits do not match " + dims(L_, C_));
  if (k_ < 1 || k_ > L_) throw Error(ErrorCode::InvalidParameter, "mask k out of [1, L]");
  for (std::size_t c = 0; c < C_; ++c) {
    std::size_t ones = 0;
    for (std::size_t l = 0; l < L_; ++l) {
      const auto b = bits_[l * C_ + c];
      if (b > 1) throw Error(ErrorCode::InvalidParameter, "mask entries must be 0 or 1");
      ones += b;
    }
    if (ones != k_) {
      throw Error(ErrorCode::InvalidParameter,
                  "mask column " + std::to_string(c) + " has " + std::to_string(ones) + " ones, expected k");
    }
  }
}

std::string to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::Energy: return "energy";
    case ScoreKind::MSP: return "msp";
    case ScoreKind::OdinTemp: return "odin";
    case ScoreKind::Mahalanobis: return "mahalanobis";
    case ScoreKind::EnergyReAct: return "energy-react";
  }
  return "unknown";
}

ScoreKind parse_score_kind(std::string_view name) {
  for (auto k : {ScoreKind::Energy, ScoreKind::MSP, ScoreKind::OdinTemp, ScoreKind::Mahalanobis,
                 ScoreKind::EnergyReAct}) {
    if (name == to_string(k)) return k;
  }
  throw Error(ErrorCode::InvalidParameter, "unknown score method '" + std::string(name) + "'");
}

std::size_t DetectorConfig::resolve_k(std::size_t L) const {
  if (!(masking_percentile >= 0.0 && masking_percentile < 100.0)) {
    throw Error(ErrorCode::InvalidParameter, "masking percentile must be in [0, 100)");
  }
  const double k = std::round(static_cast<double>(L) * (1.0 - masking_percentile / 100.0));
  if (k < 1.0 || k > static_cast<double>(L)) {
    throw Error(ErrorCode::InvalidParameter, "masking percentile " + std::to_string(masking_percentile) +
                                                 " leaves k outside [1, " + std::to_string(L) + "]");
  }
  return static_cast<std::size_t>(k);
}

void DetectorConfig::validate() const {
  if (!(masking_percentile >= 0.0 && masking_percentile < 100.0)) {
    throw Error(ErrorCode::InvalidParameter, "masking percentile must be in [0, 100)");
  }
  if (const auto* e = std::get_if<ReactExplicit>(&react)) {
    if (!(e->lambda >= 0.0)) throw Error(ErrorCode::InvalidParameter, "lambda must be >= 0");
  } else {
    const double q = std::get<ReactPercentile>(react).q;
    if (!(q > 0.0 && q < 100.0)) throw Error(ErrorCode::InvalidParameter, "react percentile must be in (0, 100)");
  }
  if (method.kind == ScoreKind::OdinTemp &&
      !(method.odin_temperature > 0.0 && std::isfinite(method.odin_temperature))) {
    throw Error(ErrorCode::InvalidParameter, "ODIN temperature must be finite and > 0");
  }
}

void FittedDetector::validate() const {
  head.validate();
  const std::size_t L = feature_dim();
  const std::size_t C = num_classes();
  if (masks.feature_dim() != L || masks.num_classes() != C) {
    throw Error(ErrorCode::InvalidDimension, "mask " + dims(masks.feature_dim(), masks.num_classes()) +
                                                 " vs head " + dims(L, C));
  }
  if (prototypes.vectors.rows() != C || prototypes.vectors.cols() != L || prototypes.counts.size() != C) {
    throw Error(ErrorCode::InvalidDimension, "prototypes do not match head " + dims(L, C));
  }
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidParameter, "resolved lambda must be >= 0");
  if (gaussian) {
    if (gaussian->means.rows() != C || gaussian->means.cols() != L || gaussian->precision.rows() != L ||
        gaussian->precision.cols() != L) {
      throw Error(ErrorCode::InvalidDimension, "gaussian model does not match head " + dims(L, C));
    }
  }
}

MaskMatrix build_masks(const Matrix& W, std::size_t k) {
  const std::size_t L = W.rows();
  const std::size_t C = W.cols();
  if (k < 1 || k > L) {
    throw Error(ErrorCode::InvalidParameter, "k=" + std::to_string(k) + " outside [1, " + std::to_string(L) + "]");
  }
  std::vector<std::uint8_t> bits(L * C, 0);
  std::vector<std::size_t> order(L);
  for (std::size_t c = 0; c < C; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Strict weak order: larger weight first, then lower row.
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       const double wa = W(a, c);
                       const double wb = W(b, c);
                       return wa > wb || (wa == wb && a < b);
                     });
    for (std::size_t i = 0; i < k; ++i) bits[order[i] * C + c] = 1;
  }
  return MaskMatrix(L, C, k, std::move(bits));
}

Vector apply_mask(std::span<const double> h, const MaskMatrix& masks, std::size_t c) {
  if (c >= masks.num_classes()) {
    throw Error(ErrorCode::InvalidParameter, "class " + std::to_string(c) + " out of range");
  }
  if (h.size() != masks.feature_dim()) throw Error(ErrorCode::InvalidDimension, "feature length != mask length");
  Vector out(h.size());
  for (std::size_t l = 0; l < h.size(); ++l) out[l] = masks.bit(l, c) ? h[l] : 0.0;
  return out;
}

Vector react_clip(std::span<const double> h, double lambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidParameter, "lambda must be >= 0");
  Vector out(h.size());
  for (std::size_t l = 0; l < h.size(); ++l) out[l] = std::min(h[l], lambda);
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::InvalidInput, "percentile of empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw Error(ErrorCode::InvalidParameter, "percentile q must be in [0, 100]");
  const double pos = static_cast<double>(values.size() - 1) * q / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo + 1), values.end());
  return a + frac * (b - a);
}

Prototypes compute_prototypes(const Matrix& features, std::span<const ClassIndex> labels, std::size_t C) {
  check_labels(features, labels, C);
  const std::size_t L = features.cols();
  Prototypes p{Matrix(C, L), std::vector<std::uint64_t>(C, 0)};
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto row = features.row(i);
    auto acc = p.vectors.row(labels[i]);
    for (std::size_t l = 0; l < L; ++l) acc[l] += row[l];
    ++p.counts[labels[i]];
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (p.counts[c] == 0) throw Error(ErrorCode::FitError, "class " + std::to_string(c) + " has no training samples");
    const double n = static_cast<double>(p.counts[c]);
    for (double& x : p.vectors.row(c)) x /= n;
  }
  return p;
}

GaussianModel fit_gaussian(const Matrix& features, std::span<const ClassIndex> labels, std::size_t C) {
  Prototypes means = compute_prototypes(features, labels, C);
  const std::size_t N = features.rows();
  const std::size_t L = features.cols();
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor centered(N, L);
  for (std::size_t i = 0; i < N; ++i) {
    const auto row = features.row(i);
    const auto mu = means.vectors.row(labels[i]);
    for (std::size_t l = 0; l < L; ++l) centered(i, l) = row[l] - mu[l];
  }
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(N);
  // Degenerate (zero-variance) data still needs a positive shrinkage.
  const double eps = std::max(1e-3 * cov.trace() / static_cast<double>(L), 1e-9);
  cov.diagonal().array() += eps;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::FitError, "shared covariance is not positive definite");
  Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(L, L));
  prec = 0.5 * (prec + prec.transpose());
  Matrix precision(L, L);
  for (std::size_t r = 0; r < L; ++r)
    for (std::size_t c = 0; c < L; ++c) precision(r, c) = prec(r, c);
  return GaussianModel{std::move(means.vectors), std::move(precision)};
}

FittedDetector fit(const Matrix& features, std::span<const ClassIndex> labels, const ClassifierHead& head,
                   const DetectorConfig& config) {
  head.validate();
  config.validate();
  const std::size_t L = head.feature_dim();
  const std::size_t C = head.num_classes();
  if (features.cols() != L) {
    throw Error(ErrorCode::InvalidDimension,
                "features have width " + std::to_string(features.cols()) + ", head expects " + std::to_string(L));
  }
  if (features.rows() == 0) throw Error(ErrorCode::FitError, "no training samples");

  FittedDetector det;
  det.head = head;
  det.config = config;
  det.masks = build_masks(head.weights, config.resolve_k(L));
  det.prototypes = compute_prototypes(features, labels, C);
  if (const auto* e = std::get_if<ReactExplicit>(&config.react)) {
    det.lambda = e->lambda;
  } else {
    det.lambda = percentile(features.values(), std::get<ReactPercentile>(config.react).q);
    if (det.lambda < 0.0) {
      throw Error(ErrorCode::FitError, "activation percentile resolved to a negative lambda");
    }
  }
  if (config.method.kind == ScoreKind::Mahalanobis) det.gaussian = fit_gaussian(features, labels, C);
  return det;
}

double score_logits(std::span<const double> logits, const ScoreMethod& method) {
  switch (method.kind) {
    case ScoreKind::Energy:
    case ScoreKind::EnergyReAct:
      return logsumexp(logits);
    case ScoreKind::MSP: {
      const Vector p = softmax(logits, 1.0);
      return *std::max_element(p.begin(), p.end());
    }
    case ScoreKind::OdinTemp: {
      const Vector p = softmax(logits, method.odin_temperature);
      return *std::max_element(p.begin(), p.end());
    }
    case ScoreKind::Mahalanobis:
      break;
  }
  throw Error(ErrorCode::InvalidParameter, "Mahalanobis is not a logit-based score");
}

double mahalanobis_score(const GaussianModel& g, std::span<const double> h) {
  const std::size_t L = g.precision.rows();
  if (h.size() != L) throw Error(ErrorCode::InvalidDimension, "feature length does not match gaussian model");
  Vector d(L);
  Vector pd(L);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < g.means.rows(); ++c) {
    const auto mu = g.means.row(c);
    for (std::size_t l = 0; l < L; ++l) d[l] = h[l] - mu[l];
    double q = 0.0;
    for (std::size_t r = 0; r < L; ++r) q += d[r] * dot(g.precision.row(r), d);
    best = std::min(best, q);
  }
  return -best;
}

ScoreRecord score_sample(const FittedDetector& det, std::span<const double> h) {
  const std::size_t L = det.feature_dim();
  if (h.size() != L) {
    throw Error(ErrorCode::InvalidDimension,
                "sample has " + std::to_string(h.size()) + " features, detector expects " + std::to_string(L));
  }
  const auto& cfg = det.config;
  ScoreRecord rec;
  rec.raw_logits = head_forward(det.head.weights, det.head.bias, h);
  const std::size_t c = argmax(rec.raw_logits);
  rec.predicted_class = static_cast<ClassIndex>(c);
  rec.cosine = cosine(h, det.prototypes.vectors.row(c));

  Vector feat(h.begin(), h.end());
  if (cfg.enable_mask) {
    for (std::size_t l = 0; l < L; ++l) {
      if (!det.masks.bit(l, c)) feat[l] = 0.0;
    }
  }
  if (cfg.enable_react) {
    for (double& x : feat) x = std::min(x, det.lambda);
  }
  rec.modulated_logits = head_forward(det.head.weights, det.head.bias, feat);
  if (cfg.enable_smoothing) {
    for (double& x : rec.modulated_logits) x *= rec.cosine;
  }

  if (cfg.method.kind == ScoreKind::Mahalanobis) {
    if (!det.gaussian) throw Error(ErrorCode::InvalidState, "Mahalanobis scoring requires a fitted gaussian");
    rec.score = mahalanobis_score(*det.gaussian, h);
  } else {
    rec.score = score_logits(rec.modulated_logits, cfg.method);
  }
  return rec;
}

double score_baseline(const FittedDetector& det, std::span<const double> h, const ScoreMethod& method) {
  const std::size_t L = det.feature_dim();
  if (h.size() != L) throw Error(ErrorCode::InvalidDimension, "sample length does not match detector");
  switch (method.kind) {
    case ScoreKind::Mahalanobis:
      if (!det.gaussian) throw Error(ErrorCode::InvalidState, "Mahalanobis scoring requires a fitted gaussian");
      return mahalanobis_score(*det.gaussian, h);
    case ScoreKind::EnergyReAct: {
      const Vector clipped = react_clip(h, det.lambda);
      return logsumexp(head_forward(det.head.weights, det.head.bias, clipped));
    }
    default:
      return score_logits(head_forward(det.head.weights, det.head.bias, h), method);
  }
}

}  // namespace oodgate
