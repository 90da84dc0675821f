#pragma once

// Post-hoc OOD detector built on top of a frozen affine classifier head.
//
// Scoring pipeline for a penultimate feature h with predicted class c:
//   f   = W^T h + b                       raw logits, c = argmax f
//   h_m = mask_c * h                      keep the k channels with largest W[:, c]
//   h_r = min(h_m, lambda)                ReAct clipping
//   f_m = W^T h_r + b
//   f^  = cos(h, v_c) * f_m               logit smoothing with class prototype v_c
//   S   = logsumexp(f^)                   energy (other base scores may be composed)
// Prediction, cosine and prototypes always use the raw feature.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "oodgate/numcore.hpp"

namespace oodgate {

using ClassIndex = std::uint32_t;

struct ClassifierHead {
  Matrix weights;  // L x C
  Vector bias;     // C

  std::size_t feature_dim() const noexcept { return weights.rows(); }
  std::size_t num_classes() const noexcept { return weights.cols(); }

  /// Throws InvalidDimension unless bias has C entries and L, C >= 1.
  void validate() const;

  friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;
};

class MaskMatrix {
 public:
  MaskMatrix() = default;
  MaskMatrix(std::size_t L, std::size_t C, std::size_t k, std::vector<std::uint8_t> bits);

  std::size_t feature_dim() const noexcept { return L_; }
  std::size_t num_classes() const noexcept { return C_; }
  std::size_t k() const noexcept { return k_; }
  bool bit(std::size_t l, std::size_t c) const { return bits_[l * C_ + c] != 0; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  friend bool operator==(const MaskMatrix&, const MaskMatrix&) = default;

 private:
  std::size_t L_ = 0;
  std::size_t C_ = 0;
  std::size_t k_ = 0;
  std::vector<std::uint8_t> bits_;  // row-major L x C
};

struct Prototypes {
  Matrix vectors;                     // C x L
  std::vector<std::uint64_t> counts;  // samples per class

  friend bool operator==(const Prototypes&, const Prototypes&) = default;
};

struct GaussianModel {
  Matrix means;      // C x L
  Matrix precision;  // L x L, inverse of the shrunk shared covariance

  friend bool operator==(const GaussianModel&, const GaussianModel&) = default;
};

struct ReactExplicit {
  double lambda = 1.0;  // >= 0, may be +inf
  friend bool operator==(const ReactExplicit&, const ReactExplicit&) = default;
};
struct ReactPercentile {
  double q = 90.0;  // in (0, 100)
  friend bool operator==(const ReactPercentile&, const ReactPercentile&) = default;
};
using ReactMode = std::variant<ReactExplicit, ReactPercentile>;

enum class ScoreKind : std::uint32_t { Energy = 0, MSP = 1, OdinTemp = 2, Mahalanobis = 3, EnergyReAct = 4 };

struct ScoreMethod {
  ScoreKind kind = ScoreKind::Energy;
  double odin_temperature = 1000.0;

  friend bool operator==(const ScoreMethod&, const ScoreMethod&) = default;
};

std::string to_string(ScoreKind kind);
/// Accepts energy, msp, odin, mahalanobis, energy-react (case-sensitive).
ScoreKind parse_score_kind(std::string_view name);

struct DetectorConfig {
  double masking_percentile = 0.0;  // p in [0, 100)
  ReactMode react = ReactExplicit{1.0};
  bool enable_mask = true;
  bool enable_react = true;
  bool enable_smoothing = true;
  ScoreMethod method{};

  /// k = round(L * (1 - p / 100)); throws InvalidParameter unless 1 <= k <= L.
  std::size_t resolve_k(std::size_t L) const;
  /// Throws InvalidParameter on out-of-range fields.
  void validate() const;

  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

/// Immutable output of fit(). Safe to share between threads.
struct FittedDetector {
  ClassifierHead head;
  MaskMatrix masks;
  Prototypes prototypes;
  double lambda = 0.0;
  DetectorConfig config;
  std::optional<GaussianModel> gaussian;

  std::size_t feature_dim() const noexcept { return head.feature_dim(); }
  std::size_t num_classes() const noexcept { return head.num_classes(); }

  /// Cross-field dimension checks; throws InvalidDimension.
  void validate() const;

  friend bool operator==(const FittedDetector&, const FittedDetector&) = default;
};

struct ScoreRecord {
  ClassIndex predicted_class = 0;
  double cosine = 0.0;
  Vector raw_logits;
  Vector modulated_logits;
  double score = 0.0;
};

/// Per column, ones at the k largest weights; ties go to the lower row.
MaskMatrix build_masks(const Matrix& W, std::size_t k);

Vector apply_mask(std::span<const double> h, const MaskMatrix& masks, std::size_t c);

/// Elementwise min(h, lambda). lambda may be +inf.
Vector react_clip(std::span<const double> h, double lambda);

/// Linear interpolation between order statistics at position (n - 1) * q / 100.
double percentile(std::vector<double> values, double q);

/// Class means of the raw features. Every class 0..C-1 must be present.
Prototypes compute_prototypes(const Matrix& features, std::span<const ClassIndex> labels, std::size_t C);

/// Class means plus shared covariance shrunk by eps * I, eps = 1e-3 * trace / L.
GaussianModel fit_gaussian(const Matrix& features, std::span<const ClassIndex> labels, std::size_t C);

FittedDetector fit(const Matrix& features, std::span<const ClassIndex> labels, const ClassifierHead& head,
                   const DetectorConfig& config);

ScoreRecord score_sample(const FittedDetector& det, std::span<const double> h);

/// Base score applied to the raw logits (or to the clipped head output for EnergyReAct).
double score_baseline(const FittedDetector& det, std::span<const double> h, const ScoreMethod& method);

/// Base score over an arbitrary logit vector. Mahalanobis is not logit based and is rejected.
double score_logits(std::span<const double> logits, const ScoreMethod& method);

/// -min_c (h - mu_c)^T P (h - mu_c).
double mahalanobis_score(const GaussianModel& g, std::span<const double> h);

}  // namespace oodgate
