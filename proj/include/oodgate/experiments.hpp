#pragma once

// Grid sweeps and stage ablations over one train / test-ID / test-OOD split.

#include <array>
#include <string>
#include <vector>

#include "oodgate/batch.hpp"
#include "oodgate/detector.hpp"
#include "oodgate/metrics.hpp"

namespace oodgate {

struct Split {
  const Matrix& train;
  std::span<const ClassIndex> train_labels;
  const ClassifierHead& head;
  const Matrix& test_id;
  const Matrix& test_ood;
};

/// Fits `config` on the split and evaluates the pipeline score.
EvalReport evaluate_config(const Split& split, const DetectorConfig& config, Parallelism par = {});

/// Plain energy of the raw logits.
EvalReport evaluate_energy_baseline(const Split& split, Parallelism par = {});

struct SweepGrid {
  std::vector<double> percentiles;
  std::vector<double> lambdas;
  std::vector<bool> smoothing;
};

/// Parses "p=0:90:10,lambda=0.2:2.0:0.2,smooth=0:1:1". Each value is either
/// lo:hi:step (inclusive), a single number, or a '/'-separated list; "inf" is
/// accepted for lambda. Missing keys default to p=0, lambda=inf, smooth=1.
SweepGrid parse_grid(const std::string& text);

struct SweepCell {
  double percentile = 0.0;
  double lambda = 0.0;
  bool smoothing = true;
  EvalReport report;
};

/// Cells in p-major, then lambda, then smoothing order. Cells are evaluated
/// in parallel; each cell scores serially.
std::vector<SweepCell> sweep(const Split& split, const SweepGrid& grid, const DetectorConfig& base,
                             Parallelism par = {});
std::vector<SweepCell> sweep_serial(const Split& split, const SweepGrid& grid, const DetectorConfig& base);

struct AblationRow {
  bool react = false;
  bool mask = false;
  bool smoothing = false;
  EvalReport report;
};

/// Stage combinations in order: none, R, R+FM, R+LS, FM+LS, R+FM+LS.
inline constexpr std::array<std::array<bool, 3>, 6> kAblationToggles{{
    {false, false, false},
    {true, false, false},
    {true, true, false},
    {true, false, true},
    {false, true, true},
    {true, true, true},
}};

std::vector<AblationRow> ablate(const Split& split, const DetectorConfig& base, Parallelism par = {});

}  // namespace oodgate
