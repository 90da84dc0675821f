#pragma once

// Batch scoring kernels. Each parallel kernel has a serial twin with the same
// per-sample arithmetic; results are bit-identical regardless of thread count.

#include <vector>

#include "oodgate/detector.hpp"
#include "oodgate/metrics.hpp"

namespace oodgate {

/// Thread count for parallel kernels. 0 means the OpenMP default.
struct Parallelism {
  int threads = 0;
};

std::vector<ScoreRecord> score_batch(const FittedDetector& det, const Matrix& samples, Parallelism par = {});
std::vector<ScoreRecord> score_batch_serial(const FittedDetector& det, const Matrix& samples);

/// Only the final scores; avoids keeping per-sample logits.
std::vector<double> pipeline_scores(const FittedDetector& det, const Matrix& samples, Parallelism par = {});
std::vector<double> pipeline_scores_serial(const FittedDetector& det, const Matrix& samples);

std::vector<double> baseline_scores(const FittedDetector& det, const Matrix& samples, const ScoreMethod& method,
                                    Parallelism par = {});
std::vector<double> baseline_scores_serial(const FittedDetector& det, const Matrix& samples,
                                           const ScoreMethod& method);

/// Number of threads OpenMP would use for `par`; 1 when built without OpenMP.
int effective_threads(Parallelism par);

}  // namespace oodgate
