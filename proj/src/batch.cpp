#include "oodgate/batch.hpp"

#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "oodgate/error.hpp"

namespace oodgate {

namespace {

void check_batch(const FittedDetector& det, const Matrix& samples, ScoreKind kind) {
  if (samples.rows() > 0 && samples.cols() != det.feature_dim()) {
    throw Error(ErrorCode::InvalidDimension, "samples have width " + std::to_string(samples.cols()) +
                                                 ", detector expects " + std::to_string(det.feature_dim()));
  }
  if (kind == ScoreKind::Mahalanobis && !det.gaussian) {
    throw Error(ErrorCode::InvalidState, "Mahalanobis scoring requires a fitted gaussian");
  }
}

// Runs body(i) for i in [0, n) across threads; the first exception is rethrown.
template <typename Body>
void parallel_rows(std::size_t n, Parallelism par, Body&& body) {
  std::exception_ptr error;
  std::once_flag once;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(effective_threads(par))
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::call_once(once, [&] { error = std::current_exception(); });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

int effective_threads(Parallelism par) {
#ifdef _OPENMP
  return par.threads > 0 ? par.threads : omp_get_max_threads();
#else
  (void)par;
  return 1;
#endif
}

std::vector<ScoreRecord> score_batch(const FittedDetector& det, const Matrix& samples, Parallelism par) {
  check_batch(det, samples, det.config.method.kind);
  std::vector<ScoreRecord> out(samples.rows());
  parallel_rows(samples.rows(), par, [&](std::size_t i) { out[i] = score_sample(det, samples.row(i)); });
  return out;
}

std::vector<ScoreRecord> score_batch_serial(const FittedDetector& det, const Matrix& samples) {
  check_batch(det, samples, det.config.method.kind);
  std::vector<ScoreRecord> out;
  out.reserve(samples.rows());
  for (std::size_t i = 0; i < samples.rows(); ++i) out.push_back(score_sample(det, samples.row(i)));
  return out;
}

std::vector<double> pipeline_scores(const FittedDetector& det, const Matrix& samples, Parallelism par) {
  check_batch(det, samples, det.config.method.kind);
  std::vector<double> out(samples.rows());
  parallel_rows(samples.rows(), par, [&](std::size_t i) { out[i] = score_sample(det, samples.row(i)).score; });
  return out;
}

std::vector<double> pipeline_scores_serial(const FittedDetector& det, const Matrix& samples) {
  check_batch(det, samples, det.config.method.kind);
  std::vector<double> out(samples.rows());
  for (std::size_t i = 0; i < samples.rows(); ++i) out[i] = score_sample(det, samples.row(i)).score;
  return out;
}

std::vector<double> baseline_scores(const FittedDetector& det, const Matrix& samples, const ScoreMethod& method,
                                    Parallelism par) {
  check_batch(det, samples, method.kind);
  std::vector<double> out(samples.rows());
  parallel_rows(samples.rows(), par, [&](std::size_t i) { out[i] = score_baseline(det, samples.row(i), method); });
  return out;
}

std::vector<double> baseline_scores_serial(const FittedDetector& det, const Matrix& samples,
                                           const ScoreMethod& method) {
  check_batch(det, samples, method.kind);
  std::vector<double> out(samples.rows());
  for (std::size_t i = 0; i < samples.rows(); ++i) out[i] = score_baseline(det, samples.row(i), method);
  return out;
}

}  // namespace oodgate
