#include "oodgate/detector.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "oodgate/error.hpp"
#include "test_util.hpp"

namespace oodgate {
namespace {

using testing::random_matrix;
using testing::random_vector;

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename F>
ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no oodgate::Error thrown";
  return ErrorCode::Corrupt;
}

// Full stable sort of each column, descending, lower row first on ties.
std::vector<std::uint8_t> mask_oracle(const Matrix& W, std::size_t k) {
  std::vector<std::uint8_t> bits(W.rows() * W.cols(), 0);
  for (std::size_t c = 0; c < W.cols(); ++c) {
    std::vector<std::size_t> idx(W.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return W(a, c) > W(b, c); });
    for (std::size_t i = 0; i < k; ++i) bits[idx[i] * W.cols() + c] = 1;
  }
  return bits;
}

// Hand-built detector from the worked example: W = I2, b = 0, k = 1,
// lambda = 1.5, prototypes e0 and e1.
FittedDetector worked_detector() {
  FittedDetector det;
  det.head = ClassifierHead{Matrix::identity(2), Vector{0, 0}};
  det.masks = build_masks(det.head.weights, 1);
  det.prototypes = Prototypes{Matrix(2, 2, {1, 0, 0, 1}), {1, 1}};
  det.lambda = 1.5;
  det.config.masking_percentile = 50;
  det.config.react = ReactExplicit{1.5};
  return det;
}

TEST(BuildMasks, Examples) {
  const Matrix W(3, 2, {0.5, -0.1, 0.2, 0.3, -0.3, 0.8});
  const auto m = build_masks(W, 2);
  EXPECT_EQ(m.bits(), (std::vector<std::uint8_t>{1, 0, 1, 1, 0, 1}));
  EXPECT_EQ(m.bits(), mask_oracle(W, 2));

  const auto all = build_masks(W, 3);
  EXPECT_TRUE(std::all_of(all.bits().begin(), all.bits().end(), [](auto b) { return b == 1; }));

  const auto tied = build_masks(Matrix(2, 2, {1, 1, 1, 1}), 1);
  EXPECT_EQ(tied.bits(), (std::vector<std::uint8_t>{1, 1, 0, 0}));
}

TEST(BuildMasks, KOutOfRange) {
  const Matrix W(3, 2);
  EXPECT_EQ(error_of([&] { build_masks(W, 0); }), ErrorCode::InvalidParameter);
  EXPECT_EQ(error_of([&] { build_masks(W, 4); }), ErrorCode::InvalidParameter);
}

TEST(BuildMasks, MatchesFullSortOracleWithTies) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> level(-3, 3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t L = 1 + t % 37;
    const std::size_t C = 1 + t % 5;
    Matrix W(L, C);
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t c = 0; c < C; ++c) W(l, c) = (t % 2) ? level(rng) * 0.5 : std::uniform_real_distribution<>(-1, 1)(rng);
    const std::size_t k = 1 + rng() % L;
    const auto m = build_masks(W, k);
    EXPECT_EQ(m.bits(), mask_oracle(W, k));
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t ones = 0;
      for (std::size_t l = 0; l < L; ++l) ones += m.bit(l, c);
      EXPECT_EQ(ones, k);
    }
  }
}

TEST(ApplyMask, Examples) {
  const auto m = build_masks(Matrix(2, 1, {1.0, 0.0}), 1);
  EXPECT_EQ(apply_mask(Vector{2, 1}, m, 0), (Vector{2, 0}));
  const auto ones = build_masks(Matrix(2, 1, {1.0, 0.0}), 2);
  EXPECT_EQ(apply_mask(Vector{2, 1}, ones, 0), (Vector{2, 1}));
  EXPECT_EQ(apply_mask(Vector{0, 0}, m, 0), (Vector{0, 0}));
  EXPECT_EQ(error_of([&] { apply_mask(Vector{2, 1}, m, 1); }), ErrorCode::InvalidParameter);
}

TEST(ReactClip, Examples) {
  EXPECT_EQ(react_clip(Vector{2, 0}, 1.5), (Vector{1.5, 0}));
  EXPECT_EQ(react_clip(Vector{2, -7, 1e300}, kInf), (Vector{2, -7, 1e300}));
  EXPECT_EQ(react_clip(Vector{-1, 3}, 0.0), (Vector{-1, 0}));
  EXPECT_EQ(error_of([] { react_clip(Vector{1}, -0.1); }), ErrorCode::InvalidParameter);
}

TEST(ReactClip, IdempotentAndCommutesWithMask) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> lam(0.0, 2.0);
  for (int t = 0; t < 300; ++t) {
    const std::size_t L = 2 + t % 30;
    const Matrix W = random_matrix(rng, L, 3);
    const auto m = build_masks(W, 1 + rng() % L);
    const auto h = random_vector(rng, L, -3, 3);
    const double l = lam(rng);
    const auto once = react_clip(h, l);
    EXPECT_EQ(react_clip(once, l), once);
    const std::size_t c = rng() % 3;
    EXPECT_EQ(react_clip(apply_mask(h, m, c), l), apply_mask(react_clip(h, l), m, c));
  }
}

TEST(Masking, NeverIncreasesClippedNorm) {
  std::mt19937_64 rng(37);
  for (int t = 0; t < 300; ++t) {
    const std::size_t L = 2 + t % 40;
    const auto m = build_masks(random_matrix(rng, L, 4), 1 + rng() % L);
    const auto h = random_vector(rng, L, 0, 4);
    const double lam = (t % 3 == 0) ? kInf : 1.0;
    const std::size_t c = rng() % 4;
    EXPECT_LE(norm(react_clip(apply_mask(h, m, c), lam)), norm(react_clip(h, lam)) + 1e-15);
  }
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({3, 0, 2, 1}, 50), 1.5);
  EXPECT_DOUBLE_EQ(percentile({3, 0, 2, 1}, 0), 0.0);
  EXPECT_DOUBLE_EQ(percentile({3, 0, 2, 1}, 100), 3.0);
  EXPECT_DOUBLE_EQ(percentile({5}, 90), 5.0);
  // position 0.9 * 9 = 8.1 between 8 and 9
  EXPECT_NEAR(percentile({9, 8, 7, 6, 5, 4, 3, 2, 1, 0}, 90), 8.1, 1e-12);
}

TEST(Fit, PrototypeIsClassMean) {
  const ClassifierHead head{Matrix(2, 1, {1, 1}), Vector{0}};
  DetectorConfig cfg;
  const auto det = fit(Matrix(2, 2, {1, 0, 3, 2}), std::vector<ClassIndex>{0, 0}, head, cfg);
  EXPECT_EQ(det.prototypes.vectors.values(), (std::vector<double>{2, 1}));
  EXPECT_EQ(det.prototypes.counts, (std::vector<std::uint64_t>{2}));
  // p = 0 keeps every channel.
  EXPECT_EQ(det.masks.k(), 2u);
  EXPECT_TRUE(std::all_of(det.masks.bits().begin(), det.masks.bits().end(), [](auto b) { return b == 1; }));
  EXPECT_FALSE(det.gaussian.has_value());
}

TEST(Fit, PercentileLambda) {
  const ClassifierHead head{Matrix(2, 1, {1, 1}), Vector{0}};
  DetectorConfig cfg;
  cfg.react = ReactPercentile{50};
  const auto det = fit(Matrix(2, 2, {0, 1, 2, 3}), std::vector<ClassIndex>{0, 0}, head, cfg);
  EXPECT_DOUBLE_EQ(det.lambda, 1.5);
}

TEST(Fit, KFromPercentile) {
  const ClassifierHead head{Matrix(10, 1, std::vector<double>(10, 1.0)), Vector{0}};
  DetectorConfig cfg;
  cfg.masking_percentile = 60;
  EXPECT_EQ(cfg.resolve_k(10), 4u);
  EXPECT_EQ(cfg.resolve_k(512), 205u);
  cfg.masking_percentile = 96;
  EXPECT_EQ(error_of([&] { cfg.resolve_k(10); }), ErrorCode::InvalidParameter);
  cfg.masking_percentile = 100;
  EXPECT_EQ(error_of([&] { cfg.validate(); }), ErrorCode::InvalidParameter);
}

TEST(Fit, Errors) {
  const ClassifierHead head{Matrix::identity(2), Vector{0, 0}};
  DetectorConfig cfg;
  EXPECT_EQ(error_of([&] { fit(Matrix(2, 2, {1, 0, 3, 2}), std::vector<ClassIndex>{0, 0}, head, cfg); }),
            ErrorCode::FitError);
  EXPECT_EQ(error_of([&] { fit(Matrix(2, 3), std::vector<ClassIndex>{0, 1}, head, cfg); }),
            ErrorCode::InvalidDimension);
  EXPECT_EQ(error_of([&] { fit(Matrix(2, 2), std::vector<ClassIndex>{0}, head, cfg); }), ErrorCode::InvalidDimension);
  cfg.react = ReactExplicit{-1};
  EXPECT_EQ(error_of([&] { fit(Matrix(2, 2), std::vector<ClassIndex>{0, 1}, head, cfg); }),
            ErrorCode::InvalidParameter);
}

TEST(ScoreSample, WorkedExample) {
  const auto det = worked_detector();
  const auto r = score_sample(det, Vector{2, 1});
  EXPECT_EQ(r.predicted_class, 0u);
  EXPECT_NEAR(r.cosine, 0.89442719099991587856, 1e-15);
  EXPECT_EQ(r.raw_logits, (Vector{2, 1}));
  EXPECT_NEAR(r.modulated_logits[0], 1.34164078649987381785, 1e-14);
  EXPECT_EQ(r.modulated_logits[1], 0.0);
  // ln(exp(1.5 * 2 / sqrt(5)) + 1), 40-digit reference.
  EXPECT_NEAR(r.score, 1.57387599359047645787, 1e-12);
}

TEST(ScoreSample, AllStagesIdentity) {
  auto det = worked_detector();
  det.masks = build_masks(det.head.weights, 2);
  det.lambda = kInf;
  const auto r = score_sample(det, Vector{1, 0});
  EXPECT_EQ(r.cosine, 1.0);
  EXPECT_EQ(r.modulated_logits, r.raw_logits);
  EXPECT_DOUBLE_EQ(r.score, logsumexp(r.raw_logits));
}

TEST(ScoreSample, ZeroFeature) {
  const auto r = score_sample(worked_detector(), Vector{0, 0});
  EXPECT_EQ(r.predicted_class, 0u);
  EXPECT_EQ(r.cosine, 0.0);
  EXPECT_EQ(r.modulated_logits, (Vector{0, 0}));
  EXPECT_NEAR(r.score, std::log(2.0), 1e-15);
}

TEST(ScoreSample, DimensionMismatch) {
  EXPECT_EQ(error_of([] { score_sample(worked_detector(), Vector{1, 2, 3}); }), ErrorCode::InvalidDimension);
}

TEST(ScoreSample, NegativeCosineIsNotClamped) {
  auto det = worked_detector();
  det.prototypes.vectors = Matrix(2, 2, {-1, 0, 0, 1});
  const auto r = score_sample(det, Vector{2, 1});
  EXPECT_LT(r.cosine, 0.0);
  EXPECT_LT(r.modulated_logits[0], 0.0);
}

TEST(ScoreBaseline, Examples) {
  auto det = worked_detector();
  det.head.bias = {0, 0};
  const Vector h{2, 0};
  EXPECT_NEAR(score_baseline(det, h, {ScoreKind::MSP}), 0.88079707797788244406, 1e-15);
  EXPECT_NEAR(score_baseline(det, h, {ScoreKind::Energy}), 2.12692801104297249644, 1e-14);
  // clip at 1.5 -> logits [1.5, 0]
  EXPECT_NEAR(score_baseline(det, h, {ScoreKind::EnergyReAct}), std::log(std::exp(1.5) + 1.0), 1e-14);
  EXPECT_NEAR(score_baseline(det, h, {ScoreKind::OdinTemp, 1000.0}), 1.0 / (1.0 + std::exp(-2.0 / 1000.0)), 1e-15);

  EXPECT_EQ(error_of([&] { score_baseline(det, h, {ScoreKind::Mahalanobis}); }), ErrorCode::InvalidState);
  det.gaussian = GaussianModel{Matrix(2, 2, {0, 0, 10, 10}), Matrix::identity(2)};
  EXPECT_DOUBLE_EQ(score_baseline(det, Vector{3, 4}, {ScoreKind::Mahalanobis}), -25.0);
}

TEST(ScoreSample, ComposedBaseScoresUseModulatedLogits) {
  auto det = worked_detector();
  det.config.method = {ScoreKind::MSP};
  const auto r = score_sample(det, Vector{2, 1});
  const auto p = softmax(r.modulated_logits);
  EXPECT_DOUBLE_EQ(r.score, std::max(p[0], p[1]));
  det.config.method = {ScoreKind::OdinTemp, 10.0};
  const auto q = softmax(r.modulated_logits, 10.0);
  EXPECT_DOUBLE_EQ(score_sample(det, Vector{2, 1}).score, std::max(q[0], q[1]));
}

FittedDetector random_detector(std::mt19937_64& rng, std::size_t L, std::size_t C, std::size_t N, DetectorConfig cfg) {
  const ClassifierHead head{random_matrix(rng, L, C), random_vector(rng, C, -0.5, 0.5)};
  Matrix feats = random_matrix(rng, N, L, 0, 2);
  std::vector<ClassIndex> labels(N);
  for (std::size_t i = 0; i < N; ++i) labels[i] = static_cast<ClassIndex>(i % C);
  return fit(feats, labels, head, cfg);
}

TEST(ScoreSample, StagesDisabledEqualsEnergy) {
  std::mt19937_64 rng(41);
  DetectorConfig cfg;
  cfg.masking_percentile = 60;
  cfg.enable_mask = cfg.enable_react = cfg.enable_smoothing = false;
  const auto det = random_detector(rng, 64, 10, 100, cfg);
  for (int t = 0; t < 1000; ++t) {
    const auto h = random_vector(rng, 64, 0, 3);
    EXPECT_NEAR(score_sample(det, h).score, score_baseline(det, h, {ScoreKind::Energy}), 1e-9);
  }
}

TEST(ScoreSample, PredictionIndependentOfStages) {
  std::mt19937_64 rng(43);
  DetectorConfig cfg;
  cfg.masking_percentile = 70;
  cfg.react = ReactPercentile{80};
  auto det = random_detector(rng, 32, 6, 60, cfg);
  for (int t = 0; t < 300; ++t) {
    const auto h = random_vector(rng, 32, 0, 3);
    const auto expected = argmax(head_forward(det.head.weights, det.head.bias, h));
    for (int mask = 0; mask < 8; ++mask) {
      det.config.enable_mask = mask & 1;
      det.config.enable_react = mask & 2;
      det.config.enable_smoothing = mask & 4;
      EXPECT_EQ(score_sample(det, h).predicted_class, expected);
    }
  }
}

TEST(Smoothing, EnergyMonotoneInCosineForNonNegativeLogits) {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const auto f = random_vector(rng, 1 + t % 20, 0, 10);
    double s1 = u(rng), s2 = u(rng);
    if (s1 > s2) std::swap(s1, s2);
    Vector a = f, b = f;
    for (auto& x : a) x *= s1;
    for (auto& x : b) x *= s2;
    EXPECT_LE(logsumexp(a), logsumexp(b) + 1e-12);
  }
}

TEST(Gaussian, PrecisionInvertsShrunkCovariance) {
  std::mt19937_64 rng(53);
  const std::size_t L = 6, C = 3, N = 40;
  const Matrix X = random_matrix(rng, N, L, -2, 2);
  std::vector<ClassIndex> y(N);
  for (std::size_t i = 0; i < N; ++i) y[i] = static_cast<ClassIndex>(i % C);
  const auto g = fit_gaussian(X, y, C);

  // Naive shared covariance with the same shrinkage rule.
  const auto mu = compute_prototypes(X, y, C).vectors;
  Matrix cov(L, L);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t a = 0; a < L; ++a)
      for (std::size_t b = 0; b < L; ++b) cov(a, b) += (X(i, a) - mu(y[i], a)) * (X(i, b) - mu(y[i], b)) / N;
  double tr = 0;
  for (std::size_t a = 0; a < L; ++a) tr += cov(a, a);
  for (std::size_t a = 0; a < L; ++a) cov(a, a) += 1e-3 * tr / L;

  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = 0; b < L; ++b) {
      EXPECT_NEAR(g.precision(a, b), g.precision(b, a), 1e-9);
      double s = 0;
      for (std::size_t m = 0; m < L; ++m) s += cov(a, m) * g.precision(m, b);
      EXPECT_NEAR(s, a == b ? 1.0 : 0.0, 1e-9);
    }
  }
  EXPECT_EQ(g.means, mu);
}

TEST(Gaussian, ClassMeanScoresZeroAndIsMaximal) {
  std::mt19937_64 rng(59);
  DetectorConfig cfg;
  cfg.method = {ScoreKind::Mahalanobis};
  const auto det = random_detector(rng, 8, 3, 60, cfg);
  ASSERT_TRUE(det.gaussian.has_value());
  for (std::size_t c = 0; c < 3; ++c) {
    const auto mu = det.gaussian->means.row(c);
    EXPECT_NEAR(mahalanobis_score(*det.gaussian, mu), 0.0, 1e-12);
    for (int t = 0; t < 50; ++t) EXPECT_LE(mahalanobis_score(*det.gaussian, random_vector(rng, 8, 0, 2)), 0.0);
  }
  const auto h = random_vector(rng, 8);
  EXPECT_DOUBLE_EQ(score_sample(det, h).score, score_baseline(det, h, {ScoreKind::Mahalanobis}));
}

TEST(Gaussian, DegenerateDataStillPositiveDefinite) {
  const Matrix X(4, 2, {1, 0, 1, 0, 0, 1, 0, 1});
  const auto g = fit_gaussian(X, std::vector<ClassIndex>{0, 0, 1, 1}, 2);
  EXPECT_GT(g.precision(0, 0), 0.0);
  EXPECT_TRUE(std::isfinite(g.precision(1, 1)));
}

TEST(ScoreKind, Names) {
  for (auto k : {ScoreKind::Energy, ScoreKind::MSP, ScoreKind::OdinTemp, ScoreKind::Mahalanobis,
                 ScoreKind::EnergyReAct}) {
    EXPECT_EQ(parse_score_kind(to_string(k)), k);
  }
  EXPECT_EQ(error_of([] { parse_score_kind("knn"); }), ErrorCode::InvalidParameter);
}

}  // namespace
}  // namespace oodgate
