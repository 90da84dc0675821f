#include "oodgate/oodf.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "oodgate/error.hpp"
#include "oodf_fixtures.hpp"

namespace oodgate {
namespace {

using testing::quantize;
using testing::quantized;
using testing::random_container;
using testing::random_matrix;
using testing::random_vector;

ErrorCode decode_error(const std::string& bytes) {
  try {
    decode_oodf(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode succeeded";
  return ErrorCode::InvalidState;
}

TEST(Oodf, RoundTripRandomContainers) {
  std::mt19937_64 rng(211);
  for (int t = 0; t < 100; ++t) {
    const auto c = random_container(rng);
    const std::string bytes = encode_oodf(c);
    const auto back = decode_oodf(bytes);
    EXPECT_EQ(back, quantize(c));
    EXPECT_EQ(encode_oodf(back), bytes);
  }
}

TEST(Oodf, HeaderLayout) {
  OodfContainer c;
  c.L = 2;
  c.C = 1;
  c.head = ClassifierHead{Matrix(2, 1, {1.0, -2.0}), Vector{0.5}};
  const std::string b = encode_oodf(c);
  const std::string expected_header("OODF\x01\0\0\0\x02\0\0\0\x01\0\0\0\x01\0\0\0HEAD", 24);
  ASSERT_GE(b.size(), 24u);
  EXPECT_EQ(b.substr(0, 24), expected_header);
  // payload length: u32 L + u32 C + 3 floats = 20
  EXPECT_EQ(b.substr(24, 8), std::string("\x14\0\0\0\0\0\0\0", 8));
  // 1.0f little-endian
  EXPECT_EQ(b.substr(40, 4), std::string("\0\0\x80\x3f", 4));
  EXPECT_EQ(b.size(), 32u + 20u);
}

TEST(Oodf, EmptyFeatures) {
  OodfContainer c;
  c.L = 3;
  c.C = 2;
  c.features = FeatureSet{Matrix(0, 3), std::vector<ClassIndex>{}};
  const auto back = decode_oodf(encode_oodf(c));
  ASSERT_TRUE(back.features.has_value());
  EXPECT_EQ(back.features->rows.rows(), 0u);
  EXPECT_EQ(back.features->rows.cols(), 3u);
}

TEST(Oodf, DeterministicBytes) {
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(encode_oodf(random_container(a)), encode_oodf(random_container(b)));
}

TEST(Oodf, StreamAndFile) {
  std::mt19937_64 rng(7);
  const auto c = random_container(rng);
  std::stringstream ss;
  const auto n = write_oodf(c, ss);
  EXPECT_EQ(n, encode_oodf(c).size());
  EXPECT_EQ(read_oodf(ss), quantize(c));

  const auto path = std::filesystem::temp_directory_path() / "oodgate_oodf_test.oodf";
  save_oodf(c, path);
  EXPECT_EQ(load_oodf(path), quantize(c));
  std::filesystem::remove(path);
}

TEST(Oodf, BadMagic) {
  EXPECT_EQ(decode_error("XXXXsomething"), ErrorCode::NotOodf);
  EXPECT_EQ(decode_error(""), ErrorCode::NotOodf);
  EXPECT_EQ(decode_error("OOD"), ErrorCode::NotOodf);
}

TEST(Oodf, UnsupportedVersion) {
  OodfContainer c;
  c.L = 1;
  c.C = 1;
  std::string b = encode_oodf(c);
  b[4] = 2;
  EXPECT_EQ(decode_error(b), ErrorCode::UnsupportedVersion);
}

TEST(Oodf, Truncation) {
  OodfContainer c;
  c.L = 4;
  c.C = 2;
  c.features = FeatureSet{Matrix(3, 4, 1.0), std::nullopt};
  const std::string b = encode_oodf(c);
  for (std::size_t cut : {b.size() - 1, b.size() - 9, std::size_t{30}, std::size_t{10}}) {
    EXPECT_EQ(decode_error(b.substr(0, cut)), ErrorCode::Corrupt) << cut;
  }
}

TEST(Oodf, CrossSectionMismatch) {
  // HEAD declares L = 4, FEAT rows are 5 wide: splice two valid files.
  OodfContainer head_only;
  head_only.L = 4;
  head_only.C = 2;
  head_only.head = ClassifierHead{Matrix(4, 2, 0.1), Vector{0, 0}};
  OodfContainer feat_only;
  feat_only.L = 5;
  feat_only.C = 2;
  feat_only.features = FeatureSet{Matrix(2, 5, 1.0), std::nullopt};
  std::string b = encode_oodf(head_only);
  b[16] = 2;
  b += encode_oodf(feat_only).substr(20);
  EXPECT_EQ(decode_error(b), ErrorCode::InvalidContainer);

  OodfContainer bad = feat_only;
  bad.L = 4;
  try {
    encode_oodf(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidContainer);
  }

  OodfContainer labels = feat_only;
  labels.features->labels = std::vector<ClassIndex>{0, 2};
  try {
    encode_oodf(labels);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidContainer);
  }
}

TEST(Oodf, NonFinitePayloadIsCorrupt) {
  OodfContainer c;
  c.L = 1;
  c.C = 1;
  c.features = FeatureSet{Matrix(1, 1, 1.0), std::nullopt};
  std::string b = encode_oodf(c);
  // last 4 bytes are the single feature value; make it a NaN.
  b.replace(b.size() - 4, 4, std::string("\0\0\xc0\x7f", 4));
  EXPECT_EQ(decode_error(b), ErrorCode::Corrupt);
}

TEST(Oodf, Float32OverflowRejectedOnWrite) {
  OodfContainer c;
  c.L = 1;
  c.C = 1;
  c.features = FeatureSet{Matrix(1, 1, 1e300), std::nullopt};
  EXPECT_THROW(encode_oodf(c), Error);
}

TEST(Oodf, UnknownSectionSkipped) {
  OodfContainer c;
  c.L = 1;
  c.C = 1;
  c.meta = {{"k", "v"}};
  std::string b = encode_oodf(c);
  b[16] = 2;  // two sections
  b += std::string("XTRA\x03\0\0\0\0\0\0\0abc", 15);
  EXPECT_EQ(decode_oodf(b), c);
}

TEST(Oodf, DetectorContainer) {
  std::mt19937_64 rng(13);
  const ClassifierHead head{random_matrix(rng, 6, 3), random_vector(rng, 3)};
  Matrix X = random_matrix(rng, 30, 6, 0, 2);
  std::vector<ClassIndex> y(30);
  for (std::size_t i = 0; i < 30; ++i) y[i] = static_cast<ClassIndex>(i % 3);
  DetectorConfig cfg;
  cfg.masking_percentile = 50;
  cfg.method = {ScoreKind::Mahalanobis};
  const auto det = fit(X, y, head, cfg);
  const auto back = detector_from_container(decode_oodf(encode_oodf(make_detector_container(det))));
  EXPECT_EQ(back.masks, det.masks);
  EXPECT_EQ(back.config, det.config);
  EXPECT_EQ(back.lambda, det.lambda);
  EXPECT_TRUE(back.gaussian.has_value());
  EXPECT_EQ(back.head.weights, quantized(det.head.weights));

  OodfContainer no_head = make_detector_container(det);
  no_head.head.reset();
  EXPECT_THROW(detector_from_container(no_head), Error);
}

}  // namespace
}  // namespace oodgate
