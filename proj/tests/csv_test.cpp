#include "oodgate/csv.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "oodgate/error.hpp"

namespace oodgate {
namespace {

FeatureSet parse(const std::string& text) {
  std::istringstream in(text);
  return read_features_csv(in);
}

TEST(Csv, WithLabels) {
  const auto fs = parse("l0,l1,l2,label\n1,2,3,0\n\n-0.5, 4e-1 ,0,2\n");
  EXPECT_EQ(fs.rows.rows(), 2u);
  EXPECT_EQ(fs.rows.cols(), 3u);
  EXPECT_EQ(fs.rows.values(), (std::vector<double>{1, 2, 3, -0.5, 0.4, 0}));
  ASSERT_TRUE(fs.labels.has_value());
  EXPECT_EQ(*fs.labels, (std::vector<ClassIndex>{0, 2}));
}

TEST(Csv, WithoutLabels) {
  const auto fs = parse("l0,l1\r\n1,2\r\n3,4\r\n");
  EXPECT_EQ(fs.rows.rows(), 2u);
  EXPECT_FALSE(fs.labels.has_value());
}

TEST(Csv, HeaderOnly) {
  const auto fs = parse("l0,l1\n");
  EXPECT_EQ(fs.rows.rows(), 0u);
  EXPECT_EQ(fs.rows.cols(), 2u);
}

TEST(Csv, Errors) {
  EXPECT_THROW(parse(""), Error);
  EXPECT_THROW(parse("a,b\n1,2\n"), Error);
  EXPECT_THROW(parse("l0,l1\n1\n"), Error);
  EXPECT_THROW(parse("l0,l1\n1,x\n"), Error);
  EXPECT_THROW(parse("l0,label\n1,-1\n"), Error);
  EXPECT_THROW(parse("l0\nnan\n"), Error);
  EXPECT_THROW(parse("l0,l1\n1,2,\n"), Error);
}

}  // namespace
}  // namespace oodgate
