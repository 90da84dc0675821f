#pragma once

// OODF container: little-endian binary carrier for classifier heads, feature
// matrices and fitted detectors.
//
//   "OODF" | u32 version=1 | u32 L | u32 C | u32 section_count
//   section: 4-byte ASCII tag | u64 payload_length | payload
//
// Tags, written in this order when present:
//   HEAD  u32 L, u32 C, f32[L*C] W (row-major), f32[C] b
//   FEAT  u32 L, u32 has_labels, u64 N, f32[N*L] rows, u32[N] labels (if has_labels)
//   DETR  u32 L, u32 C, u32 k, u32 stage_flags, f64 p, u32 react_mode, f64 react_param,
//         u32 score_kind, f64 odin_T, f64 lambda, u8[L*C] mask, f32[C*L] prototypes,
//         u64[C] counts, u32 has_gaussian, then f32[C*L] means, f32[L*L] precision
//   META  u32 n, n * (u32 len, key bytes, u32 len, value bytes), keys sorted
// Unknown tags are skipped on read.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "oodgate/detector.hpp"

namespace oodgate {

inline constexpr std::uint32_t kOodfVersion = 1;

struct FeatureSet {
  Matrix rows;  // N x L, N may be 0
  std::optional<std::vector<ClassIndex>> labels;

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

struct DetectorSection {
  MaskMatrix masks;
  Prototypes prototypes;
  double lambda = 0.0;
  DetectorConfig config;
  std::optional<GaussianModel> gaussian;

  friend bool operator==(const DetectorSection&, const DetectorSection&) = default;
};

struct OodfContainer {
  std::uint32_t version = kOodfVersion;
  std::uint32_t L = 0;
  std::uint32_t C = 0;
  std::optional<ClassifierHead> head;
  std::optional<FeatureSet> features;
  std::optional<DetectorSection> detector;
  std::map<std::string, std::string> meta;

  /// Throws InvalidContainer if sections disagree with L, C or each other.
  void validate() const;

  friend bool operator==(const OodfContainer&, const OodfContainer&) = default;
};

OodfContainer make_detector_container(const FittedDetector& det);
/// Requires HEAD and DETR sections.
FittedDetector detector_from_container(const OodfContainer& c);

std::string encode_oodf(const OodfContainer& container);
OodfContainer decode_oodf(const std::string& bytes);

/// Returns the number of bytes written.
std::uint64_t write_oodf(const OodfContainer& container, std::ostream& sink);
OodfContainer read_oodf(std::istream& source);

void save_oodf(const OodfContainer& container, const std::filesystem::path& path);
OodfContainer load_oodf(const std::filesystem::path& path);

}  // namespace oodgate
