#pragma once

// Deterministic Gaussian-cluster benchmark in feature space.
//
// Class c has mean sep * e_{c*B} with B = floor(L / C) and owns the support
// block [c*B, (c+1)*B). The head is W[:, c] = mu_c / |mu_c|, b = 0. All
// randomness comes from one SplitMix64 stream consumed in a fixed order:
// train samples (class-major), test ID samples (class-major), then OOD samples.

#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include "oodgate/detector.hpp"
#include "oodgate/oodf.hpp"

namespace oodgate {

struct UniformNoise {
  double lo = 0.0;
  double hi = 1.0;
};
/// Noise plus `strength` on every channel outside the impersonated class's block.
struct OffMaskActivation {
  double strength = 2.0;
};
/// alpha * mu_c + (1 - alpha) * uniform[0, sep) noise.
struct PrototypeBlend {
  double alpha = 0.5;
};
using OodMode = std::variant<UniformNoise, OffMaskActivation, PrototypeBlend>;

struct SyntheticSpec {
  std::uint32_t L = 512;
  std::uint32_t C = 10;
  std::uint32_t n_id_per_class = 200;
  std::uint32_t n_ood = 2000;
  double cluster_sep = 4.0;
  double cluster_std = 0.25;
  OodMode ood = OffMaskActivation{2.0};
  std::uint64_t seed = 42;

  /// Throws InvalidParameter.
  void validate() const;
  std::size_t block_size() const noexcept { return L / C; }
};

/// Parses "L=512,C=10,n_id=200,n_ood=2000,sep=4,std=0.25,ood=offmask,strength=2".
/// Keys not given keep their defaults. ood is one of uniform (lo, hi),
/// offmask (strength), blend (alpha).
SyntheticSpec parse_synthetic_spec(const std::string& text);
std::map<std::string, std::string> describe(const SyntheticSpec& spec);

struct SyntheticDataset {
  ClassifierHead head;
  Matrix train;
  std::vector<ClassIndex> train_labels;
  Matrix test_id;
  std::vector<ClassIndex> test_id_labels;
  Matrix test_ood;
  std::vector<ClassIndex> ood_source_class;  // class impersonated (blend/offmask), 0 for uniform
};

SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

}  // namespace oodgate
