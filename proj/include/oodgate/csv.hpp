#pragma once

#include <istream>

#include "oodgate/oodf.hpp"

namespace oodgate {

/// Tiny-fixture importer. Header row "l0,l1,...,l{L-1}[,label]", then one
/// sample per line. Blank lines are ignored.
FeatureSet read_features_csv(std::istream& in);

}  // namespace oodgate
