#include "oodgate/synthetic.hpp"

#include <cmath>
#include <sstream>

#include "oodgate/error.hpp"
#include "oodgate/metrics.hpp"
#include "oodgate/rng.hpp"

namespace oodgate {

namespace {

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw Error(ErrorCode::InvalidParameter, "bad value for " + key + ": '" + v + "'");
  return x;
}

std::uint64_t parse_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(ErrorCode::InvalidParameter, "bad integer for " + key + ": '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidParameter, "integer out of range for " + key);
  }
}

std::uint32_t parse_u32(const std::string& key, const std::string& v) {
  const auto x = parse_count(key, v);
  if (x > 0xFFFFFFFFull) throw Error(ErrorCode::InvalidParameter, key + " too large");
  return static_cast<std::uint32_t>(x);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (L < 1 || C < 1 || n_id_per_class < 1 || n_ood < 1) {
    throw Error(ErrorCode::InvalidParameter, "synthetic counts must be >= 1");
  }
  if (L < C) throw Error(ErrorCode::InvalidParameter, "synthetic benchmark needs L >= C for disjoint class blocks");
  if (!(cluster_sep > 0.0) || !std::isfinite(cluster_sep)) throw Error(ErrorCode::InvalidParameter, "cluster_sep must be > 0");
  if (!(cluster_std >= 0.0) || !std::isfinite(cluster_std)) {
    throw Error(ErrorCode::InvalidParameter, "cluster_std must be finite and >= 0");
  }
  std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, UniformNoise>) {
          if (!(m.lo < m.hi) || !std::isfinite(m.lo) || !std::isfinite(m.hi)) {
            throw Error(ErrorCode::InvalidParameter, "uniform noise needs finite lo < hi");
          }
        } else if constexpr (std::is_same_v<T, OffMaskActivation>) {
          if (!std::isfinite(m.strength)) throw Error(ErrorCode::InvalidParameter, "strength must be finite");
        } else {
          if (!(m.alpha >= 0.0 && m.alpha <= 1.0)) throw Error(ErrorCode::InvalidParameter, "alpha must be in [0, 1]");
        }
      },
      ood);
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec s;
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidParameter, "expected key=value, got '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  std::string mode = "offmask";
  UniformNoise uni;
  OffMaskActivation off;
  PrototypeBlend blend;
  for (const auto& [k, v] : kv) {
    if (k == "L") s.L = parse_u32(k, v);
    else if (k == "C") s.C = parse_u32(k, v);
    else if (k == "n_id") s.n_id_per_class = parse_u32(k, v);
    else if (k == "n_ood") s.n_ood = parse_u32(k, v);
    else if (k == "sep") s.cluster_sep = parse_real(k, v);
    else if (k == "std") s.cluster_std = parse_real(k, v);
    else if (k == "seed") s.seed = parse_count(k, v);
    else if (k == "ood") mode = v;
    else if (k == "lo") uni.lo = parse_real(k, v);
    else if (k == "hi") uni.hi = parse_real(k, v);
    else if (k == "strength") off.strength = parse_real(k, v);
    else if (k == "alpha") blend.alpha = parse_real(k, v);
    else throw Error(ErrorCode::InvalidParameter, "unknown synthetic spec key '" + k + "'");
  }
  if (mode == "uniform") s.ood = uni;
  else if (mode == "offmask") s.ood = off;
  else if (mode == "blend") s.ood = blend;
  else throw Error(ErrorCode::InvalidParameter, "unknown ood mode '" + mode + "'");
  s.validate();
  return s;
}

std::map<std::string, std::string> describe(const SyntheticSpec& spec) {
  std::map<std::string, std::string> m{
      {"source", "synthetic"},
      {"synthetic.L", std::to_string(spec.L)},
      {"synthetic.C", std::to_string(spec.C)},
      {"synthetic.n_id", std::to_string(spec.n_id_per_class)},
      {"synthetic.n_ood", std::to_string(spec.n_ood)},
      {"synthetic.sep", format_real(spec.cluster_sep)},
      {"synthetic.std", format_real(spec.cluster_std)},
      {"synthetic.seed", std::to_string(spec.seed)},
  };
  std::visit(
      [&](const auto& mode) {
        using T = std::decay_t<decltype(mode)>;
        if constexpr (std::is_same_v<T, UniformNoise>) {
          m["synthetic.ood"] = "uniform";
          m["synthetic.lo"] = format_real(mode.lo);
          m["synthetic.hi"] = format_real(mode.hi);
        } else if constexpr (std::is_same_v<T, OffMaskActivation>) {
          m["synthetic.ood"] = "offmask";
          m["synthetic.strength"] = format_real(mode.strength);
        } else {
          m["synthetic.ood"] = "blend";
          m["synthetic.alpha"] = format_real(mode.alpha);
        }
      },
      spec.ood);
  return m;
}

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t L = spec.L;
  const std::size_t C = spec.C;
  const std::size_t B = spec.block_size();
  const std::size_t n_id = std::size_t{spec.n_id_per_class} * C;

  SyntheticDataset ds;
  ds.head.weights = Matrix(L, C);
  for (std::size_t c = 0; c < C; ++c) ds.head.weights(c * B, c) = 1.0;
  ds.head.bias.assign(C, 0.0);

  SplitMix64 rng(spec.seed);
  GaussianSource gauss(rng);

  const auto fill_id = [&](Matrix& m, std::vector<ClassIndex>& labels) {
    m = Matrix(n_id, L);
    labels.resize(n_id);
    std::size_t i = 0;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::uint32_t j = 0; j < spec.n_id_per_class; ++j, ++i) {
        auto row = m.row(i);
        for (std::size_t l = 0; l < L; ++l) row[l] = spec.cluster_std * gauss.next();
        row[c * B] += spec.cluster_sep;
        labels[i] = static_cast<ClassIndex>(c);
      }
    }
  };
  fill_id(ds.train, ds.train_labels);
  fill_id(ds.test_id, ds.test_id_labels);

  ds.test_ood = Matrix(spec.n_ood, L);
  ds.ood_source_class.assign(spec.n_ood, 0);
  for (std::size_t i = 0; i < spec.n_ood; ++i) {
    auto row = ds.test_ood.row(i);
    std::visit(
        [&](const auto& mode) {
          using T = std::decay_t<decltype(mode)>;
          if constexpr (std::is_same_v<T, UniformNoise>) {
            for (auto& x : row) x = mode.lo + (mode.hi - mode.lo) * rng.uniform();
          } else if constexpr (std::is_same_v<T, OffMaskActivation>) {
            const auto c = static_cast<std::size_t>(rng.next() % C);
            ds.ood_source_class[i] = static_cast<ClassIndex>(c);
            for (std::size_t l = 0; l < L; ++l) {
              row[l] = spec.cluster_std * gauss.next();
              if (l < c * B || l >= (c + 1) * B) row[l] += mode.strength;
            }
          } else {
            const auto c = static_cast<std::size_t>(rng.next() % C);
            ds.ood_source_class[i] = static_cast<ClassIndex>(c);
            for (auto& x : row) x = (1.0 - mode.alpha) * spec.cluster_sep * rng.uniform();
            row[c * B] += mode.alpha * spec.cluster_sep;
          }
        },
        spec.ood);
  }
  return ds;
}

}  // namespace oodgate
