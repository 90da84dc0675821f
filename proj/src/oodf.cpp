#include "oodgate/oodf.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "oodgate/error.hpp"

namespace oodgate {

namespace {

constexpr std::array<char, 4> kMagic{'O', 'O', 'D', 'F'};
constexpr std::uint32_t kFlagMask = 1u;
constexpr std::uint32_t kFlagReact = 2u;
constexpr std::uint32_t kFlagSmooth = 4u;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(double v) {
    const auto f = static_cast<float>(v);
    if (std::isfinite(v) && !std::isfinite(f)) {
      throw Error(ErrorCode::InvalidContainer, "value " + std::to_string(v) + " overflows float32");
    }
    u32(std::bit_cast<std::uint32_t>(f));
  }
  void f32s(const std::vector<double>& v) {
    for (double x : v) f32(x);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : p_(data), end_(data + size) {}

  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }
  bool done() const { return p_ == end_; }

  void need(std::uint64_t n) const {
    if (n > remaining()) throw Error(ErrorCode::Corrupt, "truncated payload");
  }
  const char* take(std::size_t n) {
    need(n);
    const char* at = p_;
    p_ += n;
    return at;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(*take(1)); }
  std::uint32_t u32() {
    const auto* b = reinterpret_cast<const unsigned char*>(take(4));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* b = reinterpret_cast<const unsigned char*>(take(8));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::vector<double> f32s(std::uint64_t n) {
    if (n > remaining() / 4) throw Error(ErrorCode::Corrupt, "truncated float array");
    std::vector<double> v(n);
    for (auto& x : v) {
      x = f32();
      if (!std::isfinite(x)) throw Error(ErrorCode::Corrupt, "non-finite value in float array");
    }
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    const char* at = take(n);
    return std::string(at, n);
  }

 private:
  const char* p_;
  const char* end_;
};

std::string dims(std::uint64_t a, std::uint64_t b) { return std::to_string(a) + "x" + std::to_string(b); }

[[noreturn]] void mismatch(const std::string& what) { throw Error(ErrorCode::InvalidContainer, what); }

// Builds a Matrix from decoded values; decode errors map to Corrupt.
Matrix matrix_from(std::uint64_t rows, std::uint64_t cols, std::vector<double> v) {
  return Matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), std::move(v));
}

std::string encode_head(const ClassifierHead& h) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(h.feature_dim()));
  w.u32(static_cast<std::uint32_t>(h.num_classes()));
  w.f32s(h.weights.values());
  w.f32s(h.bias);
  return w.take();
}

ClassifierHead decode_head(Reader& r) {
  const std::uint32_t L = r.u32();
  const std::uint32_t C = r.u32();
  ClassifierHead h;
  h.weights = matrix_from(L, C, r.f32s(std::uint64_t{L} * C));
  h.bias = r.f32s(C);
  return h;
}

std::string encode_features(const FeatureSet& f) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(f.rows.cols()));
  w.u32(f.labels ? 1u : 0u);
  w.u64(f.rows.rows());
  w.f32s(f.rows.values());
  if (f.labels) {
    for (ClassIndex y : *f.labels) w.u32(y);
  }
  return w.take();
}

FeatureSet decode_features(Reader& r) {
  const std::uint32_t L = r.u32();
  const std::uint32_t has_labels = r.u32();
  if (has_labels > 1) throw Error(ErrorCode::Corrupt, "bad label flag in FEAT section");
  const std::uint64_t N = r.u64();
  if (L != 0 && N > r.remaining() / (4ull * L)) throw Error(ErrorCode::Corrupt, "truncated FEAT rows");
  FeatureSet f;
  f.rows = matrix_from(N, L, r.f32s(N * L));
  if (has_labels) {
    r.need(4 * N);
    std::vector<ClassIndex> labels(N);
    for (auto& y : labels) y = r.u32();
    f.labels = std::move(labels);
  }
  return f;
}

std::string encode_detector(const DetectorSection& d) {
  const auto L = d.masks.feature_dim();
  const auto C = d.masks.num_classes();
  Writer w;
  w.u32(static_cast<std::uint32_t>(L));
  w.u32(static_cast<std::uint32_t>(C));
  w.u32(static_cast<std::uint32_t>(d.masks.k()));
  const auto& cfg = d.config;
  w.u32((cfg.enable_mask ? kFlagMask : 0u) | (cfg.enable_react ? kFlagReact : 0u) |
        (cfg.enable_smoothing ? kFlagSmooth : 0u));
  w.f64(cfg.masking_percentile);
  if (const auto* e = std::get_if<ReactExplicit>(&cfg.react)) {
    w.u32(0);
    w.f64(e->lambda);
  } else {
    w.u32(1);
    w.f64(std::get<ReactPercentile>(cfg.react).q);
  }
  w.u32(static_cast<std::uint32_t>(cfg.method.kind));
  w.f64(cfg.method.odin_temperature);
  w.f64(d.lambda);
  for (auto b : d.masks.bits()) w.u8(b);
  w.f32s(d.prototypes.vectors.values());
  for (auto n : d.prototypes.counts) w.u64(n);
  w.u32(d.gaussian ? 1u : 0u);
  if (d.gaussian) {
    w.f32s(d.gaussian->means.values());
    w.f32s(d.gaussian->precision.values());
  }
  return w.take();
}

DetectorSection decode_detector(Reader& r) {
  const std::uint32_t L = r.u32();
  const std::uint32_t C = r.u32();
  const std::uint32_t k = r.u32();
  const std::uint32_t flags = r.u32();
  if (flags & ~(kFlagMask | kFlagReact | kFlagSmooth)) throw Error(ErrorCode::Corrupt, "unknown stage flags");
  DetectorSection d;
  auto& cfg = d.config;
  cfg.enable_mask = flags & kFlagMask;
  cfg.enable_react = flags & kFlagReact;
  cfg.enable_smoothing = flags & kFlagSmooth;
  cfg.masking_percentile = r.f64();
  const std::uint32_t react_mode = r.u32();
  const double react_param = r.f64();
  if (react_mode == 0) {
    cfg.react = ReactExplicit{react_param};
  } else if (react_mode == 1) {
    cfg.react = ReactPercentile{react_param};
  } else {
    throw Error(ErrorCode::Corrupt, "unknown react mode");
  }
  const std::uint32_t kind = r.u32();
  if (kind > static_cast<std::uint32_t>(ScoreKind::EnergyReAct)) throw Error(ErrorCode::Corrupt, "unknown score kind");
  cfg.method.kind = static_cast<ScoreKind>(kind);
  cfg.method.odin_temperature = r.f64();
  d.lambda = r.f64();
  const std::uint64_t cells = std::uint64_t{L} * C;
  r.need(cells);
  std::vector<std::uint8_t> bits(cells);
  for (auto& b : bits) b = r.u8();
  try {
    d.masks = MaskMatrix(L, C, k, std::move(bits));
  } catch (const Error& e) {
    throw Error(ErrorCode::Corrupt, std::string("mask: ") + e.what());
  }
  d.prototypes.vectors = matrix_from(C, L, r.f32s(cells));
  r.need(8ull * C);
  d.prototypes.counts.resize(C);
  for (auto& n : d.prototypes.counts) n = r.u64();
  const std::uint32_t has_gaussian = r.u32();
  if (has_gaussian > 1) throw Error(ErrorCode::Corrupt, "bad gaussian flag");
  if (has_gaussian) {
    GaussianModel g;
    g.means = matrix_from(C, L, r.f32s(cells));
    g.precision = matrix_from(L, L, r.f32s(std::uint64_t{L} * L));
    d.gaussian = std::move(g);
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Corrupt, std::string("detector config: ") + e.what());
  }
  if (!(d.lambda >= 0.0)) throw Error(ErrorCode::Corrupt, "negative lambda");
  return d;
}

std::string encode_meta(const std::map<std::string, std::string>& meta) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  return w.take();
}

std::map<std::string, std::string> decode_meta(Reader& r) {
  std::map<std::string, std::string> meta;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    if (!meta.emplace(std::move(k), std::move(v)).second) throw Error(ErrorCode::Corrupt, "duplicate META key");
  }
  return meta;
}

}  // namespace

void OodfContainer::validate() const {
  if (head) {
    if (head->feature_dim() != L || head->num_classes() != C) {
      mismatch("HEAD is " + dims(head->feature_dim(), head->num_classes()) + ", container declares " + dims(L, C));
    }
    if (head->bias.size() != C) mismatch("HEAD bias length differs from C");
  }
  if (features) {
    if (features->rows.cols() != L) {
      mismatch("FEAT rows have width " + std::to_string(features->rows.cols()) + ", container declares L=" +
               std::to_string(L));
    }
    if (features->labels) {
      if (features->labels->size() != features->rows.rows()) mismatch("FEAT label count differs from row count");
      for (ClassIndex y : *features->labels) {
        if (y >= C) mismatch("FEAT label " + std::to_string(y) + " >= C=" + std::to_string(C));
      }
    }
  }
  if (detector) {
    const auto& d = *detector;
    if (d.masks.feature_dim() != L || d.masks.num_classes() != C) {
      mismatch("DETR mask is " + dims(d.masks.feature_dim(), d.masks.num_classes()) + ", container declares " +
               dims(L, C));
    }
    if (d.prototypes.vectors.rows() != C || d.prototypes.vectors.cols() != L || d.prototypes.counts.size() != C) {
      mismatch("DETR prototypes do not match " + dims(L, C));
    }
    if (d.gaussian && (d.gaussian->means.rows() != C || d.gaussian->means.cols() != L ||
                       d.gaussian->precision.rows() != L || d.gaussian->precision.cols() != L)) {
      mismatch("DETR gaussian does not match " + dims(L, C));
    }
  }
}

OodfContainer make_detector_container(const FittedDetector& det) {
  det.validate();
  OodfContainer c;
  c.L = static_cast<std::uint32_t>(det.feature_dim());
  c.C = static_cast<std::uint32_t>(det.num_classes());
  c.head = det.head;
  c.detector = DetectorSection{det.masks, det.prototypes, det.lambda, det.config, det.gaussian};
  return c;
}

FittedDetector detector_from_container(const OodfContainer& c) {
  if (!c.head || !c.detector) throw Error(ErrorCode::InvalidContainer, "container lacks HEAD or DETR section");
  FittedDetector det;
  det.head = *c.head;
  det.masks = c.detector->masks;
  det.prototypes = c.detector->prototypes;
  det.lambda = c.detector->lambda;
  det.config = c.detector->config;
  det.gaussian = c.detector->gaussian;
  try {
    det.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidContainer, e.what());
  }
  return det;
}

std::string encode_oodf(const OodfContainer& container) {
  container.validate();
  std::vector<std::pair<std::array<char, 4>, std::string>> sections;
  if (container.head) sections.push_back({{'H', 'E', 'A', 'D'}, encode_head(*container.head)});
  if (container.features) sections.push_back({{'F', 'E', 'A', 'T'}, encode_features(*container.features)});
  if (container.detector) sections.push_back({{'D', 'E', 'T', 'R'}, encode_detector(*container.detector)});
  if (!container.meta.empty()) sections.push_back({{'M', 'E', 'T', 'A'}, encode_meta(container.meta)});

  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(container.version);
  w.u32(container.L);
  w.u32(container.C);
  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [tag, payload] : sections) {
    w.bytes(tag.data(), tag.size());
    w.u64(payload.size());
    w.bytes(payload.data(), payload.size());
  }
  return w.take();
}

OodfContainer decode_oodf(const std::string& bytes) {
  if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorCode::NotOodf, "missing OODF magic");
  }
  Reader r(bytes.data() + kMagic.size(), bytes.size() - kMagic.size());
  OodfContainer c;
  c.version = r.u32();
  if (c.version != kOodfVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "OODF version " + std::to_string(c.version));
  }
  c.L = r.u32();
  c.C = r.u32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t s = 0; s < count; ++s) {
    const std::string tag(r.take(4), 4);
    const std::uint64_t len = r.u64();
    r.need(len);
    Reader payload(r.take(static_cast<std::size_t>(len)), static_cast<std::size_t>(len));
    const auto once = [&](bool present) {
      if (present) throw Error(ErrorCode::InvalidContainer, "duplicate " + tag + " section");
    };
    try {
      if (tag == "HEAD") {
        once(c.head.has_value());
        c.head = decode_head(payload);
      } else if (tag == "FEAT") {
        once(c.features.has_value());
        c.features = decode_features(payload);
      } else if (tag == "DETR") {
        once(c.detector.has_value());
        c.detector = decode_detector(payload);
      } else if (tag == "META") {
        once(!c.meta.empty());
        c.meta = decode_meta(payload);
      } else {
        continue;
      }
    } catch (const Error& e) {
      // Bad values inside a section (non-finite entries, bad sizes) are corruption.
      if (e.code() == ErrorCode::InvalidInput || e.code() == ErrorCode::InvalidDimension) {
        throw Error(ErrorCode::Corrupt, tag + ": " + e.what());
      }
      throw;
    }
    if (!payload.done()) throw Error(ErrorCode::Corrupt, tag + " payload has trailing bytes");
  }
  if (!r.done()) throw Error(ErrorCode::Corrupt, "trailing bytes after last section");
  c.validate();
  return c;
}

std::uint64_t write_oodf(const OodfContainer& container, std::ostream& sink) {
  const std::string bytes = encode_oodf(container);
  sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error(ErrorCode::InvalidState, "write to OODF sink failed");
  return bytes.size();
}

OodfContainer read_oodf(std::istream& source) {
  std::string bytes((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
  return decode_oodf(bytes);
}

void save_oodf(const OodfContainer& container, const std::filesystem::path& path) {
  const std::string bytes = encode_oodf(container);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidState, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::InvalidState, "write failed: " + path.string());
}

OodfContainer load_oodf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open " + path.string());
  return read_oodf(in);
}

}  // namespace oodgate
