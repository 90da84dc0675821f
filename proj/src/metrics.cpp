#include "oodgate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "oodgate/error.hpp"
#include "oodgate/numcore.hpp"

namespace oodgate {

namespace {

void require_scores(std::span<const double> id, std::span<const double> ood) {
  if (id.empty() || ood.empty()) throw Error(ErrorCode::InvalidInput, "ID and OOD score sets must be non-empty");
  require_finite(id, "ID scores");
  require_finite(ood, "OOD scores");
}

}  // namespace

Decision detect(double score, double gamma) noexcept { return score >= gamma ? Decision::ID : Decision::OOD; }

FprAtTpr fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr_target) {
  require_scores(id_scores, ood_scores);
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) throw Error(ErrorCode::InvalidParameter, "TPR target must be in (0, 1]");
  const std::size_t n = id_scores.size();
  const auto tpr_ok = [&](std::size_t m) { return static_cast<double>(m) / static_cast<double>(n) >= tpr_target; };
  // Smallest m with m / n >= target, robust to rounding in target * n.
  auto m = static_cast<std::size_t>(std::ceil(tpr_target * static_cast<double>(n)));
  m = std::clamp<std::size_t>(m, 1, n);
  while (m > 1 && tpr_ok(m - 1)) --m;
  while (m < n && !tpr_ok(m)) ++m;

  std::vector<double> id(id_scores.begin(), id_scores.end());
  std::nth_element(id.begin(), id.begin() + static_cast<std::ptrdiff_t>(m - 1), id.end(), std::greater<>());
  FprAtTpr out;
  out.gamma = id[m - 1];
  for (double o : ood_scores) out.ood_accepted += (o >= out.gamma) ? 1 : 0;
  out.fpr = static_cast<double>(out.ood_accepted) / static_cast<double>(ood_scores.size());
  return out;
}

Auroc auroc_detail(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require_scores(id_scores, ood_scores);
  struct Item {
    double v;
    bool is_id;
  };
  std::vector<Item> all;
  all.reserve(id_scores.size() + ood_scores.size());
  for (double v : id_scores) all.push_back({v, true});
  for (double v : ood_scores) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });

  std::uint64_t twice_u = 0;
  std::uint64_t ood_below = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    for (; j < all.size() && all[j].v == all[i].v; ++j) (all[j].is_id ? a : b) += 1;
    twice_u += 2 * a * ood_below + a * b;
    ood_below += b;
    i = j;
  }
  const double denom = 2.0 * static_cast<double>(id_scores.size()) * static_cast<double>(ood_scores.size());
  return {static_cast<double>(twice_u) / denom, twice_u};
}

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  return auroc_detail(id_scores, ood_scores).value;
}

EvalReport evaluate(std::span<const double> id_scores, std::span<const double> ood_scores) {
  const FprAtTpr f = fpr_at_tpr(id_scores, ood_scores, 0.95);
  const Auroc a = auroc_detail(id_scores, ood_scores);
  return EvalReport{f.fpr, a.value, f.gamma, id_scores.size(), ood_scores.size(), f.ood_accepted, a.twice_u};
}

Histogram histogram(std::span<const double> scores, std::size_t n_bins,
                    std::optional<std::pair<double, double>> range) {
  if (n_bins < 1) throw Error(ErrorCode::InvalidParameter, "histogram needs at least one bin");
  require_finite(scores, "histogram input");
  double lo = 0.0;
  double hi = 0.0;
  if (range) {
    std::tie(lo, hi) = *range;
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw Error(ErrorCode::InvalidParameter, "histogram range needs finite lo < hi");
    }
  } else {
    if (scores.empty()) throw Error(ErrorCode::InvalidInput, "histogram of empty data without a range");
    const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
    lo = *mn;
    hi = *mx;
    if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  Histogram h;
  h.bin_edges.resize(n_bins + 1);
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t i = 0; i <= n_bins; ++i) h.bin_edges[i] = lo + width * static_cast<double>(i);
  h.bin_edges.back() = hi;
  h.counts.assign(n_bins, 0);
  for (double x : scores) {
    const double t = (x - lo) / (hi - lo) * static_cast<double>(n_bins);
    // Bins are closed on the right: (e_i, e_{i+1}], and the first bin also takes lo.
    std::size_t bin = 0;
    if (t >= static_cast<double>(n_bins)) {
      bin = n_bins - 1;
    } else if (t > 1.0) {
      bin = static_cast<std::size_t>(std::ceil(t)) - 1;
    }
    ++h.counts[bin];
  }
  return h;
}

std::string format_real(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

void write_report(std::ostream& os, const EvalReport& r) {
  os << "fpr95\t" << format_real(r.fpr95) << '\n'
     << "auroc\t" << format_real(r.auroc) << '\n'
     << "gamma\t" << format_real(r.gamma) << '\n'
     << "n_id\t" << r.n_id << '\n'
     << "n_ood\t" << r.n_ood << '\n'
     << "ood_accepted\t" << r.ood_accepted << '\n'
     << "auroc_twice_u\t" << r.auroc_twice_u << '\n';
}

void write_histogram(std::ostream& os, const Histogram& h, const std::string& label) {
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    if (!label.empty()) os << label << '\t';
    os << format_real(h.bin_edges[i]) << '\t' << format_real(h.bin_edges[i + 1]) << '\t' << h.counts[i] << '\n';
  }
}

}  // namespace oodgate
