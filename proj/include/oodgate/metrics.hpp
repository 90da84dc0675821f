#pragma once

// OOD evaluation. Higher scores mean "more in-distribution"; a sample is
// accepted as ID when score >= gamma.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace oodgate {

enum class Decision { ID, OOD };

Decision detect(double score, double gamma) noexcept;

struct FprAtTpr {
  double fpr = 0.0;
  double gamma = 0.0;
  std::uint64_t ood_accepted = 0;  // OOD samples with score >= gamma
};

/// gamma is the ceil(target * N_id)-th largest ID score, so TPR >= target.
FprAtTpr fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                    double tpr_target = 0.95);

struct Auroc {
  double value = 0.0;
  std::uint64_t twice_u = 0;  // 2 * (#id>ood + 0.5 * #ties), exact
};

/// Mann-Whitney statistic computed from a single sort; ties count half.
Auroc auroc_detail(std::span<const double> id_scores, std::span<const double> ood_scores);
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

struct EvalReport {
  double fpr95 = 0.0;
  double auroc = 0.0;
  double gamma = 0.0;
  std::uint64_t n_id = 0;
  std::uint64_t n_ood = 0;
  std::uint64_t ood_accepted = 0;
  std::uint64_t auroc_twice_u = 0;
};

EvalReport evaluate(std::span<const double> id_scores, std::span<const double> ood_scores);

struct Histogram {
  std::vector<double> bin_edges;
  std::vector<std::uint64_t> counts;
};

/// Equal-width bins closed on the right, (e_i, e_i+1], with lo itself counted in
/// the first bin. Values outside an
/// explicit range are counted in the nearest edge bin so totals are conserved.
Histogram histogram(std::span<const double> scores, std::size_t n_bins,
                    std::optional<std::pair<double, double>> range = std::nullopt);

/// Fixed 6-decimal rendering used by every TSV output.
std::string format_real(double x);

void write_report(std::ostream& os, const EvalReport& r);
void write_histogram(std::ostream& os, const Histogram& h, const std::string& label = {});

}  // namespace oodgate
