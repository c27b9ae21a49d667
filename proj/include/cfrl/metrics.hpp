#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfrl/cf_result.hpp"

namespace cfrl {

/// Best positive counterfactual (or none) per test trajectory, for one
/// method. Index i always refers to test trajectory i.
struct MethodEval {
  std::vector<std::string> ids;
  std::vector<double> observed_returns;
  std::vector<std::optional<CfResult>> best;
  std::vector<bool> flagged;

  std::size_t size() const noexcept { return best.size(); }
  std::size_t positives() const noexcept;
};

/// Fraction of the n_test trajectories with a positive counterfactual.
double rho_plus(const MethodEval& eval, std::size_t n_test);

/// Ratios below this magnitude are treated as zero denominators.
inline constexpr double kRatioGuard = 1e-9;

struct AdvantageRatios {
  double phi_g = 0.0;  // may be +inf
  double phi_d = 0.0;  // may be +inf
  bool advantageous = false;
};

/// phi_G = (G_p - G_obs) / (G_b - G_obs), phi_D = D_p / D_b; advantageous iff
/// phi_G > phi_D. A denominator under kRatioGuard makes its ratio +inf.
/// Throws std::domain_error unless both results are positive.
AdvantageRatios advantage_ratios(double return_observed, const CfResult& proposed, const CfResult& baseline);
bool advantage_test(double return_observed, const CfResult& proposed, const CfResult& baseline);
bool advantage_test(const Trajectory& observed, const CfResult& proposed, const CfResult& baseline);

struct AdvantageCounts {
  std::size_t both = 0;
  std::size_t both_advantageous = 0;
  std::size_t proposed_only = 0;
  std::size_t baseline_only = 0;
  std::size_t neither = 0;

  std::size_t numerator() const noexcept { return both_advantageous + proposed_only; }
  std::size_t denominator() const noexcept { return both + proposed_only + baseline_only; }
};

struct DetailRow {
  std::string id;
  double return_observed = 0.0;
  std::optional<double> proposed_return, proposed_distance;
  std::optional<double> baseline_return, baseline_distance;
  std::optional<double> phi_g, phi_d;
  std::optional<bool> advantageous;
  bool flagged = false;
};

struct AdvantageResult {
  std::optional<double> rho_adv;  // nullopt when no method has a positive
  AdvantageCounts counts;
  std::vector<DetailRow> rows;
};

/// Denominator: trajectories where at least one method has a positive.
/// Both positive: counts if advantage_test holds. Proposed only: counts.
/// Baseline only: does not count.
AdvantageResult rho_adv(const MethodEval& proposed, const MethodEval& baseline);

struct MetricsReport {
  std::size_t n_test = 0;
  std::size_t positives_proposed = 0;
  std::size_t positives_baseline = 0;
  double rho_plus_proposed = 0.0;
  double rho_plus_baseline = 0.0;
  AdvantageResult advantage;
  std::optional<double> mean_distance;     // proposed best positives
  std::optional<double> mean_return_gain;  // proposed best positives

  nlohmann::json to_json() const;
};

MetricsReport build_report(const MethodEval& proposed, const MethodEval& baseline);

struct CurveRow {
  std::size_t interaction_steps = 0;
  double rho_plus = 0.0;
  std::optional<double> rho_adv;
  std::optional<double> mean_distance;
  std::optional<double> mean_return_gain;
};

CurveRow curve_row(std::size_t interaction_steps, const MetricsReport& report);
std::string curve_csv_header();
std::string curve_csv_line(const CurveRow& row);

/// Fixed formatting used by every CSV writer ("null" for missing values).
std::string format_number(double x);
std::string format_optional(const std::optional<double>& x);

}  // namespace cfrl
