#include "cfrl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace cfrl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json number_or_null(const std::optional<double>& x) {
  if (!x) return nullptr;
  if (std::isinf(*x)) return *x > 0 ? "inf" : "-inf";
  return *x;
}

}  // namespace

std::size_t MethodEval::positives() const noexcept {
  std::size_t n = 0;
  for (const auto& b : best) n += b.has_value() ? 1U : 0U;
  return n;
}

double rho_plus(const MethodEval& eval, std::size_t n_test) {
  if (n_test == 0) throw std::domain_error("rho_plus: empty test set");
  return static_cast<double>(eval.positives()) / static_cast<double>(n_test);
}

AdvantageRatios advantage_ratios(double return_observed, const CfResult& p, const CfResult& b) {
  if (!(p.return_cf > return_observed) || !(b.return_cf > return_observed)) {
    throw std::domain_error("advantage test needs positive counterfactuals from both methods");
  }
  AdvantageRatios r;
  const double gain_b = b.return_cf - return_observed;
  r.phi_g = std::abs(gain_b) < kRatioGuard ? kInf : (p.return_cf - return_observed) / gain_b;
  r.phi_d = b.distance < kRatioGuard ? kInf : p.distance / b.distance;
  if (std::isinf(r.phi_g) && std::isinf(r.phi_d)) {
    r.advantageous = false;
  } else {
    r.advantageous = r.phi_g > r.phi_d;
  }
  return r;
}

bool advantage_test(double return_observed, const CfResult& p, const CfResult& b) {
  return advantage_ratios(return_observed, p, b).advantageous;
}

bool advantage_test(const Trajectory& observed, const CfResult& p, const CfResult& b) {
  return advantage_test(cumulative_return(observed), p, b);
}

AdvantageResult rho_adv(const MethodEval& proposed, const MethodEval& baseline) {
  if (proposed.size() != baseline.size()) throw std::domain_error("rho_adv: evaluations cover different test sets");
  AdvantageResult out;
  for (std::size_t i = 0; i < proposed.size(); ++i) {
    if (!proposed.ids.empty() && !baseline.ids.empty() && proposed.ids[i] != baseline.ids[i]) {
      throw std::domain_error("rho_adv: trajectory ids differ at index " + std::to_string(i));
    }
    DetailRow row;
    row.id = i < proposed.ids.size() ? proposed.ids[i] : std::to_string(i);
    row.return_observed = i < proposed.observed_returns.size() ? proposed.observed_returns[i] : 0.0;
    row.flagged = i < proposed.flagged.size() && proposed.flagged[i];
    const auto& p = proposed.best[i];
    const auto& b = baseline.best[i];
    if (p) {
      row.proposed_return = p->return_cf;
      row.proposed_distance = p->distance;
      row.return_observed = p->return_observed;
    }
    if (b) {
      row.baseline_return = b->return_cf;
      row.baseline_distance = b->distance;
      row.return_observed = b->return_observed;
    }
    if (p && b) {
      const auto r = advantage_ratios(p->return_observed, *p, *b);
      row.phi_g = r.phi_g;
      row.phi_d = r.phi_d;
      row.advantageous = r.advantageous;
      ++out.counts.both;
      if (r.advantageous) ++out.counts.both_advantageous;
    } else if (p) {
      row.advantageous = true;
      ++out.counts.proposed_only;
    } else if (b) {
      row.advantageous = false;
      ++out.counts.baseline_only;
    } else {
      ++out.counts.neither;
    }
    out.rows.push_back(std::move(row));
  }
  if (out.counts.denominator() > 0) {
    out.rho_adv = static_cast<double>(out.counts.numerator()) / static_cast<double>(out.counts.denominator());
  }
  return out;
}

MetricsReport build_report(const MethodEval& proposed, const MethodEval& baseline) {
  MetricsReport r;
  r.n_test = proposed.size();
  r.positives_proposed = proposed.positives();
  r.positives_baseline = baseline.positives();
  r.rho_plus_proposed = rho_plus(proposed, r.n_test);
  r.rho_plus_baseline = rho_plus(baseline, r.n_test);
  r.advantage = rho_adv(proposed, baseline);
  if (r.positives_proposed > 0) {
    double d = 0.0;
    double g = 0.0;
    for (const auto& b : proposed.best) {
      if (!b) continue;
      d += b->distance;
      g += b->return_cf - b->return_observed;
    }
    r.mean_distance = d / static_cast<double>(r.positives_proposed);
    r.mean_return_gain = g / static_cast<double>(r.positives_proposed);
  }
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  const auto& c = advantage.counts;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : advantage.rows) {
    rows.push_back({{"id", row.id},
                    {"return_observed", row.return_observed},
                    {"proposed_return", number_or_null(row.proposed_return)},
                    {"proposed_distance", number_or_null(row.proposed_distance)},
                    {"baseline_return", number_or_null(row.baseline_return)},
                    {"baseline_distance", number_or_null(row.baseline_distance)},
                    {"phi_G", number_or_null(row.phi_g)},
                    {"phi_D", number_or_null(row.phi_d)},
                    {"advantageous", row.advantageous ? nlohmann::json(*row.advantageous) : nlohmann::json(nullptr)},
                    {"initial_state_constrained", row.flagged}});
  }
  return {{"n_test", n_test},
          {"rho_plus", {{"proposed", rho_plus_proposed}, {"baseline", rho_plus_baseline}}},
          {"positives", {{"proposed", positives_proposed}, {"baseline", positives_baseline}}},
          {"rho_adv", number_or_null(advantage.rho_adv)},
          {"rho_adv_counts",
           {{"numerator", c.numerator()},
            {"denominator", c.denominator()},
            {"both_positive", c.both},
            {"both_positive_advantageous", c.both_advantageous},
            {"proposed_only", c.proposed_only},
            {"baseline_only", c.baseline_only},
            {"neither", c.neither}}},
          {"mean_distance", number_or_null(mean_distance)},
          {"mean_return_gain", number_or_null(mean_return_gain)},
          {"trajectories", std::move(rows)}};
}

CurveRow curve_row(std::size_t interaction_steps, const MetricsReport& report) {
  return {interaction_steps, report.rho_plus_proposed, report.advantage.rho_adv, report.mean_distance,
          report.mean_return_gain};
}

std::string curve_csv_header() { return "interaction_steps,rho_plus,rho_adv,mean_distance,mean_return_gain"; }

std::string curve_csv_line(const CurveRow& row) {
  return std::to_string(row.interaction_steps) + "," + format_number(row.rho_plus) + "," +
         format_optional(row.rho_adv) + "," + format_optional(row.mean_distance) + "," +
         format_optional(row.mean_return_gain);
}

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::string format_optional(const std::optional<double>& x) { return x ? format_number(*x) : "null"; }

}  // namespace cfrl
