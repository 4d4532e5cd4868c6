#pragma once

#include <cmath>
#include <random>
#include <sstream>

#include "support/oracle.hpp"
#include "support/random_dataset.hpp"

namespace parityd::testing {

inline bool close(std::optional<double> a, std::optional<double> b, double tol) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::fabs(*a - *b) <= tol;
}

/// Empty when the engine and the oracle agree on every count (exactly) and on
/// every rate and ratio (within tol); otherwise a description of the first
/// mismatch.
inline std::string compare_with_oracle(const Dataset& ds, const AuditConfig& cfg, double tol = 1e-12) {
  const auto engine = run_audit(ds, cfg);
  const auto dec = oracle::decisions(ds, cfg.threshold);
  std::size_t k = 0;
  for (int d : dec) k += d;
  std::ostringstream why;
  if (engine.num_positive != k) {
    why << "num_positive " << engine.num_positive << " vs " << k;
    return why.str();
  }
  for (const auto& a : engine.attributes) {
    const auto& attr = a.crosstab.attribute;
    const auto groups = oracle::counts(ds, dec, attr);
    if (groups != a.crosstab.groups) return "counts differ for " + attr;
    AuditConfig resolved = cfg;
    resolved.parity.metrics = engine.config.parity.metrics;
    const auto rows = oracle::rows(groups, k, resolved, attr);
    if (rows.size() != a.rows.size()) return "row count differs for " + attr;
    // Engine rows are group-major in crosstab order, metric order within.
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& o = rows[i];
      const auto& e = a.rows[i];
      const bool same = o.group == e.group_value && o.metric == e.metric && o.ref_group == e.ref_group &&
                        close(o.rate, e.group_rate, tol) && close(o.ref_rate, e.ref_rate, tol) &&
                        o.ratio.kind == e.ratio.kind && o.verdict == e.verdict &&
                        (!o.ratio.is_defined() || std::fabs(o.ratio.value - e.ratio.value) <= tol);
      if (!same) {
        why << attr << "/" << o.group << "/" << to_string(o.metric) << ": oracle ref " << o.ref_group << " ratio "
            << o.ratio.value << " " << to_string(o.verdict) << ", engine ref " << e.ref_group << " ratio "
            << e.ratio.value << " " << to_string(e.verdict);
        return why.str();
      }
    }
  }
  return {};
}

inline AuditConfig random_config(std::mt19937_64& rng, const Dataset& ds, int iter) {
  AuditConfig cfg;
  cfg.threshold = random_policy(rng, ds.row_count, iter);
  cfg.reference = random_reference(rng, ds, iter / 4);
  cfg.parity.metrics = random_metrics(rng);
  const double taus[] = {0.5, 0.8, 1.0, 0.3, 0.95};
  cfg.parity.tau = taus[std::uniform_int_distribution<int>(0, 4)(rng)];
  cfg.parity.indeterminate_policy = static_cast<IndeterminatePolicy>(std::uniform_int_distribution<int>(0, 2)(rng));
  return cfg;
}

}  // namespace parityd::testing
