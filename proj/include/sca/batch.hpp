#pragma once

#include "sca/metrics.hpp"
#include "sca/runlog.hpp"
#include "sca/scenario.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sca::batch {

struct RunResult {
  scenario::ScenarioConfig config;
  std::optional<RunLog> log;  // kept only when requested
  std::optional<metrics::MetricsReport> report;
  std::string error;  // set when the run could not complete or be scored
};

struct BatchOptions {
  int threads = 0;  // 0: hardware concurrency
  bool keep_logs = false;
  /// Called from worker threads once per finished run (for persistence).
  std::function<void(const RunResult&, const RunLog&)> sink;
};

/// Every config × seed. With an empty seed list each config runs
/// `repetitions` times with seeds config.seed, config.seed + 1, …
/// Results are ordered by (config, repetition) regardless of thread count.
std::vector<RunResult> run_batch(const std::vector<scenario::ScenarioConfig>& configs, int repetitions,
                                 const std::vector<std::uint64_t>& seeds, const BatchOptions& options = {});

/// Mean, sample standard deviation and standard error σ/√n.
struct Stat {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
};

Stat aggregate(const std::vector<double>& values);

struct SummaryRow {
  std::string label;
  std::size_t runs = 0;
  std::size_t faulted = 0;
  Stat e_rms;
  Stat cfm;
  Stat min_cfm;
  std::optional<Stat> rho;             // verbatim
  std::optional<Stat> rho_normalized;
  std::optional<Stat> gcd;
  std::vector<Stat> rmse_minus;        // per output
  std::vector<Stat> gamma;             // per output
  std::optional<Stat> trigger_delay;   // trigger time − t_a
  std::optional<Stat> t_rt;
};

struct SummaryTable {
  std::string family;
  std::string scenario;
  std::vector<SummaryRow> rows;

  const SummaryRow* row(const std::string& label) const;
  nlohmann::json to_json() const;
  /// Aligned plain-text table.
  std::string text() const;
};

/// Groups reports by label. Rows follow the fixed order auto/late/exact/
/// cfm_based (sca1) or sap/sup/adaptive/mu_mod/optimal (sca2); other labels
/// follow in first-seen order. Throws ContractViolation on mixed families or
/// scenarios.
SummaryTable summarize(const std::vector<metrics::MetricsReport>& reports);

}  // namespace sca::batch
