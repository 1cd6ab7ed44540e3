#include "sca/batch.hpp"

#include "sca/engine.hpp"
#include "sca/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace sca::batch {

std::vector<RunResult> run_batch(const std::vector<scenario::ScenarioConfig>& configs, int repetitions,
                                 const std::vector<std::uint64_t>& seeds, const BatchOptions& options) {
  std::vector<RunResult> results;
  for (const auto& cfg : configs) {
    const std::size_t reps = seeds.empty() ? static_cast<std::size_t>(std::max(repetitions, 0)) : seeds.size();
    for (std::size_t r = 0; r < reps; ++r) {
      RunResult res;
      res.config = cfg;
      res.config.seed = seeds.empty() ? cfg.seed + r : seeds[r];
      results.push_back(std::move(res));
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < results.size(); i = next++) {
      auto& res = results[i];
      try {
        RunLog log = engine::run_scenario(res.config);
        if (log.faulted) res.error = log.fault;
        try {
          res.report = metrics::compute_report(log);
        } catch (const std::exception& e) {
          res.error = res.error.empty() ? e.what() : res.error + "; " + e.what();
        }
        if (options.sink) options.sink(res, log);
        if (options.keep_logs) res.log = std::move(log);
      } catch (const std::exception& e) {
        res.error = e.what();
      }
    }
  };
  unsigned threads = options.threads > 0 ? static_cast<unsigned>(options.threads) : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(results.size(), 1))));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return results;
}

Stat aggregate(const std::vector<double>& values) {
  Stat s;
  s.n = values.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.se = s.sd / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

const SummaryRow* SummaryTable::row(const std::string& label) const {
  for (const auto& r : rows)
    if (r.label == label) return &r;
  return nullptr;
}

namespace {

nlohmann::json stat_json(const Stat& s) { return {{"n", s.n}, {"mean", s.mean}, {"sd", s.sd}, {"se", s.se}}; }

nlohmann::json opt_stat(const std::optional<Stat>& s) { return s ? stat_json(*s) : nlohmann::json(nullptr); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string cell(const Stat& s, double scale = 1.0, int precision = 4) {
  return fmt(s.mean * scale, precision) + " ± " + fmt(s.se * scale, precision);
}

std::string render(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  auto display_len = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char ch : s)
      if ((ch & 0xC0) != 0x80) ++n;
    return n;
  };
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], display_len(r[i]));
  }
  std::ostringstream os;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t i = 0; i < rows[k].size(); ++i) {
      os << rows[k][i];
      if (i + 1 < rows[k].size()) os << std::string(width[i] - display_len(rows[k][i]) + 2, ' ');
    }
    os << "\n";
    if (k == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total > 2 ? total - 2 : total, '-') << "\n";
    }
  }
  return os.str();
}

}  // namespace

nlohmann::json SummaryTable::to_json() const {
  nlohmann::json out = {{"family", family}, {"scenario", scenario}, {"rows", nlohmann::json::array()}};
  for (const auto& r : rows) {
    nlohmann::json j = {{"label", r.label},
                        {"runs", r.runs},
                        {"faulted", r.faulted},
                        {"e_rms", stat_json(r.e_rms)},
                        {"cfm", stat_json(r.cfm)},
                        {"min_cfm", stat_json(r.min_cfm)},
                        {"rho", opt_stat(r.rho)},
                        {"rho_normalized", opt_stat(r.rho_normalized)},
                        {"gcd", opt_stat(r.gcd)},
                        {"trigger_delay", opt_stat(r.trigger_delay)},
                        {"t_rt", opt_stat(r.t_rt)}};
    j["rmse_minus"] = nlohmann::json::array();
    for (const auto& s : r.rmse_minus) j["rmse_minus"].push_back(stat_json(s));
    j["gamma"] = nlohmann::json::array();
    for (const auto& s : r.gamma) j["gamma"].push_back(stat_json(s));
    out["rows"].push_back(j);
  }
  return out;
}

std::string SummaryTable::text() const {
  if (rows.empty()) return "";
  std::vector<std::vector<std::string>> cells;
  if (family == "sca1") {
    cells.push_back({"Case", "n", "e_rms (x1e4)", "rho (x1e4)", "CfM", "trigger - t_a (s)", "t_RT (s)"});
    for (const auto& r : rows)
      cells.push_back({r.label, std::to_string(r.runs), cell(r.e_rms, 1e4, 1), r.rho ? cell(*r.rho, 1e4, 1) : "-",
                       cell(r.cfm, 1.0, 3), r.trigger_delay ? cell(*r.trigger_delay, 1.0, 2) : "-",
                       r.t_rt ? cell(*r.t_rt, 1.0, 2) : "-"});
  } else {
    std::vector<std::string> head = {"Method", "n"};
    const std::size_t k = rows.front().gamma.size();
    for (std::size_t i = 0; i < k; ++i) head.push_back("RMSE-[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < k; ++i) head.push_back("gamma[" + std::to_string(i) + "]");
    head.insert(head.end(), {"CfM", "min CfM", "GCD (x1e4)"});
    cells.push_back(head);
    for (const auto& r : rows) {
      std::vector<std::string> line = {r.label, std::to_string(r.runs)};
      for (std::size_t i = 0; i < k; ++i) line.push_back(i < r.rmse_minus.size() ? cell(r.rmse_minus[i], 1.0, 3) : "-");
      for (std::size_t i = 0; i < k; ++i) line.push_back(i < r.gamma.size() ? cell(r.gamma[i], 1.0, 3) : "-");
      line.push_back(cell(r.cfm, 1.0, 3));
      line.push_back(cell(r.min_cfm, 1.0, 3));
      line.push_back(r.gcd ? cell(*r.gcd, 1e4, 1) : "-");
      cells.push_back(line);
    }
  }
  return (scenario.empty() ? family : scenario) + "\n" + render(cells);
}

SummaryTable summarize(const std::vector<metrics::MetricsReport>& reports) {
  SummaryTable table;
  if (reports.empty()) return table;
  table.family = reports.front().family;
  table.scenario = reports.front().scenario;
  for (const auto& r : reports) {
    if (r.family != table.family)
      throw ContractViolation("cannot summarize mixed families (" + table.family + ", " + r.family + ")");
    if (r.scenario != table.scenario)
      throw ContractViolation("cannot summarize mixed scenarios (" + table.scenario + ", " + r.scenario + ")");
  }
  std::vector<std::string> order = table.family == "sca1"
                                       ? std::vector<std::string>{"auto", "late", "exact", "cfm_based"}
                                       : std::vector<std::string>{"sap", "sup", "adaptive", "mu_mod", "optimal"};
  std::vector<std::string> labels;
  for (const auto& l : order)
    if (std::any_of(reports.begin(), reports.end(), [&](const auto& r) { return r.label == l; })) labels.push_back(l);
  for (const auto& r : reports)
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);

  for (const auto& label : labels) {
    SummaryRow row;
    row.label = label;
    std::vector<double> e, cfm, minc, rho, rhon, gcd, trig, trt;
    std::vector<std::vector<double>> rmse, gam;
    for (const auto& r : reports) {
      if (r.label != label) continue;
      ++row.runs;
      if (r.faulted) ++row.faulted;
      e.push_back(r.e_rms);
      cfm.push_back(r.cfm);
      minc.push_back(r.min_cfm);
      if (r.rho) {
        rho.push_back(r.rho->verbatim);
        rhon.push_back(r.rho->normalized);
      }
      if (r.gcd) gcd.push_back(*r.gcd);
      if (r.trigger_time) trig.push_back(*r.trigger_time - r.anomaly_time);
      if (r.reaction) trt.push_back(r.reaction->t_rt);
      if (rmse.size() < r.gamma.size()) {
        rmse.resize(r.gamma.size());
        gam.resize(r.gamma.size());
      }
      for (std::size_t i = 0; i < r.gamma.size(); ++i) {
        rmse[i].push_back(r.gamma[i].rmse_minus);
        gam[i].push_back(r.gamma[i].gamma);
      }
    }
    row.e_rms = aggregate(e);
    row.cfm = aggregate(cfm);
    row.min_cfm = aggregate(minc);
    if (!rho.empty()) {
      row.rho = aggregate(rho);
      row.rho_normalized = aggregate(rhon);
    }
    if (!gcd.empty()) row.gcd = aggregate(gcd);
    if (!trig.empty()) row.trigger_delay = aggregate(trig);
    if (!trt.empty()) row.t_rt = aggregate(trt);
    for (std::size_t i = 0; i < rmse.size(); ++i) {
      row.rmse_minus.push_back(aggregate(rmse[i]));
      row.gamma.push_back(aggregate(gam[i]));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace sca::batch
