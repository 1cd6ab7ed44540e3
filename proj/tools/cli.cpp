#include "cli.hpp"

#include "sca/batch.hpp"
#include "sca/engine.hpp"
#include "sca/errors.hpp"
#include "sca/metrics.hpp"
#include "sca/protocol.hpp"
#include "sca/runlog.hpp"
#include "sca/scenario.hpp"
#include "sca/session.hpp"

#include <CLI11.hpp>

#include <glob.h>
#include <signal.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace sca::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Usage or configuration problem detected by the CLI itself.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_output_dir() {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? env : "runs";
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// A path to a JSON config file, or a built-in scenario name.
scenario::ScenarioConfig resolve_scenario(const std::string& target) {
  if (ends_with(target, ".json") || fs::is_regular_file(target)) return scenario::load_config(target);
  return scenario::named_scenario(target);
}

std::string artifact_stem(const scenario::ScenarioConfig& cfg) { return cfg.name + "-s" + std::to_string(cfg.seed); }

struct RunArgs {
  std::string target;
  std::optional<std::string> pilot;
  std::optional<std::string> alert;
  std::optional<std::string> autopilot;
  std::optional<std::uint64_t> seed;
  std::string out;
  int repeat = 1;
  int threads = 0;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  auto cfg = resolve_scenario(a.target);
  scenario::RunOptions opts;
  opts.pilot = a.pilot;
  opts.alert = a.alert;
  opts.autopilot = a.autopilot;
  opts.seed = a.seed;
  scenario::apply_run_options(cfg, opts);
  if (a.repeat < 1) throw UsageError("--repeat must be at least 1");

  const std::string dir = a.out.empty() ? default_output_dir() : a.out;
  fs::create_directories(dir);

  batch::BatchOptions bo;
  bo.threads = a.threads;
  std::mutex io_mu;
  bo.sink = [&](const batch::RunResult& r, const RunLog& log) {
    const std::string stem = (fs::path(dir) / artifact_stem(r.config)).string();
    save_runlog(stem + ".ndjson", log);
    if (r.report) write_file_atomic(stem + ".report.json", r.report->to_json().dump(2) + "\n");
    std::lock_guard<std::mutex> lock(io_mu);
    out << "wrote " << stem << ".ndjson\n";
  };
  const auto results = batch::run_batch({cfg}, a.repeat, {}, bo);

  std::vector<metrics::MetricsReport> reports;
  int code = kExitOk;
  for (const auto& r : results) {
    if (!r.error.empty()) {
      err << "run " << artifact_stem(r.config) << " failed: " << r.error << "\n";
      code = kExitFault;
    }
    if (r.report) {
      if (r.report->faulted) code = kExitFault;
      reports.push_back(*r.report);
    }
  }
  if (!reports.empty()) out << batch::summarize(reports).text();
  return code;
}

std::vector<std::string> expand_inputs(const std::vector<std::string>& patterns) {
  std::vector<std::string> files;
  for (const auto& p : patterns) {
    if (fs::is_directory(p)) {
      for (const auto& entry : fs::directory_iterator(p)) {
        const auto name = entry.path().string();
        if (ends_with(name, ".ndjson") || ends_with(name, ".report.json")) files.push_back(name);
      }
      continue;
    }
    glob_t g{};
    if (::glob(p.c_str(), 0, nullptr, &g) == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
    ::globfree(&g);
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  return files;
}

void write_series(const std::string& dir, const std::string& stem, const RunLog& log) {
  std::ostringstream os;
  os << std::setprecision(10);
  const auto& first = log.steps.empty() ? StepRecord{} : log.steps.front();
  os << "t";
  for (int i = 0; i < first.r0.size(); ++i) os << ",r0_" << i;
  for (int i = 0; i < first.y.size(); ++i) os << ",y_" << i;
  for (int i = 0; i < first.y_m.size(); ++i) os << ",y_m_" << i;
  for (int i = 0; i < first.e.size(); ++i) os << ",e_" << i;
  os << ",min_c,mu\n";
  for (const auto& s : log.steps) {
    os << s.t;
    for (const Vec* v : {&s.r0, &s.y, &s.y_m, &s.e})
      for (int i = 0; i < v->size(); ++i) os << "," << (*v)(i);
    os << "," << (s.c.size() ? s.c.minCoeff() : 1.0) << "," << s.mu << "\n";
  }
  write_file_atomic((fs::path(dir) / (stem + ".series.csv")).string(), os.str());
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string family;
  std::string series_dir;
  std::string json_out;
};

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  if (!a.family.empty() && a.family != "sca1" && a.family != "sca2") throw UsageError("--family must be sca1 or sca2");
  const auto files = expand_inputs(a.inputs);
  if (!a.series_dir.empty()) fs::create_directories(a.series_dir);

  std::vector<metrics::MetricsReport> reports;
  std::set<std::string> seen_logs;
  for (const auto& f : files) {
    if (ends_with(f, ".ndjson")) {
      RunLog log;
      try {
        log = load_runlog(f);
      } catch (const std::exception& e) {
        throw UsageError("cannot read log '" + f + "': " + e.what());
      }
      reports.push_back(metrics::compute_report(log));
      const auto stem = fs::path(f).stem().string();
      seen_logs.insert(stem);
      if (!a.series_dir.empty()) write_series(a.series_dir, stem, log);
    }
  }
  // stand-alone reports whose log was not part of the input
  for (const auto& f : files) {
    if (!ends_with(f, ".report.json")) continue;
    const auto name = fs::path(f).filename().string();
    if (seen_logs.count(name.substr(0, name.size() - std::string(".report.json").size()))) continue;
    std::ifstream in(f);
    try {
      reports.push_back(metrics::MetricsReport::from_json(json::parse(in)));
    } catch (const std::exception& e) {
      throw UsageError("cannot read report '" + f + "': " + e.what());
    }
  }

  std::set<std::string> families;
  for (const auto& r : reports) families.insert(r.family);
  if (families.size() > 1) throw UsageError("logs mix the sca1 and sca2 families");
  if (!a.family.empty() && !families.empty() && *families.begin() != a.family)
    throw UsageError("logs belong to family " + *families.begin() + ", not " + a.family);

  std::map<std::string, std::vector<metrics::MetricsReport>> by_scenario;
  for (const auto& r : reports) by_scenario[r.scenario].push_back(r);
  json tables = json::array();
  for (const auto& [name, group] : by_scenario) {
    const auto table = batch::summarize(group);
    out << "== " << name << " (" << table.family << ") ==\n" << table.text() << "\n";
    tables.push_back(table.to_json());
  }
  if (!a.json_out.empty()) write_file_atomic(a.json_out, json{{"tables", tables}}.dump(2) + "\n");
  (void)err;
  return kExitOk;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 7700;
  int http_port = -1;
  double pacing = 1.0;
  std::string out;
  double duration = 0.0;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  if (!(a.pacing >= 0.0)) throw UsageError("--pacing must be non-negative");
  const std::string dir = a.out.empty() ? default_output_dir() : a.out;
  fs::create_directories(dir);

  // handled synchronously below; blocked before any thread starts so every
  // worker inherits the mask
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  session::SessionManager manager(dir);
  manager.set_default_pacing(a.pacing);
  protocol::DuplexServer duplex(manager);
  protocol::HttpApi http(manager);
  try {
    duplex.listen(a.host, a.port);
    http.listen(a.host, a.http_port < 0 ? (a.port == 0 ? 0 : a.port + 1) : a.http_port);
  } catch (const std::exception& e) {
    err << "serve: " << e.what() << "\n";
    duplex.stop();
    pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
    return kExitFault;
  }
  out << "duplex " << a.host << ":" << duplex.port() << " http " << a.host << ":" << http.port() << " pacing "
      << a.pacing << " output " << dir << std::endl;

  const auto start = std::chrono::steady_clock::now();
  while (true) {
    timespec tick{0, 200'000'000};
    const int sig = sigtimedwait(&signals, nullptr, &tick);
    if (sig == SIGINT || sig == SIGTERM) break;
    if (a.duration > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= a.duration)
      break;
  }
  out << "shutting down" << std::endl;
  duplex.stop();
  http.stop();
  manager.shutdown();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  return kExitOk;
}

int cmd_replay(const std::string& path, std::ostream& out) {
  RunLog log;
  try {
    log = load_runlog(path);
  } catch (const std::exception& e) {
    throw UsageError("cannot read log '" + path + "': " + e.what());
  }
  const auto verdict = engine::replay(log);
  out << verdict.message << "\n";
  return verdict.pass ? kExitOk : kExitFault;
}

struct SweepArgs {
  std::string out;
  int mu_max = 20;
  int threads = 0;
};

/// Smallest summed γ over the training scenarios whose CfM stays positive;
/// the largest minimum CfM when no μ keeps it positive.
int cmd_mu_sweep(const SweepArgs& a, std::ostream& out) {
  if (a.mu_max < 1) throw UsageError("--mu-max must be at least 1");
  const std::string path = a.out.empty() ? (fs::path(SCA_DATA_DIR) / "mu_table.json").string() : a.out;
  const std::vector<std::pair<std::string, std::string>> severities = {
      {"Low", "sca2-train-low"}, {"Middle", "sca2-train-mid"}, {"High", "sca2-train-high"}};

  std::vector<scenario::ScenarioConfig> configs;
  for (const auto& [label, name] : severities) {
    for (int mu = 1; mu <= a.mu_max; ++mu) {
      auto cfg = scenario::named_scenario(name);
      scenario::set_sca2_variant(cfg, "mu_mod");
      cfg.autopilot.mu = mu;
      configs.push_back(cfg);
    }
  }
  batch::BatchOptions bo;
  bo.threads = a.threads;
  const auto results = batch::run_batch(configs, 1, {}, bo);

  json table = json::object();
  json detail = json::object();
  out << std::left << std::setw(8) << "severity" << std::setw(5) << "mu" << std::setw(12) << "min CfM" << "sum gamma\n";
  for (std::size_t s = 0; s < severities.size(); ++s) {
    int best = -1;
    double best_score = 0.0;
    int fallback = 1;
    double fallback_cfm = -1e300;
    json rows = json::array();
    for (int mu = 1; mu <= a.mu_max; ++mu) {
      const auto& r = results[s * static_cast<std::size_t>(a.mu_max) + static_cast<std::size_t>(mu - 1)];
      if (!r.report) continue;
      double score = 0.0;
      for (const auto& g : r.report->gamma) score += g.gamma;
      const double min_cfm = r.report->min_cfm;
      rows.push_back({{"mu", mu}, {"min_cfm", min_cfm}, {"gamma", score}});
      out << std::setw(8) << severities[s].first << std::setw(5) << mu << std::setw(12) << min_cfm << score << "\n";
      if (min_cfm > 0.0 && (best < 0 || score < best_score)) {
        best = mu;
        best_score = score;
      }
      if (min_cfm > fallback_cfm) {
        fallback_cfm = min_cfm;
        fallback = mu;
      }
    }
    table[severities[s].first] = best > 0 ? best : fallback;
    detail[severities[s].first] = rows;
  }
  write_file_atomic(path, json{{"mu", table}, {"sweep", detail}}.dump(2) + "\n");
  out << "mu table " << table.dump() << " written to " << path << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shared-control flight simulator: runs, reports, replay and live sessions", "sca"};
  app.require_subcommand(1);

  RunArgs run_args;
  std::string pilot, alert, autopilot;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "Run a scenario and write its log and metrics report");
  run->add_option("scenario", run_args.target, "Scenario name or config JSON path")->required();
  auto* pilot_opt = run->add_option("--pilot", pilot, "synthetic|human|none (sca1), sap|sup|human|none (sca2)");
  auto* alert_opt = run->add_option("--alert", alert, "none|late|exact|cfm_based (sca1)");
  auto* ap_opt = run->add_option("--autopilot", autopilot, "adaptive|mu_mod|optimal (sca2 baselines)");
  auto* seed_opt = run->add_option("--seed", seed, "Random seed");
  run->add_option("--out", run_args.out, std::string("Output directory (default $") + kOutputDirEnv + " or ./runs)");
  run->add_option("--repeat", run_args.repeat, "Runs with consecutive seeds")->check(CLI::PositiveNumber);
  run->add_option("--threads", run_args.threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Comparison tables from run logs or reports");
  report->add_option("inputs", report_args.inputs, "Log files, directories or glob patterns");
  report->add_option("--family", report_args.family, "Expected family (sca1 or sca2)");
  report->add_option("--series", report_args.series_dir, "Directory for per-run CSV data series");
  report->add_option("--json", report_args.json_out, "Write the tables as JSON");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Host live sessions over the duplex and HTTP interfaces");
  serve->add_option("--host", serve_args.host, "Listen address");
  serve->add_option("--port", serve_args.port, "Duplex port (0: any free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--http-port", serve_args.http_port, "HTTP port (default: duplex port + 1)")->check(CLI::Range(0, 65535));
  serve->add_option("--pacing", serve_args.pacing, "Wall seconds per simulated second (0: unpaced)");
  serve->add_option("--out", serve_args.out, "Directory for persisted sessions");
  serve->add_option("--duration", serve_args.duration, "Stop after this many seconds (0: until interrupted)");

  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "Re-simulate a log and compare it bit for bit");
  replay->add_option("log", replay_path, "Run log (.ndjson)")->required();

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("mu-sweep", "Derive the per-severity mu table from the training scenarios");
  sweep->add_option("--out", sweep_args.out, "Output path (default data/mu_table.json)");
  sweep->add_option("--mu-max", sweep_args.mu_max, "Largest mu tried");
  sweep->add_option("--threads", sweep_args.threads, "Worker threads (0: all cores)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*run) {
      if (*pilot_opt) run_args.pilot = pilot;
      if (*alert_opt) run_args.alert = alert;
      if (*ap_opt) run_args.autopilot = autopilot;
      if (*seed_opt) run_args.seed = seed;
      return cmd_run(run_args, out, err);
    }
    if (*report) return cmd_report(report_args, out, err);
    if (*serve) return cmd_serve(serve_args, out, err);
    if (*replay) return cmd_replay(replay_path, out);
    if (*sweep) return cmd_mu_sweep(sweep_args, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "fault: " << e.what() << "\n";
    return kExitFault;
  }
  return kExitUsage;
}

}  // namespace sca::cli
