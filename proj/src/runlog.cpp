#include "sca/runlog.hpp"

#include "sca/errors.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sca {

namespace {

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec json_vec(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

bool same(const Vec& a, const Vec& b) { return a.size() == b.size() && (a.array() == b.array()).all(); }

}  // namespace

bool StepRecord::operator==(const StepRecord& o) const {
  return step == o.step && t == o.t && same(x, o.x) && same(x_m, o.x_m) && same(y_m, o.y_m) && same(r0, o.r0) &&
         same(y, o.y) && same(u_ad, o.u_ad) && same(u_c, o.u_c) && same(u, o.u) && same(c, o.c) && same(e, o.e) &&
         F0 == o.F0 && K_t == o.K_t && mu == o.mu && same(lambda_hat, o.lambda_hat) && active == o.active;
}

bool EventRecord::operator==(const EventRecord& o) const {
  return step == o.step && t == o.t && type == o.type && payload == o.payload;
}

bool RunLog::operator==(const RunLog& o) const {
  return schema_version == o.schema_version && config_hash == o.config_hash && seed == o.seed && dt == o.dt &&
         config == o.config && steps == o.steps && events == o.events && faulted == o.faulted && fault == o.fault;
}

std::vector<double> RunLog::times() const {
  std::vector<double> t;
  t.reserve(steps.size());
  for (const auto& s : steps) t.push_back(s.t);
  return t;
}

std::vector<double> RunLog::series(Vec StepRecord::*field, int index) const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) {
    const Vec& v = s.*field;
    if (index < 0 || index >= v.size()) throw MetricError("run log: channel " + std::to_string(index) + " missing");
    out.push_back(v[index]);
  }
  return out;
}

std::vector<const EventRecord*> RunLog::events_of(const std::string& type) const {
  std::vector<const EventRecord*> out;
  for (const auto& e : events)
    if (e.type == type) out.push_back(&e);
  return out;
}

nlohmann::json to_json(const StepRecord& r) {
  return {{"k", "step"},  {"n", r.step},       {"t", r.t},       {"x", vec_json(r.x)},
          {"xm", vec_json(r.x_m)},             {"ym", vec_json(r.y_m)},
          {"r0", vec_json(r.r0)},              {"y", vec_json(r.y)},
          {"uad", vec_json(r.u_ad)},           {"uc", vec_json(r.u_c)},
          {"u", vec_json(r.u)},                {"c", vec_json(r.c)},
          {"e", vec_json(r.e)},                {"F0", r.F0},
          {"Kt", r.K_t},                       {"mu", r.mu},
          {"lam", vec_json(r.lambda_hat)},     {"active", r.active}};
}

StepRecord step_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.step = j.at("n").get<long>();
  r.t = j.at("t").get<double>();
  r.x = json_vec(j.at("x"));
  r.x_m = json_vec(j.at("xm"));
  r.y_m = json_vec(j.at("ym"));
  r.r0 = json_vec(j.at("r0"));
  r.y = json_vec(j.at("y"));
  r.u_ad = json_vec(j.at("uad"));
  r.u_c = json_vec(j.at("uc"));
  r.u = json_vec(j.at("u"));
  r.c = json_vec(j.at("c"));
  r.e = json_vec(j.at("e"));
  r.F0 = j.at("F0").get<double>();
  r.K_t = j.at("Kt").get<int>();
  r.mu = j.at("mu").get<double>();
  r.lambda_hat = json_vec(j.at("lam"));
  r.active = j.at("active").get<std::string>();
  return r;
}

std::string format_hash(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::uint64_t parse_hash(const std::string& text) {
  if (text.size() != 16) throw ConfigError("malformed config hash '" + text + "'");
  return std::stoull(text, nullptr, 16);
}

void write_runlog(std::ostream& os, const RunLog& log) {
  nlohmann::json header = {{"k", "header"},
                           {"schema_version", log.schema_version},
                           {"config_hash", format_hash(log.config_hash)},
                           {"seed", log.seed},
                           {"dt", log.dt},
                           {"config", log.config}};
  os << header.dump() << '\n';
  std::size_t ev = 0;
  for (const auto& s : log.steps) {
    while (ev < log.events.size() && log.events[ev].step <= s.step) {
      const auto& e = log.events[ev++];
      os << nlohmann::json{{"k", "event"}, {"n", e.step}, {"t", e.t}, {"type", e.type}, {"payload", e.payload}}.dump()
         << '\n';
    }
    os << to_json(s).dump() << '\n';
  }
  for (; ev < log.events.size(); ++ev) {
    const auto& e = log.events[ev];
    os << nlohmann::json{{"k", "event"}, {"n", e.step}, {"t", e.t}, {"type", e.type}, {"payload", e.payload}}.dump()
       << '\n';
  }
  os << nlohmann::json{{"k", "footer"}, {"faulted", log.faulted}, {"fault", log.fault}, {"steps", log.steps.size()}}
            .dump()
     << '\n';
}

RunLog read_runlog(std::istream& is) {
  RunLog log;
  std::string line;
  long lineno = 0;
  bool have_header = false, have_footer = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      const std::string kind = j.at("k").get<std::string>();
      if (kind == "header") {
        log.schema_version = j.at("schema_version").get<int>();
        if (log.schema_version != kRunLogSchemaVersion)
          throw ConfigError("unsupported run log schema version " + std::to_string(log.schema_version));
        log.config_hash = parse_hash(j.at("config_hash").get<std::string>());
        log.seed = j.at("seed").get<std::uint64_t>();
        log.dt = j.at("dt").get<double>();
        log.config = j.at("config");
        have_header = true;
      } else if (kind == "step") {
        log.steps.push_back(step_from_json(j));
      } else if (kind == "event") {
        log.events.push_back({j.at("n").get<long>(), j.at("t").get<double>(), j.at("type").get<std::string>(),
                              j.at("payload")});
      } else if (kind == "footer") {
        log.faulted = j.at("faulted").get<bool>();
        log.fault = j.at("fault").get<std::string>();
        have_footer = true;
      } else {
        throw ConfigError("unknown record kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("run log line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (!have_header) throw ConfigError("run log has no header record");
  if (!have_footer) {
    // A log cut short by a crash is kept, but flagged.
    log.faulted = true;
    if (log.fault.empty()) log.fault = "truncated log";
  }
  return log;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot move " + tmp.string() + " to " + path + ": " + ec.message());
  }
}

void save_runlog(const std::string& path, const RunLog& log) {
  std::ostringstream os;
  write_runlog(os, log);
  write_file_atomic(path, os.str());
}

RunLog load_runlog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run log " + path);
  return read_runlog(in);
}

}  // namespace sca
