#pragma once

#include "sca/linalg.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sca {

inline constexpr int kRunLogSchemaVersion = 1;

/// One committed engine step. Vectors that do not apply to an architecture
/// are left empty (e.g. x_m for the fixed-gain autopilot).
struct StepRecord {
  long step = 0;
  double t = 0.0;
  Vec x;
  Vec x_m;
  Vec y_m;  // commanded outputs of the reference model, C x_m
  Vec r0;
  Vec y;
  Vec u_ad;
  Vec u_c;
  Vec u;
  Vec c;  // per-actuator c_i = 1 − |u_i|/u_max_i
  Vec e;  // r0 − y
  double F0 = 0.0;
  int K_t = 0;
  double mu = 0.0;
  Vec lambda_hat;
  std::string active;

  bool operator==(const StepRecord& other) const;
};

/// Discrete occurrences: anomalies, alerts, take-overs, pilot inputs, faults.
struct EventRecord {
  long step = 0;  // step boundary at which the event took effect
  double t = 0.0;
  std::string type;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const EventRecord& other) const;
};

struct RunLog {
  int schema_version = kRunLogSchemaVersion;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  double dt = 0.01;
  nlohmann::json config;
  std::vector<StepRecord> steps;
  std::vector<EventRecord> events;
  bool faulted = false;
  std::string fault;

  std::vector<double> times() const;
  /// Channel `index` of a per-step vector field, e.g. series(&StepRecord::e, 0).
  std::vector<double> series(Vec StepRecord::*field, int index) const;
  std::vector<const EventRecord*> events_of(const std::string& type) const;

  bool operator==(const RunLog& other) const;
};

nlohmann::json to_json(const StepRecord& rec);
StepRecord step_from_json(const nlohmann::json& j);

/// Newline-delimited records: header, steps and events in step order, footer.
void write_runlog(std::ostream& os, const RunLog& log);
RunLog read_runlog(std::istream& is);

void save_runlog(const std::string& path, const RunLog& log);
RunLog load_runlog(const std::string& path);

/// Writes `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string format_hash(std::uint64_t hash);
std::uint64_t parse_hash(const std::string& text);

}  // namespace sca
