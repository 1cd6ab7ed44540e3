#pragma once

#include "sca/engine.hpp"
#include "sca/metrics.hpp"
#include "sca/scenario.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace sca::session {

enum class Status { idle, running, paused, faulted, complete };
std::string to_string(Status s);

/// Telemetry is decimated from the 100 Hz engine to 20 frames/s.
inline constexpr int kFrameDecimation = 5;
inline constexpr std::size_t kSubscriberCapacity = 8192;

enum class CommandKind { take_over, stick, mu_input, severity_estimate, pause, resume };
std::string to_string(CommandKind kind);
CommandKind command_kind_from_string(const std::string& name);

struct Command {
  CommandKind kind = CommandKind::stick;
  double value = 0.0;
  std::string label;

  static Command from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Ack {
  bool accepted = false;
  std::optional<long> applied_at_step;
  double received_at = 0.0;
  std::string message;

  nlohmann::json to_json() const;
};

/// Ordered message stream for one subscriber. Messages are JSON objects with
/// "type" (Frame, Event, Done) and "payload". Overflowing the bounded buffer
/// drops the subscriber; the engine never waits on it.
class Subscription {
 public:
  explicit Subscription(long first_seq, std::size_t capacity = kSubscriberCapacity)
      : first_seq_(first_seq), capacity_(capacity) {}

  /// Next message, or nullopt on timeout or once closed and drained.
  std::optional<nlohmann::json> pop(std::chrono::milliseconds timeout);
  bool closed() const;
  bool dropped() const;
  /// Sequence number of the first frame this subscriber will see; frames
  /// before it were committed before the subscription (the gap).
  long first_seq() const { return first_seq_; }
  void close();

  bool push(nlohmann::json msg);  // false when the subscriber was dropped

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<nlohmann::json> queue_;
  long first_seq_;
  std::size_t capacity_;
  bool closed_ = false;
  bool dropped_ = false;
};

class Session {
 public:
  /// pacing: wall-clock seconds per simulated second (0 = as fast as possible).
  /// Finished runs are persisted to persist_dir when it is non-empty.
  Session(std::string id, scenario::ScenarioConfig cfg, double pacing, std::string persist_dir = {});
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  void start();
  /// Stops the loop; an unfinished run is closed as interrupted.
  void stop();
  /// Blocks until the run completes, faults or is stopped.
  void wait();
  bool wait_for(std::chrono::milliseconds timeout);

  Ack ingest(const Command& cmd);
  std::shared_ptr<Subscription> subscribe();
  /// The human channel went away: the run pauses and the log is flagged.
  void client_disconnected();

  const std::string& id() const { return id_; }
  const scenario::ScenarioConfig& config() const { return cfg_; }
  double pacing() const { return pacing_; }
  Status status() const;
  long frames_emitted() const;
  nlohmann::json summary() const;

  /// Snapshot of the log so far.
  RunLog log_snapshot() const;
  /// Writes <dir>/<id>.ndjson and <dir>/<id>.report.json. Requires the session
  /// to be complete, faulted or stopped.
  std::pair<std::string, std::string> persist(const std::string& dir) const;
  std::optional<metrics::MetricsReport> report() const;

 private:
  void loop();
  void publish_frame(const StepRecord& rec);
  void publish(const nlohmann::json& msg);
  void finish(Status status);

  std::pair<std::string, std::string> persist_locked(const std::string& dir) const;

  std::string id_;
  scenario::ScenarioConfig cfg_;
  double pacing_;
  std::string persist_dir_;
  std::unique_ptr<pilot::PilotAgent> agent_;
  pilot::HumanAdapter* human_ = nullptr;
  std::unique_ptr<engine::Engine> engine_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  Status status_ = Status::idle;
  bool stop_requested_ = false;
  bool interrupted_ = false;
  std::thread runner_;

  std::vector<std::shared_ptr<Subscription>> subscribers_;
  long next_seq_ = 0;
  long last_frame_step_ = -1;
  std::size_t events_published_ = 0;
  double gcd_num_ = 0.0;
  double gcd_den_ = 0.0;
};

class SessionManager {
 public:
  /// Sessions are persisted to output_dir when they finish (if non-empty).
  explicit SessionManager(std::string output_dir = {}) : output_dir_(std::move(output_dir)) {}
  ~SessionManager();

  /// Registers a session without starting it (subscribe first, then start()).
  std::shared_ptr<Session> create_session(const scenario::ScenarioConfig& cfg, double pacing);
  std::shared_ptr<Session> start_session(const scenario::ScenarioConfig& cfg, double pacing);
  std::shared_ptr<Session> get(const std::string& id) const;
  std::vector<std::shared_ptr<Session>> list() const;
  Ack ingest(const std::string& id, const Command& cmd);
  std::shared_ptr<Subscription> subscribe(const std::string& id);

  /// Stops every session and persists it.
  void shutdown();
  const std::string& output_dir() const { return output_dir_; }
  /// Pacing for sessions whose request does not set one.
  double default_pacing() const { return default_pacing_; }
  void set_default_pacing(double pacing) { default_pacing_ = pacing; }

 private:
  std::string output_dir_;
  double default_pacing_ = 1.0;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  long counter_ = 0;
};

}  // namespace sca::session
