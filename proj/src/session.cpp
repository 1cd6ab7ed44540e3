#include "sca/session.hpp"

#include "sca/errors.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace sca::session {

using nlohmann::json;

std::string to_string(Status s) {
  switch (s) {
    case Status::idle:
      return "idle";
    case Status::running:
      return "running";
    case Status::paused:
      return "paused";
    case Status::faulted:
      return "faulted";
    case Status::complete:
      return "complete";
  }
  return "idle";
}

std::string to_string(CommandKind kind) {
  switch (kind) {
    case CommandKind::take_over:
      return "TakeOver";
    case CommandKind::stick:
      return "Stick";
    case CommandKind::mu_input:
      return "MuInput";
    case CommandKind::severity_estimate:
      return "SeverityEstimate";
    case CommandKind::pause:
      return "Pause";
    case CommandKind::resume:
      return "Resume";
  }
  return "Stick";
}

CommandKind command_kind_from_string(const std::string& name) {
  if (name == "TakeOver" || name == "take_over") return CommandKind::take_over;
  if (name == "Stick" || name == "stick") return CommandKind::stick;
  if (name == "MuInput" || name == "mu_input") return CommandKind::mu_input;
  if (name == "SeverityEstimate" || name == "severity_estimate") return CommandKind::severity_estimate;
  if (name == "Pause" || name == "pause") return CommandKind::pause;
  if (name == "Resume" || name == "resume") return CommandKind::resume;
  throw ContractViolation("unknown command '" + name + "'");
}

Command Command::from_json(const json& j) {
  Command c;
  try {
    c.kind = command_kind_from_string(j.at("command").get<std::string>());
    if (j.contains("value") && !j.at("value").is_null()) c.value = j.at("value").get<double>();
    c.label = j.value("label", std::string());
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("malformed command: ") + e.what());
  }
  return c;
}

json Command::to_json() const { return {{"command", to_string(kind)}, {"value", value}, {"label", label}}; }

json Ack::to_json() const {
  return {{"accepted", accepted},
          {"applied_at_step", applied_at_step ? json(*applied_at_step) : json(nullptr)},
          {"received_at", received_at},
          {"message", message}};
}

std::optional<json> Subscription::pop(std::chrono::milliseconds timeout) {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  json msg = std::move(queue_.front());
  queue_.pop_front();
  return msg;
}

bool Subscription::closed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return closed_;
}

bool Subscription::dropped() const {
  std::lock_guard<std::mutex> lock(mu_);
  return dropped_;
}

void Subscription::close() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscription::push(json msg) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (closed_) return false;
    if (queue_.size() >= capacity_) {
      dropped_ = true;
      closed_ = true;
      queue_.clear();
    } else {
      queue_.push_back(std::move(msg));
    }
  }
  cv_.notify_all();
  return !dropped();
}

Session::Session(std::string id, scenario::ScenarioConfig cfg, double pacing, std::string persist_dir)
    : id_(std::move(id)), cfg_(std::move(cfg)), pacing_(pacing), persist_dir_(std::move(persist_dir)) {
  if (!(pacing_ >= 0.0)) throw ConfigError("pacing must be non-negative");
  cfg_.validate();
  agent_ = engine::make_pilot(cfg_);
  human_ = dynamic_cast<pilot::HumanAdapter*>(agent_.get());
  engine_ = std::make_unique<engine::Engine>(cfg_, *agent_);
}

Session::~Session() {
  stop();
  if (runner_.joinable()) runner_.join();
}

void Session::start() {
  std::lock_guard<std::mutex> lock(mu_);
  if (status_ != Status::idle) throw ContractViolation("session " + id_ + " already started");
  status_ = Status::running;
  runner_ = std::thread([this] { loop(); });
}

void Session::stop() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (status_ == Status::complete || status_ == Status::faulted) return;
    stop_requested_ = true;
    if (status_ == Status::idle) {
      interrupted_ = true;
      status_ = Status::faulted;
    }
  }
  cv_.notify_all();
  if (runner_.joinable() && runner_.get_id() != std::this_thread::get_id()) runner_.join();
}

void Session::wait() {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait(lock, [&] { return status_ == Status::complete || status_ == Status::faulted; });
}

bool Session::wait_for(std::chrono::milliseconds timeout) {
  std::unique_lock<std::mutex> lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return status_ == Status::complete || status_ == Status::faulted; });
}

void Session::publish(const json& msg) {
  for (auto it = subscribers_.begin(); it != subscribers_.end();) {
    if (!(*it)->push(msg))
      it = subscribers_.erase(it);
    else
      ++it;
  }
}

void Session::publish_frame(const StepRecord& rec) {
  const auto& log = engine_->log();
  for (; events_published_ < log.events.size(); ++events_published_) {
    const auto& ev = log.events[events_published_];
    publish({{"type", "Event"},
             {"payload", {{"step", ev.step}, {"t", ev.t}, {"type", ev.type}, {"payload", ev.payload}}}});
  }
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json frame = {{"seq", next_seq_++},
                {"t", rec.t},
                {"step", rec.step},
                {"r0", vec(rec.r0)},
                {"y", vec(rec.y)},
                {"y_m", vec(rec.y_m)},
                {"min_c", rec.c.size() ? rec.c.minCoeff() : 1.0},
                {"gcd", gcd_den_ > 0.0 ? json(std::sqrt(gcd_num_ / gcd_den_)) : json(nullptr)},
                {"active", rec.active},
                {"mu", rec.mu},
                {"K_t", rec.K_t},
                {"F0", rec.F0},
                {"delta", cfg_.metrics_delta}};
  last_frame_step_ = rec.step;
  publish({{"type", "Frame"}, {"payload", frame}});
}

void Session::finish(Status status) {
  status_ = status;
  if (interrupted_ || stop_requested_) engine_->note("interrupted", {{"reason", "session stopped"}});
  if (!engine_->log().steps.empty() && engine_->log().steps.back().step != last_frame_step_)
    publish_frame(engine_->log().steps.back());
  publish({{"type", "Done"},
           {"payload",
            {{"status", to_string(status)}, {"steps", engine_->log().steps.size()}, {"faulted", engine_->faulted()}}}});
  for (auto& s : subscribers_) s->close();
  subscribers_.clear();
  if (!persist_dir_.empty()) {
    try {
      persist_locked(persist_dir_);
    } catch (const std::exception& e) {
      std::cerr << "session " << id_ << ": persist failed: " << e.what() << "\n";
    }
  }
}

void Session::loop() {
  using clock = std::chrono::steady_clock;
  auto deadline = clock::now();
  const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(cfg_.dt * pacing_));
  for (;;) {
    {
      std::unique_lock<std::mutex> lock(mu_);
      if (status_ == Status::paused) {
        cv_.wait(lock, [&] { return status_ != Status::paused || stop_requested_; });
        deadline = clock::now();
      }
      if (stop_requested_) {
        interrupted_ = !engine_->done();
        finish(engine_->faulted() || interrupted_ ? Status::faulted : Status::complete);
        break;
      }
      if (engine_->done()) {
        finish(engine_->faulted() ? Status::faulted : Status::complete);
        break;
      }
      const StepRecord* stepped = nullptr;
      try {
        stepped = &engine_->step();
      } catch (const std::exception& e) {
        engine_->note("error", {{"message", e.what()}});
        finish(Status::faulted);
        break;
      }
      const auto& rec = *stepped;
      if (!engine_->faulted() && rec.y_m.size() > 0) {
        bool after = false;
        for (const auto& a : cfg_.anomalies) after = after || rec.t + 1e-9 >= a.t_a;
        if (after) {
          gcd_num_ += (rec.y_m - rec.r0).squaredNorm();
          gcd_den_ += rec.r0.squaredNorm();
        }
      }
      if (engine_->faulted()) {
        finish(Status::faulted);
        break;
      }
      if (rec.step % kFrameDecimation == 0) publish_frame(rec);
    }
    cv_.notify_all();
    if (pacing_ > 0.0) {
      deadline += period;
      std::this_thread::sleep_until(deadline);
    }
  }
  cv_.notify_all();
}

Ack Session::ingest(const Command& cmd) {
  std::lock_guard<std::mutex> lock(mu_);
  Ack ack;
  ack.received_at = engine_->time();
  auto reject = [&](const std::string& msg) {
    ack.accepted = false;
    ack.message = msg;
    return ack;
  };
  if (cmd.kind == CommandKind::pause) {
    if (status_ != Status::running) return reject("session is not running");
    status_ = Status::paused;
    engine_->note("pause");
    cv_.notify_all();
    ack.accepted = true;
    ack.message = "paused";
    return ack;
  }
  if (cmd.kind == CommandKind::resume) {
    if (status_ != Status::paused) return reject("session is not paused");
    status_ = Status::running;
    if (human_) human_->set_disconnected(false);
    engine_->note("resume");
    cv_.notify_all();
    ack.accepted = true;
    ack.message = "resumed";
    return ack;
  }
  if (status_ != Status::running || engine_->done()) return reject("session is not running");
  if (!human_) return reject("session pilot is synthetic; commands are not accepted");
  const bool sca2 = !cfg_.is_sca1();
  pilot::HumanCommand hc;
  hc.value = cmd.value;
  hc.label = cmd.label;
  switch (cmd.kind) {
    case CommandKind::take_over:
      if (sca2) return reject("TakeOver rejected: the autopilot is always in control in the supervisory architecture");
      if (!engine_->alert_time()) return reject("TakeOver rejected: no alert has been issued");
      if (engine_->active() == "pilot") return reject("TakeOver rejected: pilot already in control");
      hc.kind = pilot::HumanCommandKind::take_over;
      break;
    case CommandKind::stick:
      if (sca2) return reject("Stick rejected: joystick control is disabled in the supervisory architecture");
      if (!std::isfinite(cmd.value)) return reject("Stick rejected: value must be finite");
      hc.kind = pilot::HumanCommandKind::stick;
      break;
    case CommandKind::mu_input:
      if (!sca2) return reject("MuInput rejected: not available in the trading architecture");
      if (cmd.value != std::floor(cmd.value) || cmd.value < adaptive::kMinPilotMu || cmd.value > adaptive::kMaxPilotMu)
        return reject("MuInput rejected: mu outside Range [1, 20]");
      hc.kind = pilot::HumanCommandKind::mu_input;
      break;
    case CommandKind::severity_estimate:
      if (!sca2) return reject("SeverityEstimate rejected: not available in the trading architecture");
      if (!dynamics::severity_for_label(cmd.label))
        return reject("SeverityEstimate rejected: unknown severity '" + cmd.label + "'");
      hc.kind = pilot::HumanCommandKind::severity_estimate;
      break;
    default:
      return reject("unsupported command");
  }
  hc.received_at = ack.received_at;
  hc.apply_at_step = engine_->next_step();
  human_->push(hc);
  ack.accepted = true;
  ack.applied_at_step = hc.apply_at_step;
  ack.message = "queued";
  return ack;
}

std::shared_ptr<Subscription> Session::subscribe() {
  std::lock_guard<std::mutex> lock(mu_);
  auto sub = std::make_shared<Subscription>(next_seq_);
  if (status_ == Status::complete || status_ == Status::faulted) {
    sub->push({{"type", "Done"}, {"payload", {{"status", to_string(status_)}, {"steps", engine_->log().steps.size()}}}});
    sub->close();
  } else {
    subscribers_.push_back(sub);
  }
  return sub;
}

void Session::client_disconnected() {
  std::lock_guard<std::mutex> lock(mu_);
  if (!human_) return;
  human_->set_disconnected(true);
  if (status_ == Status::running) {
    status_ = Status::paused;
    engine_->note("disconnected");
  }
  cv_.notify_all();
}

Status Session::status() const {
  std::lock_guard<std::mutex> lock(mu_);
  return status_;
}

long Session::frames_emitted() const {
  std::lock_guard<std::mutex> lock(mu_);
  return next_seq_;
}

json Session::summary() const {
  std::lock_guard<std::mutex> lock(mu_);
  return {{"id", id_},
          {"scenario", cfg_.name},
          {"status", to_string(status_)},
          {"pacing", pacing_},
          {"t", engine_->time()},
          {"step", engine_->next_step()},
          {"frames", next_seq_},
          {"config_hash", format_hash(engine_->log().config_hash)}};
}

RunLog Session::log_snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  RunLog log = engine_->log();
  if (interrupted_ && !log.faulted) {
    log.faulted = true;
    log.fault = "interrupted";
  }
  return log;
}

std::optional<metrics::MetricsReport> Session::report() const {
  const auto log = log_snapshot();
  try {
    return metrics::compute_report(log);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::pair<std::string, std::string> Session::persist_locked(const std::string& dir) const {
  RunLog log = engine_->log();
  if (interrupted_ && !log.faulted) {
    log.faulted = true;
    log.fault = "interrupted";
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
  const std::string log_path = (std::filesystem::path(dir) / (id_ + ".ndjson")).string();
  const std::string report_path = (std::filesystem::path(dir) / (id_ + ".report.json")).string();
  save_runlog(log_path, log);
  json report;
  try {
    report = metrics::compute_report(log).to_json();
  } catch (const std::exception& e) {
    report = {{"error", e.what()}, {"faulted", true}};
  }
  write_file_atomic(report_path, report.dump(2) + "\n");
  return {log_path, report_path};
}

std::pair<std::string, std::string> Session::persist(const std::string& dir) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (status_ != Status::complete && status_ != Status::faulted)
    throw ContractViolation("session " + id_ + " is still " + to_string(status_) + "; persist needs a finished run");
  return persist_locked(dir);
}

SessionManager::~SessionManager() { shutdown(); }

std::shared_ptr<Session> SessionManager::start_session(const scenario::ScenarioConfig& cfg, double pacing) {
  auto session = create_session(cfg, pacing);
  session->start();
  return session;
}

std::shared_ptr<Session> SessionManager::create_session(const scenario::ScenarioConfig& cfg, double pacing) {
  std::string id;
  {
    std::lock_guard<std::mutex> lock(mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04ld", ++counter_);
    id = buf;
  }
  auto session = std::make_shared<Session>(id, cfg, pacing, output_dir_);
  {
    std::lock_guard<std::mutex> lock(mu_);
    sessions_[id] = session;
  }
  return session;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ContractViolation("unknown session '" + id + "'");
  return it->second;
}

std::vector<std::shared_ptr<Session>> SessionManager::list() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::shared_ptr<Session>> out;
  for (const auto& [id, s] : sessions_) out.push_back(s);
  return out;
}

Ack SessionManager::ingest(const std::string& id, const Command& cmd) { return get(id)->ingest(cmd); }

std::shared_ptr<Subscription> SessionManager::subscribe(const std::string& id) { return get(id)->subscribe(); }

void SessionManager::shutdown() {
  for (auto& s : list()) s->stop();
}

}  // namespace sca::session
