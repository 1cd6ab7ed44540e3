#pragma once

#include "sca/session.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace sca::protocol {

/// Message catalog of the duplex protocol.
inline constexpr const char* kHello = "Hello";
inline constexpr const char* kStartSession = "StartSession";
inline constexpr const char* kCommand = "Command";
inline constexpr const char* kFrame = "Frame";
inline constexpr const char* kEvent = "Event";
inline constexpr const char* kAck = "Ack";
inline constexpr const char* kError = "Error";
inline constexpr const char* kDone = "Done";

inline constexpr std::uint32_t kMaxMessageBytes = 16u << 20;
inline constexpr int kProtocolVersion = 1;

struct Envelope {
  std::string type;
  std::string session;
  std::int64_t seq = 0;
  nlohmann::json payload = nlohmann::json::object();

  nlohmann::json to_json() const;
  static Envelope from_json(const nlohmann::json& j);
  bool operator==(const Envelope& other) const;
};

/// 4-byte big-endian length followed by the UTF-8 JSON body.
std::string encode(const Envelope& env);

/// Incremental decoder for a byte stream of encoded envelopes.
class Decoder {
 public:
  /// Appends bytes and returns every envelope completed by them. Throws
  /// ContractViolation on an oversized or malformed message.
  std::vector<Envelope> feed(const char* data, std::size_t size);
  std::vector<Envelope> feed(const std::string& bytes) { return feed(bytes.data(), bytes.size()); }
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::string buffer_;
};

/// Builds the scenario of a StartSession payload or HTTP request body:
/// {"scenario": name | "config": {...}, "pilot", "alert", "autopilot", "seed"}.
scenario::ScenarioConfig scenario_from_request(const nlohmann::json& body);

/// Per-connection state: the attached session and its telemetry stream.
struct Connection {
  std::mutex mu;
  std::string attached;
  std::shared_ptr<session::Session> session;
  std::shared_ptr<session::Subscription> subscription;
};

/// Handles one decoded client message; returns the replies (without seq).
/// StartSession subscribes the connection before the engine starts so no
/// frame is missed.
std::vector<Envelope> handle_message(session::SessionManager& manager, const Envelope& msg, Connection& conn);

/// TCP server speaking the duplex protocol; one reader and one telemetry
/// forwarder thread per connection.
class DuplexServer {
 public:
  explicit DuplexServer(session::SessionManager& manager) : manager_(manager) {}
  ~DuplexServer();

  /// Binds to host:port (port 0 picks a free port). Throws std::runtime_error
  /// on bind failure.
  void listen(const std::string& host, int port);
  int port() const { return port_; }
  void stop();

 private:
  void accept_loop();
  void serve(int fd);

  session::SessionManager& manager_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<std::thread> connections_;
  std::vector<int> connection_fds_;
};

/// Blocking client used by tests and tools.
class DuplexClient {
 public:
  DuplexClient() = default;
  ~DuplexClient();
  void connect(const std::string& host, int port);
  void send(const Envelope& env);
  /// Next envelope, or nullopt after timeout_ms or on close.
  std::optional<Envelope> receive(int timeout_ms);
  void close();

 private:
  int fd_ = -1;
  Decoder decoder_;
  std::deque<Envelope> pending_;
};

/// HTTP interface for batch operations, mounted on an httplib server:
/// GET /health, GET /scenarios, GET /sessions, POST /sessions,
/// GET /sessions/{id}, POST /sessions/{id}/commands, POST /sessions/{id}/stop,
/// GET /sessions/{id}/log, GET /sessions/{id}/report.
class HttpApi {
 public:
  explicit HttpApi(session::SessionManager& manager);
  ~HttpApi();

  /// Binds and serves on a background thread; throws std::runtime_error on
  /// bind failure. Port 0 picks a free port.
  void listen(const std::string& host, int port);
  int port() const { return port_; }
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  session::SessionManager& manager_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace sca::protocol
