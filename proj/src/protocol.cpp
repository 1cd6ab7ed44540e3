#include "sca/protocol.hpp"

#include "sca/errors.hpp"

#include <httplib.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace sca::protocol {

using nlohmann::json;

json Envelope::to_json() const { return {{"type", type}, {"session", session}, {"seq", seq}, {"payload", payload}}; }

Envelope Envelope::from_json(const json& j) {
  if (!j.is_object()) throw ContractViolation("protocol: envelope must be a JSON object");
  Envelope e;
  try {
    e.type = j.at("type").get<std::string>();
    e.session = j.value("session", std::string());
    e.seq = j.value("seq", std::int64_t{0});
    e.payload = j.value("payload", json::object());
  } catch (const json::exception& ex) {
    throw ContractViolation(std::string("protocol: malformed envelope: ") + ex.what());
  }
  return e;
}

bool Envelope::operator==(const Envelope& o) const {
  return type == o.type && session == o.session && seq == o.seq && payload == o.payload;
}

std::string encode(const Envelope& env) {
  const std::string body = env.to_json().dump();
  if (body.size() > kMaxMessageBytes) throw ContractViolation("protocol: message exceeds 16 MiB");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out(4, '\0');
  out[0] = static_cast<char>((n >> 24) & 0xFF);
  out[1] = static_cast<char>((n >> 16) & 0xFF);
  out[2] = static_cast<char>((n >> 8) & 0xFF);
  out[3] = static_cast<char>(n & 0xFF);
  return out + body;
}

std::vector<Envelope> Decoder::feed(const char* data, std::size_t size) {
  buffer_.append(data, size);
  std::vector<Envelope> out;
  std::size_t pos = 0;
  while (buffer_.size() - pos >= 4) {
    const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data() + pos);
    const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
    if (n > kMaxMessageBytes) throw ContractViolation("protocol: declared message length exceeds 16 MiB");
    if (buffer_.size() - pos - 4 < n) break;
    json j;
    try {
      j = json::parse(buffer_.begin() + static_cast<long>(pos) + 4, buffer_.begin() + static_cast<long>(pos + 4 + n));
    } catch (const json::exception& e) {
      throw ContractViolation(std::string("protocol: body is not valid JSON: ") + e.what());
    }
    out.push_back(Envelope::from_json(j));
    pos += 4 + n;
  }
  buffer_.erase(0, pos);
  return out;
}

scenario::ScenarioConfig scenario_from_request(const json& body) {
  if (!body.is_object()) throw ConfigError("request body must be a JSON object");
  scenario::ScenarioConfig cfg;
  if (body.contains("config")) {
    cfg = scenario::config_from_json(body.at("config"));
  } else if (body.contains("scenario")) {
    cfg = scenario::named_scenario(body.at("scenario").get<std::string>());
  } else {
    throw ConfigError("request needs \"scenario\" or \"config\"");
  }
  scenario::RunOptions opts;
  if (body.contains("pilot")) opts.pilot = body.at("pilot").get<std::string>();
  if (body.contains("alert")) opts.alert = body.at("alert").get<std::string>();
  if (body.contains("autopilot")) opts.autopilot = body.at("autopilot").get<std::string>();
  if (body.contains("seed")) opts.seed = body.at("seed").get<std::uint64_t>();
  scenario::apply_run_options(cfg, opts);
  return cfg;
}

namespace {

Envelope reply(const std::string& type, const std::string& session, json payload) {
  Envelope e;
  e.type = type;
  e.session = session;
  e.payload = std::move(payload);
  return e;
}

json session_scenarios() {
  json names = json::array();
  for (const auto& n : scenario::scenario_names()) names.push_back(n);
  return names;
}

}  // namespace

std::vector<Envelope> handle_message(session::SessionManager& manager, const Envelope& msg, Connection& conn) {
  if (msg.payload.is_null()) {
    Envelope normalized = msg;
    normalized.payload = json::object();
    return handle_message(manager, normalized, conn);
  }
  try {
    if (msg.type == kHello) {
      json payload = {{"server", "sca"}, {"version", kProtocolVersion}, {"scenarios", session_scenarios()}};
      const std::string want = msg.payload.value("session", msg.session);
      if (!want.empty()) {
        auto s = manager.get(want);
        auto sub = s->subscribe();
        std::lock_guard<std::mutex> lock(conn.mu);
        conn.attached = want;
        conn.session = s;
        conn.subscription = sub;
        payload["first_seq"] = sub->first_seq();
        payload["status"] = session::to_string(s->status());
      }
      return {reply(kHello, want, payload)};
    }
    if (msg.type == kStartSession) {
      const auto cfg = scenario_from_request(msg.payload);
      const double pacing = msg.payload.value("pacing", manager.default_pacing());
      auto s = manager.create_session(cfg, pacing);
      auto sub = s->subscribe();
      {
        std::lock_guard<std::mutex> lock(conn.mu);
        conn.attached = s->id();
        conn.session = s;
        conn.subscription = sub;
      }
      s->start();
      return {reply(kAck, s->id(),
                    {{"accepted", true},
                     {"session", s->id()},
                     {"scenario", cfg.name},
                     {"family", cfg.family},
                     {"delta", cfg.metrics_delta},
                     {"config_hash", format_hash(scenario::config_hash(cfg))}})};
    }
    if (msg.type == kCommand) {
      std::string id = msg.session;
      if (id.empty()) {
        std::lock_guard<std::mutex> lock(conn.mu);
        id = conn.attached;
      }
      if (id.empty()) return {reply(kError, "", {{"message", "Command without a session"}})};
      const auto cmd = session::Command::from_json(msg.payload);
      auto ack = manager.ingest(id, cmd).to_json();
      ack["command"] = session::to_string(cmd.kind);
      ack["value"] = cmd.value;
      ack["ref"] = msg.seq;
      return {reply(kAck, id, ack)};
    }
    return {reply(kError, msg.session, {{"message", "unknown message type '" + msg.type + "'"}})};
  } catch (const std::exception& e) {
    return {reply(kError, msg.session, {{"message", e.what()}, {"ref", msg.seq}})};
  }
}

namespace {

bool send_all(int fd, const std::string& bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

DuplexServer::~DuplexServer() { stop(); }

void DuplexServer::listen(const std::string& host, int port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw std::runtime_error("invalid listen address " + host);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 16) < 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void DuplexServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard<std::mutex> lock(conn_mu_);
    connection_fds_.push_back(fd);
    connections_.emplace_back([this, fd] { serve(fd); });
  }
}

void DuplexServer::serve(int fd) {
  Connection conn;
  std::mutex write_mu;
  std::int64_t out_seq = 0;
  std::atomic<bool> open{true};
  auto write = [&](Envelope env) {
    std::lock_guard<std::mutex> lock(write_mu);
    env.seq = out_seq++;
    if (!send_all(fd, encode(env))) open = false;
  };

  std::thread forwarder([&] {
    while (open && running_) {
      std::shared_ptr<session::Subscription> sub;
      std::string id;
      {
        std::lock_guard<std::mutex> lock(conn.mu);
        sub = conn.subscription;
        id = conn.attached;
      }
      if (!sub) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        continue;
      }
      auto msg = sub->pop(std::chrono::milliseconds(50));
      if (!msg) {
        if (sub->closed()) {
          if (sub->dropped()) write(reply(kError, id, {{"message", "telemetry buffer overflow; subscriber dropped"}}));
          std::lock_guard<std::mutex> lock(conn.mu);
          if (conn.subscription == sub) conn.subscription.reset();
        }
        continue;
      }
      write(reply(msg->at("type").get<std::string>(), id, msg->at("payload")));
    }
  });

  Decoder decoder;
  char buf[65536];
  while (open && running_) {
    pollfd p{fd, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    if (r == 0) continue;
    if (r < 0 && errno == EINTR) continue;
    const ssize_t n = r > 0 ? ::recv(fd, buf, sizeof buf, 0) : -1;
    if (n <= 0) break;
    try {
      for (const auto& msg : decoder.feed(buf, static_cast<std::size_t>(n)))
        for (auto& out : handle_message(manager_, msg, conn)) write(std::move(out));
    } catch (const std::exception& e) {
      write(reply(kError, "", {{"message", e.what()}}));
      break;
    }
  }
  open = false;
  forwarder.join();
  {
    std::lock_guard<std::mutex> lock(conn.mu);
    if (conn.session) conn.session->client_disconnected();
  }
  ::shutdown(fd, SHUT_RDWR);
  ::close(fd);
  std::lock_guard<std::mutex> lock(conn_mu_);
  std::erase(connection_fds_, fd);
}

void DuplexServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard<std::mutex> lock(conn_mu_);
    for (int fd : connection_fds_) ::shutdown(fd, SHUT_RDWR);
    threads.swap(connections_);
  }
  for (auto& t : threads) t.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

DuplexClient::~DuplexClient() { close(); }

void DuplexClient::connect(const std::string& host, int port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    const std::string err = std::strerror(errno);
    close();
    throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port) + ": " + err);
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

void DuplexClient::send(const Envelope& env) {
  if (fd_ < 0 || !send_all(fd_, encode(env))) throw std::runtime_error("protocol client: send failed");
}

std::optional<Envelope> DuplexClient::receive(int timeout_ms) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  char buf[65536];
  while (pending_.empty()) {
    if (fd_ < 0) return std::nullopt;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(left.count()));
    if (r <= 0) continue;
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n <= 0) {
      close();
      return std::nullopt;
    }
    for (auto& e : decoder_.feed(buf, static_cast<std::size_t>(n))) pending_.push_back(std::move(e));
  }
  Envelope e = std::move(pending_.front());
  pending_.pop_front();
  return e;
}

void DuplexClient::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
  }
  fd_ = -1;
}

struct HttpApi::Impl {
  httplib::Server server;
};

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(2), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, {{"error", message}}, status);
}

}  // namespace

HttpApi::HttpApi(session::SessionManager& manager) : impl_(std::make_unique<Impl>()), manager_(manager) {
  auto& srv = impl_->server;
  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, {{"status", "ok"}}); });
  srv.Get("/scenarios", [](const httplib::Request&, httplib::Response& res) { send_json(res, session_scenarios()); });
  srv.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& s : manager_.list()) out.push_back(s->summary());
    send_json(res, out);
  });
  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const json body = json::parse(req.body);
      const auto cfg = scenario_from_request(body);
      auto s = manager_.start_session(cfg, body.value("pacing", manager_.default_pacing()));
      send_json(res, s->summary(), 201);
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 400, e.what());
    }
  });
  auto with_session = [this](const httplib::Request& req, httplib::Response& res,
                             const std::function<void(session::Session&)>& fn) {
    std::shared_ptr<session::Session> s;
    try {
      s = manager_.get(req.matches[1]);
    } catch (const std::exception& e) {
      send_error(res, 404, e.what());
      return;
    }
    try {
      fn(*s);
    } catch (const std::exception& e) {
      send_error(res, 409, e.what());
    }
  };
  srv.Get(R"(/sessions/([^/]+))", [with_session](const httplib::Request& req, httplib::Response& res) {
    with_session(req, res, [&](session::Session& s) { send_json(res, s.summary()); });
  });
  srv.Post(R"(/sessions/([^/]+)/commands)", [with_session](const httplib::Request& req, httplib::Response& res) {
    with_session(req, res, [&](session::Session& s) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed JSON: ") + e.what());
        return;
      }
      const auto ack = s.ingest(session::Command::from_json(body));
      send_json(res, ack.to_json(), ack.accepted ? 200 : 422);
    });
  });
  srv.Post(R"(/sessions/([^/]+)/stop)", [with_session](const httplib::Request& req, httplib::Response& res) {
    with_session(req, res, [&](session::Session& s) {
      s.stop();
      send_json(res, s.summary());
    });
  });
  srv.Get(R"(/sessions/([^/]+)/log)", [with_session](const httplib::Request& req, httplib::Response& res) {
    with_session(req, res, [&](session::Session& s) {
      std::ostringstream os;
      write_runlog(os, s.log_snapshot());
      res.set_content(os.str(), "application/x-ndjson");
    });
  });
  srv.Get(R"(/sessions/([^/]+)/report)", [with_session](const httplib::Request& req, httplib::Response& res) {
    with_session(req, res, [&](session::Session& s) {
      const auto report = s.report();
      if (!report) {
        send_error(res, 409, "report not available yet");
        return;
      }
      send_json(res, report->to_json());
    });
  });
}

HttpApi::~HttpApi() { stop(); }

void HttpApi::listen(const std::string& host, int port) {
  auto& srv = impl_->server;
  port_ = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw std::runtime_error("cannot bind HTTP " + host + ":" + std::to_string(port));
  thread_ = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
}

void HttpApi::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace sca::protocol
