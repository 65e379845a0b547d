#pragma once

// Network ingestion. One listening socket accepts two protocols, told apart
// by the first bytes a client sends:
//   * newline-delimited wire-format lines over a raw TCP connection
//     (one connection = one session); rejected lines get a JSON error line back;
//   * HTTP/1.1 POST /v1/frames with a body of wire-format lines
//     (the session is named by the X-Session-Id header).
// Every session runs its own StreamProcessor; alerts go to a shared sink.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "railguard/calibration.hpp"
#include "railguard/ingest.hpp"
#include "railguard/log.hpp"
#include "railguard/pipeline.hpp"
#include "railguard/webhook.hpp"

namespace railguard {

/// Receives every alert (and optionally status) produced by any session.
struct OutputSink {
  std::function<void(const std::string& source_id, const AlertEvent&)> alert;
  std::function<void(const ProximityStatus&)> status;  // may be empty
};

struct LineOutcome {
  bool accepted = false;
  std::string error;  // set when !accepted
  std::vector<AlertEvent> events;
};

/// Sequential ingestion state for one stream: expects a header line, then frames.
/// Rejected lines never disturb the session.
class IngestSession {
 public:
  IngestSession(Calibration cal, PipelineConfig cfg, OutputSink sink)
      : cal_(std::move(cal)), cfg_(cfg), sink_(std::move(sink)) {
    cfg_.validate();
  }

  LineOutcome handle_line(std::string_view line) {
    ++line_no_;
    LineOutcome out;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      out.accepted = true;
      return out;
    }
    try {
      if (!processor_) {
        header_ = parse_header_line(line, line_no_);
        processor_.emplace(cal_, cfg_);
        out.accepted = true;
        return out;
      }
      FrameRecord f = parse_frame_line(line, line_no_);
      order_.check(f, line_no_);
      ++frames_in_;
      auto r = processor_->process(f);
      if (sink_.status) {
        for (const auto& s : r.statuses) sink_.status(s);
      }
      if (sink_.alert) {
        for (const auto& e : r.events) sink_.alert(header_->source_id, e);
      }
      out.events = std::move(r.events);
      out.accepted = true;
    } catch (const IngestError& e) {
      ++rejected_;
      out.error = e.what();
    }
    return out;
  }

  bool has_header() const noexcept { return header_.has_value(); }
  const std::optional<StreamHeader>& header() const noexcept { return header_; }
  std::uint64_t frames_in() const noexcept { return frames_in_; }
  std::uint64_t rejected() const noexcept { return rejected_; }
  RunSummary summary() const { return processor_ ? processor_->summary() : RunSummary{}; }

 private:
  Calibration cal_;
  PipelineConfig cfg_;
  OutputSink sink_;
  std::optional<StreamHeader> header_;
  std::optional<StreamProcessor> processor_;
  FrameOrderChecker order_;
  std::size_t line_no_ = 0;
  std::uint64_t frames_in_ = 0;
  std::uint64_t rejected_ = 0;
};

inline nlohmann::ordered_json line_error_json(std::size_t line, const std::string& message) {
  nlohmann::ordered_json j;
  j["type"] = "error";
  j["line"] = line;
  j["message"] = message;
  return j;
}

// ---------------------------------------------------------------------------

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 = pick a free port
  Calibration calibration;
  PipelineConfig config;
  bool emit_status = false;
};

namespace detail {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

/// recv with a poll timeout so the loop can notice shutdown. Returns bytes
/// read, 0 at EOF, -1 on error, -2 on timeout.
inline ssize_t recv_some(int fd, char* buf, std::size_t len, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  const int rc = ::poll(&p, 1, timeout_ms);
  if (rc == 0) return -2;
  if (rc < 0) return errno == EINTR ? -2 : -1;
  for (;;) {
    const ssize_t n = ::recv(fd, buf, len, 0);
    if (n < 0 && errno == EINTR) continue;
    return n;
  }
}

inline bool looks_like_http(std::string_view head) {
  for (std::string_view m : {"POST ", "GET ", "PUT ", "DELETE ", "HEAD ", "OPTIONS "}) {
    if (head.size() >= m.size() ? head.substr(0, m.size()) == m : m.substr(0, head.size()) == head) {
      return true;
    }
  }
  return false;
}

struct HttpRequest {
  std::string method;
  std::string target;
  std::string version;
  std::map<std::string, std::string> headers;  // lower-cased names
  std::string body;

  std::string header(const std::string& name, std::string fallback = {}) const {
    auto it = headers.find(name);
    return it == headers.end() ? fallback : it->second;
  }
};

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline std::string http_response(int status, std::string_view reason, std::string_view body,
                                 bool keep_alive, std::string_view content_type = "application/json") {
  std::string r = "HTTP/1.1 " + std::to_string(status) + " " + std::string(reason) + "\r\n";
  r += "Content-Type: " + std::string(content_type) + "\r\n";
  r += "Content-Length: " + std::to_string(body.size()) + "\r\n";
  r += keep_alive ? "Connection: keep-alive\r\n" : "Connection: close\r\n";
  r += "\r\n";
  r += body;
  return r;
}

}  // namespace detail

class Server {
 public:
  Server(ServerOptions opts, OutputSink sink) : opts_(std::move(opts)), sink_(std::move(sink)) {
    opts_.config.validate();
  }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  ~Server() { stop(); }

  /// Binds and starts accepting. Returns the bound port.
  std::uint16_t start() {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(opts_.port);
    if (int rc = ::getaddrinfo(opts_.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw std::runtime_error("cannot resolve " + opts_.host + ": " + gai_strerror(rc));
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
    detail::Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    if (!s) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(s.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(s.get(), res->ai_addr, res->ai_addrlen) != 0) {
      throw std::runtime_error("cannot bind " + opts_.host + ":" + port + ": " + std::strerror(errno));
    }
    if (::listen(s.get(), 64) != 0) throw std::runtime_error(std::string("listen: ") + std::strerror(errno));

    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(s.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                       : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
    listener_ = std::move(s);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
    return port_;
  }

  std::uint16_t port() const noexcept { return port_; }

  /// Stops accepting, lets open connections finish what they already
  /// received, and joins every thread.
  void stop() {
    if (!running_.exchange(false)) return;
    if (acceptor_.joinable()) acceptor_.join();
    listener_.reset();
    std::vector<std::thread> threads;
    {
      std::lock_guard lock(conn_mu_);
      for (int fd : open_fds_) ::shutdown(fd, SHUT_RD);
      threads = std::move(conn_threads_);
    }
    for (auto& t : threads) t.join();
  }

  struct Totals {
    std::uint64_t sessions = 0;
    std::uint64_t frames_in = 0;
    std::uint64_t frames_processed = 0;
    std::uint64_t rejected_lines = 0;
  };

  /// Closed sessions plus HTTP sessions still open.
  Totals totals() const {
    Totals t;
    {
      std::lock_guard lock(totals_mu_);
      t = totals_;
    }
    std::lock_guard hl(http_mu_);
    for (const auto& [_, s] : http_sessions_) {
      std::lock_guard sl(s->mu);
      t.frames_in += s->session.frames_in();
      t.frames_processed += s->session.summary().frames;
      t.rejected_lines += s->session.rejected();
    }
    return t;
  }

 private:
  struct SharedSession {
    explicit SharedSession(IngestSession s) : session(std::move(s)) {}
    std::mutex mu;
    IngestSession session;
    std::size_t lines = 0;
  };

  IngestSession new_session() {
    OutputSink sink = sink_;
    if (!opts_.emit_status) sink.status = nullptr;
    return IngestSession(opts_.calibration, opts_.config, std::move(sink));
  }

  void accept_loop() {
    while (running_) {
      pollfd p{listener_.get(), POLLIN, 0};
      const int rc = ::poll(&p, 1, 100);
      if (rc <= 0) continue;
      const int fd = ::accept(listener_.get(), nullptr, nullptr);
      if (fd < 0) continue;
      std::lock_guard lock(conn_mu_);
      open_fds_.push_back(fd);
      conn_threads_.emplace_back([this, fd] {
        handle_connection(fd);
        std::lock_guard l(conn_mu_);
        open_fds_.erase(std::remove(open_fds_.begin(), open_fds_.end(), fd), open_fds_.end());
        ::close(fd);
      });
    }
  }

  void handle_connection(int fd) {
    std::string buf;
    char chunk[8192];
    // Sniff enough bytes to tell the protocols apart.
    while (buf.size() < 8) {
      const ssize_t n = detail::recv_some(fd, chunk, sizeof chunk, 200);
      if (n == -2) {
        if (!buf.empty() || !running_) break;
        continue;
      }
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      if (buf.find('\n') != std::string::npos) break;
    }
    if (buf.empty()) return;
    if (detail::looks_like_http(buf)) {
      serve_http(fd, std::move(buf));
    } else {
      serve_lines(fd, std::move(buf));
    }
  }

  void serve_lines(int fd, std::string buf) {
    IngestSession session = new_session();
    std::size_t line_no = 0;
    char chunk[8192];
    bool eof = false;
    bool peer_gone = false;
    auto drain = [&](bool final) {
      std::size_t start = 0;
      for (;;) {
        const auto nl = buf.find('\n', start);
        if (nl == std::string::npos) break;
        ++line_no;
        auto out = session.handle_line(std::string_view(buf).substr(start, nl - start));
        if (!out.accepted && !peer_gone) {
          peer_gone = !detail::send_all(fd, line_error_json(line_no, out.error).dump() + "\n");
        }
        start = nl + 1;
      }
      buf.erase(0, start);
      if (final && !buf.empty()) {
        ++line_no;
        auto out = session.handle_line(buf);
        if (!out.accepted && !peer_gone) {
          peer_gone = !detail::send_all(fd, line_error_json(line_no, out.error).dump() + "\n");
        }
        buf.clear();
      }
    };
    drain(false);
    while (!eof) {
      const ssize_t n = detail::recv_some(fd, chunk, sizeof chunk, 200);
      if (n == -2) continue;
      if (n <= 0) {
        if (n < 0) log::warn("connection dropped: " + std::string(std::strerror(errno)));
        eof = true;
        break;
      }
      buf.append(chunk, static_cast<std::size_t>(n));
      drain(false);
    }
    drain(true);
    record(session);
  }

  void record(const IngestSession& s) {
    const auto sum = s.summary();
    if (s.header()) {
      log::info("session " + s.header()->source_id + " closed: " + std::to_string(s.frames_in()) +
                " frames, " + std::to_string(sum.alerts()) + " alerts, " + std::to_string(s.rejected()) +
                " rejected lines");
    }
    std::lock_guard lock(totals_mu_);
    ++totals_.sessions;
    totals_.frames_in += s.frames_in();
    totals_.frames_processed += sum.frames;
    totals_.rejected_lines += s.rejected();
  }

  /// Reads one request from buf/fd. Returns nullopt at EOF or on a framing error
  /// (after replying with an error status).
  std::optional<detail::HttpRequest> read_request(int fd, std::string& buf) {
    char chunk[8192];
    std::size_t head_end;
    while ((head_end = buf.find("\r\n\r\n")) == std::string::npos) {
      if (buf.size() > (1u << 16)) {
        detail::send_all(fd, detail::http_response(431, "Request Header Fields Too Large", "", false));
        return std::nullopt;
      }
      const ssize_t n = detail::recv_some(fd, chunk, sizeof chunk, 200);
      if (n == -2) {
        if (!running_ && buf.empty()) return std::nullopt;
        continue;
      }
      if (n <= 0) return std::nullopt;
      buf.append(chunk, static_cast<std::size_t>(n));
    }
    detail::HttpRequest req;
    std::istringstream head(buf.substr(0, head_end));
    std::string line;
    std::getline(head, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream rl(line);
    rl >> req.method >> req.target >> req.version;
    while (std::getline(head, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string value = line.substr(colon + 1);
      value.erase(0, value.find_first_not_of(" \t"));
      req.headers[detail::to_lower(line.substr(0, colon))] = value;
    }
    buf.erase(0, head_end + 4);

    if (req.headers.count("transfer-encoding")) {
      detail::send_all(fd, detail::http_response(411, "Length Required",
                                                 R"({"error":"chunked bodies are not supported"})", false));
      return std::nullopt;
    }
    std::size_t length = 0;
    try {
      length = std::stoul(req.header("content-length", "0"));
    } catch (const std::exception&) {
      detail::send_all(fd, detail::http_response(400, "Bad Request", R"({"error":"bad Content-Length"})", false));
      return std::nullopt;
    }
    while (buf.size() < length) {
      const ssize_t n = detail::recv_some(fd, chunk, sizeof chunk, 200);
      if (n == -2) continue;
      if (n <= 0) return std::nullopt;
      buf.append(chunk, static_cast<std::size_t>(n));
    }
    req.body = buf.substr(0, length);
    buf.erase(0, length);
    return req;
  }

  void serve_http(int fd, std::string buf) {
    for (;;) {
      auto req = read_request(fd, buf);
      if (!req) return;
      const bool keep_alive = req->version == "HTTP/1.1" && detail::to_lower(req->header("connection")) != "close";
      const std::string response = route(*req, keep_alive);
      if (!detail::send_all(fd, response) || !keep_alive) return;
    }
  }

  std::string route(const detail::HttpRequest& req, bool keep_alive) {
    using nlohmann::ordered_json;
    if (req.method == "GET" && req.target == "/healthz") {
      return detail::http_response(200, "OK", R"({"status":"ok"})", keep_alive);
    }
    const std::string sessions_prefix = "/v1/sessions/";
    if (req.method == "DELETE" && req.target.rfind(sessions_prefix, 0) == 0) {
      const std::string id = req.target.substr(sessions_prefix.size());
      std::shared_ptr<SharedSession> s;
      {
        std::lock_guard lock(http_mu_);
        auto it = http_sessions_.find(id);
        if (it == http_sessions_.end()) {
          return detail::http_response(404, "Not Found", R"({"error":"no such session"})", keep_alive);
        }
        s = it->second;
        http_sessions_.erase(it);
      }
      std::lock_guard sl(s->mu);
      record(s->session);
      ordered_json body = {{"session", id}, {"summary", to_json(s->session.summary())}};
      return detail::http_response(200, "OK", body.dump(), keep_alive);
    }
    if (req.method == "POST" && (req.target == "/v1/frames" || req.target.rfind("/v1/frames?", 0) == 0)) {
      const std::string id = req.header("x-session-id", "default");
      std::shared_ptr<SharedSession> s;
      {
        std::lock_guard lock(http_mu_);
        auto& slot = http_sessions_[id];
        if (!slot) slot = std::make_shared<SharedSession>(new_session());
        s = slot;
      }
      ordered_json errors = ordered_json::array();
      ordered_json events = ordered_json::array();
      std::uint64_t accepted = 0;
      {
        std::lock_guard sl(s->mu);
        std::size_t start = 0;
        const std::string& body = req.body;
        while (start < body.size()) {
          auto nl = body.find('\n', start);
          if (nl == std::string::npos) nl = body.size();
          ++s->lines;
          auto out = s->session.handle_line(std::string_view(body).substr(start, nl - start));
          if (out.accepted) {
            ++accepted;
          } else {
            errors.push_back(line_error_json(s->lines, out.error));
          }
          for (const auto& e : out.events) events.push_back(to_json(e));
          start = nl + 1;
        }
      }
      ordered_json resp = {{"session", id}, {"accepted", accepted}, {"rejected", errors.size()},
                           {"errors", errors}, {"events", events}};
      return detail::http_response(200, "OK", resp.dump(), keep_alive);
    }
    return detail::http_response(404, "Not Found", R"({"error":"unknown route"})", keep_alive);
  }

  ServerOptions opts_;
  OutputSink sink_;
  detail::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;

  std::mutex conn_mu_;
  std::vector<int> open_fds_;
  std::vector<std::thread> conn_threads_;

  mutable std::mutex http_mu_;
  std::map<std::string, std::shared_ptr<SharedSession>> http_sessions_;

  mutable std::mutex totals_mu_;
  Totals totals_;
};

}  // namespace railguard
