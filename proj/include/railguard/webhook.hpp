#pragma once

// At-least-once webhook delivery of alert events with exponential backoff.
// A single worker thread drains a bounded queue; producers block when the
// queue is full, so events are never dropped silently.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "railguard/pipeline.hpp"

namespace railguard {

struct RetryPolicy {
  std::chrono::milliseconds base{500};
  double factor = 2.0;
  std::chrono::milliseconds max_delay{30000};
  int max_retries = 8;

  /// Wait before retry number `retry` (1-based).
  std::chrono::milliseconds delay(int retry) const {
    double ms = static_cast<double>(base.count()) * std::pow(factor, retry - 1);
    ms = std::min(ms, static_cast<double>(max_delay.count()));
    return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
  }
};

struct WebhookUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;

  static WebhookUrl parse(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
      throw std::invalid_argument("webhook URL must start with http://");
    }
    const auto slash = url.find('/', scheme + 3);
    if (slash == scheme + 3) throw std::invalid_argument("webhook URL has no host");
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
  }
};

/// (source_id, object_key, frame_index, kind): stable across retries so
/// receivers can discard duplicates.
inline std::string idempotency_key(const std::string& source_id, const AlertEvent& e) {
  return source_id + "|" + e.object_key + "|" + std::to_string(e.frame_index) + "|" +
         std::string(to_string(e.kind));
}

struct DeliveryStats {
  std::uint64_t delivered = 0;
  std::uint64_t abandoned = 0;
  std::uint64_t attempts = 0;
};

class WebhookSink {
 public:
  using Logger = std::function<void(const std::string&)>;

  WebhookSink(const std::string& url, RetryPolicy policy = {}, std::size_t capacity = 1024,
              Logger log = {})
      : url_(WebhookUrl::parse(url)), policy_(policy), capacity_(std::max<std::size_t>(1, capacity)),
        log_(std::move(log)), worker_([this] { run(); }) {}

  WebhookSink(const WebhookSink&) = delete;
  WebhookSink& operator=(const WebhookSink&) = delete;

  ~WebhookSink() { close(); }

  /// Blocks while the queue is full.
  void enqueue(const std::string& source_id, const AlertEvent& e) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return queue_.size() < capacity_ || closing_; });
    if (closing_) throw std::logic_error("webhook sink is closed");
    queue_.push_back({source_id, e});
    not_empty_.notify_one();
  }

  /// Delivers everything already queued (with retries), then stops the worker.
  void close() {
    {
      std::lock_guard lock(mu_);
      if (closing_ && !worker_.joinable()) return;
      closing_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  DeliveryStats stats() const {
    std::lock_guard lock(mu_);
    return stats_;
  }

 private:
  struct Item {
    std::string source_id;
    AlertEvent event;
  };

  void run() {
    httplib::Client client(url_.origin);
    client.set_connection_timeout(std::chrono::seconds(2));
    client.set_read_timeout(std::chrono::seconds(5));
    for (;;) {
      Item item;
      {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !queue_.empty() || closing_; });
        if (queue_.empty()) return;
        item = std::move(queue_.front());
        queue_.pop_front();
        not_full_.notify_one();
      }
      deliver(client, item);
    }
  }

  void deliver(httplib::Client& client, const Item& item) {
    const std::string key = idempotency_key(item.source_id, item.event);
    for (int attempt = 0; attempt <= policy_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(policy_.delay(attempt));
      auto body = to_json(item.event);
      body["source_id"] = item.source_id;
      body["idempotency_key"] = key;
      body["attempt"] = attempt + 1;
      httplib::Headers headers{{"Idempotency-Key", key},
                               {"X-Railguard-Attempt", std::to_string(attempt + 1)}};
      auto res = client.Post(url_.path, headers, body.dump(), "application/json");
      {
        std::lock_guard lock(mu_);
        ++stats_.attempts;
      }
      if (res && res->status >= 200 && res->status < 300) {
        std::lock_guard lock(mu_);
        ++stats_.delivered;
        return;
      }
      if (log_) {
        log_("webhook attempt " + std::to_string(attempt + 1) + " for " + key + " failed: " +
             (res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error())));
      }
    }
    std::lock_guard lock(mu_);
    ++stats_.abandoned;
    if (log_) log_("webhook gave up on " + key);
  }

  WebhookUrl url_;
  RetryPolicy policy_;
  std::size_t capacity_;
  Logger log_;

  mutable std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<Item> queue_;
  bool closing_ = false;
  DeliveryStats stats_;
  std::thread worker_;  // last: starts after the rest is constructed
};

}  // namespace railguard
