// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>

#include "rlx/wire.hpp"

namespace rlx::broker {

using namespace std::chrono_literals;

class BindFailure : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class ConnectionLost : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// A poll that ran out of time. Deliberately not a ConnectionLost.
class Timeout : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port"; a bare port means loopback.
  static Endpoint parse(const std::string& text);
  std::string str() const { return host + ":" + std::to_string(port); }
};

struct StoreStats {
  std::uint64_t puts = 0;
  std::uint64_t gets = 0;
  std::uint64_t get_misses = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::uint64_t keys = 0;

  std::string to_json() const;
};

/// Key -> Tensor map. Every operation is indivisible with respect to the others.
class Store {
 public:
  using TensorPtr = std::shared_ptr<const wire::Tensor>;

  void put(const std::string& key, wire::Tensor tensor);
  TensorPtr get(const std::string& key);
  bool exists(const std::string& key) const;
  /// Idempotent; returns whether a key was removed.
  bool del(const std::string& key);
  std::size_t size() const;
  StoreStats stats() const;

  wire::Response apply(const wire::Message& msg);

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, TensorPtr> map_;
  std::atomic<std::uint64_t> puts_{0}, gets_{0}, get_misses_{0}, bytes_in_{0}, bytes_out_{0};
};

/// TCP front-end for a Store: one thread per connection, messages on a
/// connection are served in arrival order.
class Server {
 public:
  explicit Server(std::shared_ptr<Store> store = std::make_shared<Store>());
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting. Port 0 picks an ephemeral port.
  void start(const Endpoint& bind, std::size_t max_connections = 1024);
  void stop();

  Endpoint endpoint() const { return bound_; }
  Store& store() { return *store_; }
  std::size_t active_connections() const { return active_.load(); }

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::shared_ptr<Store> store_;
  Endpoint bound_;
  std::size_t max_connections_ = 1024;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::atomic<std::size_t> active_{0};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::list<std::pair<int, std::thread>> connections_;
};

/// Single-connection client. Not for concurrent use from several threads.
class Client {
 public:
  Client() = default;
  /// Retries the connection until `connect_timeout` elapses, then throws ConnectionLost.
  explicit Client(const Endpoint& ep, std::chrono::milliseconds connect_timeout = 2000ms);
  ~Client();
  Client(Client&& other) noexcept;
  Client& operator=(Client&& other) noexcept;
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  bool connected() const { return fd_ >= 0; }

  void put(const std::string& key, const wire::Tensor& tensor);
  std::optional<wire::Tensor> get(const std::string& key);
  bool exists(const std::string& key);
  void del(const std::string& key);
  void ping();

  /// GETs every `interval` until the key appears. Never deletes the key.
  wire::Tensor poll(const std::string& key, std::chrono::milliseconds interval = 5ms,
                    std::chrono::milliseconds timeout = 10000ms);

  /// Raw request/response exchange.
  wire::Response request(const wire::Message& msg);

 private:
  void close();
  int fd_ = -1;
};

}  // namespace rlx::broker
