// SPDX-License-Identifier: Apache-2.0
#include "rlx/broker.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace rlx::broker {

namespace {

void send_all(int fd, std::span<const std::byte> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ConnectionLost(std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

struct FdSource {
  int fd;
  void read(std::span<std::byte> out) {
    std::size_t got = 0;
    while (got < out.size()) {
      const ssize_t n = ::recv(fd, out.data() + got, out.size() - got, 0);
      if (n == 0) throw ConnectionLost("peer closed connection");
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ConnectionLost(std::string("recv: ") + std::strerror(errno));
      }
      got += static_cast<std::size_t>(n);
    }
  }
};

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (ep.host.empty() || ep.host == "0.0.0.0" || ep.host == "*") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (ep.host == "localhost") {
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  } else if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
      throw std::invalid_argument("cannot resolve host " + ep.host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  return addr;
}

}  // namespace

Endpoint Endpoint::parse(const std::string& text) {
  Endpoint ep;
  const auto colon = text.rfind(':');
  const std::string port = colon == std::string::npos ? text : text.substr(colon + 1);
  if (colon != std::string::npos) ep.host = text.substr(0, colon);
  if (ep.host.empty()) ep.host = "127.0.0.1";
  try {
    const auto p = std::stoul(port);
    if (p > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(p);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad address '" + text + "', expected host:port");
  }
  return ep;
}

std::string StoreStats::to_json() const {
  nlohmann::json j{{"puts", puts},           {"gets", gets},         {"get_misses", get_misses},
                   {"bytes_in", bytes_in},   {"bytes_out", bytes_out}, {"keys", keys}};
  return j.dump(2);
}

// --- Store ------------------------------------------------------------------

void Store::put(const std::string& key, wire::Tensor tensor) {
  const auto bytes = tensor.data.size();
  auto ptr = std::make_shared<const wire::Tensor>(std::move(tensor));
  {
    std::unique_lock lock(mu_);
    map_[key] = std::move(ptr);
  }
  puts_.fetch_add(1, std::memory_order_relaxed);
  bytes_in_.fetch_add(bytes, std::memory_order_relaxed);
}

Store::TensorPtr Store::get(const std::string& key) {
  TensorPtr out;
  {
    std::shared_lock lock(mu_);
    if (auto it = map_.find(key); it != map_.end()) out = it->second;
  }
  gets_.fetch_add(1, std::memory_order_relaxed);
  if (out) {
    bytes_out_.fetch_add(out->data.size(), std::memory_order_relaxed);
  } else {
    get_misses_.fetch_add(1, std::memory_order_relaxed);
  }
  return out;
}

bool Store::exists(const std::string& key) const {
  std::shared_lock lock(mu_);
  return map_.count(key) != 0;
}

bool Store::del(const std::string& key) {
  std::unique_lock lock(mu_);
  return map_.erase(key) != 0;
}

std::size_t Store::size() const {
  std::shared_lock lock(mu_);
  return map_.size();
}

StoreStats Store::stats() const {
  StoreStats s;
  s.puts = puts_.load();
  s.gets = gets_.load();
  s.get_misses = get_misses_.load();
  s.bytes_in = bytes_in_.load();
  s.bytes_out = bytes_out_.load();
  s.keys = size();
  return s;
}

wire::Response Store::apply(const wire::Message& msg) {
  wire::Response r;
  switch (msg.opcode) {
    case wire::Opcode::Put:
      if (!msg.payload) {
        r.status = wire::Status::BadRequest;
        break;
      }
      put(msg.key, *msg.payload);
      break;
    case wire::Opcode::Get:
      if (auto t = get(msg.key)) {
        r.payload = *t;
      } else {
        r.status = wire::Status::NotFound;
      }
      break;
    case wire::Opcode::Exists:
      r.exists_flag = exists(msg.key) ? 1 : 0;
      break;
    case wire::Opcode::Del:
      del(msg.key);
      break;
    case wire::Opcode::Ping:
      break;
  }
  return r;
}

// --- Server -----------------------------------------------------------------

Server::Server(std::shared_ptr<Store> store) : store_(std::move(store)) {}

Server::~Server() { stop(); }

void Server::start(const Endpoint& bind, std::size_t max_connections) {
  if (running_) throw std::logic_error("server already running");
  max_connections_ = max_connections;
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw BindFailure(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  try {
    addr = resolve(bind);
  } catch (const std::exception& e) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw BindFailure(e.what());
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listen_fd_, 512) != 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw BindFailure("bind " + bind.str() + ": " + err);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  bound_.host = bind.host.empty() || bind.host == "0.0.0.0" ? "127.0.0.1" : bind.host;
  bound_.port = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread(&Server::accept_loop, this);
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::list<std::pair<int, std::thread>> conns;
  {
    std::lock_guard lock(conn_mu_);
    conns.swap(connections_);
  }
  for (auto& [fd, th] : conns) ::shutdown(fd, SHUT_RDWR);
  for (auto& [fd, th] : conns) {
    if (th.joinable()) th.join();
    ::close(fd);
  }
}

void Server::accept_loop() {
  while (running_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 50);
    if (ready <= 0) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    if (active_.load() >= max_connections_) {
      spdlog::warn("broker: refusing connection, {} active", active_.load());
      ::close(fd);
      continue;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    active_.fetch_add(1);
    std::lock_guard lock(conn_mu_);
    // Reap finished connection threads so the list tracks live connections only.
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (it->first < 0) {
        if (it->second.joinable()) it->second.join();
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
    connections_.emplace_back(fd, std::thread());
    connections_.back().second = std::thread(&Server::serve_connection, this, fd);
  }
}

void Server::serve_connection(int fd) {
  FdSource src{fd};
  wire::FrameReader reader(src);
  try {
    while (running_) {
      const auto msg = reader.read_message();
      const auto resp = store_->apply(msg);
      send_all(fd, wire::encode_response(resp));
    }
  } catch (const ConnectionLost&) {
  } catch (const wire::WireError& e) {
    spdlog::warn("broker: closing connection on protocol error: {}", e.what());
  } catch (const std::exception& e) {
    spdlog::error("broker: connection error: {}", e.what());
  }
  active_.fetch_sub(1);
  std::lock_guard lock(conn_mu_);
  for (auto& c : connections_) {
    if (c.first == fd) {
      ::close(fd);
      c.first = -1;
      c.second.detach();
      break;
    }
  }
}

// --- Client -----------------------------------------------------------------

Client::Client(const Endpoint& ep, std::chrono::milliseconds connect_timeout) {
  const auto addr = resolve(ep);
  const auto deadline = std::chrono::steady_clock::now() + connect_timeout;
  std::string last_error;
  do {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw ConnectionLost(std::string("socket: ") + std::strerror(errno));
    if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
      const int one = 1;
      ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return;
    }
    last_error = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    std::this_thread::sleep_for(20ms);
  } while (std::chrono::steady_clock::now() < deadline);
  throw ConnectionLost("connect " + ep.str() + ": " + last_error);
}

Client::~Client() { close(); }

Client::Client(Client&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Client& Client::operator=(Client&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

void Client::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

wire::Response Client::request(const wire::Message& msg) {
  if (fd_ < 0) throw ConnectionLost("client not connected");
  const auto frame = wire::encode_message(msg);
  try {
    send_all(fd_, frame);
    FdSource src{fd_};
    wire::FrameReader reader(src);
    return reader.read_response();
  } catch (const ConnectionLost&) {
    close();
    throw;
  }
}

void Client::put(const std::string& key, const wire::Tensor& tensor) {
  const auto r = request({wire::Opcode::Put, key, tensor});
  if (r.status != wire::Status::Ok) throw std::runtime_error(std::string("PUT failed: ") + to_string(r.status));
}

std::optional<wire::Tensor> Client::get(const std::string& key) {
  auto r = request({wire::Opcode::Get, key, std::nullopt});
  if (r.status == wire::Status::NotFound) return std::nullopt;
  if (r.status != wire::Status::Ok || !r.payload) {
    throw std::runtime_error(std::string("GET failed: ") + to_string(r.status));
  }
  return std::move(r.payload);
}

bool Client::exists(const std::string& key) {
  const auto r = request({wire::Opcode::Exists, key, std::nullopt});
  if (r.status != wire::Status::Ok || !r.exists_flag) throw std::runtime_error("EXISTS failed");
  return *r.exists_flag != 0;
}

void Client::del(const std::string& key) {
  const auto r = request({wire::Opcode::Del, key, std::nullopt});
  if (r.status != wire::Status::Ok) throw std::runtime_error("DEL failed");
}

void Client::ping() {
  const auto r = request({wire::Opcode::Ping, "ping", std::nullopt});
  if (r.status != wire::Status::Ok) throw std::runtime_error("PING failed");
}

wire::Tensor Client::poll(const std::string& key, std::chrono::milliseconds interval,
                          std::chrono::milliseconds timeout) {
  const auto start = std::chrono::steady_clock::now();
  while (true) {
    if (auto t = get(key)) return std::move(*t);
    const auto elapsed = std::chrono::steady_clock::now() - start;
    if (elapsed >= timeout) throw Timeout("poll '" + key + "' timed out");
    const auto left = timeout - elapsed;
    std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(interval, left));
  }
}

}  // namespace rlx::broker
