#pragma once

// TCP front end of the bridge. One thread advances the session on a
// wall-clock timer; one I/O thread multiplexes the listening socket and all
// clients with poll(). Commands travel through an ordered queue drained once
// per tick. Frames are fanned out into bounded per-client buffers; a client
// whose buffer is full misses frames rather than stalling the tick loop.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "orthosis/bridge_codec.hpp"
#include "orthosis/bridge_session.hpp"
#include "orthosis/errors.hpp"

namespace orthosis::bridge {

class BridgeServer {
 public:
  using Clock = std::chrono::steady_clock;

  static constexpr std::size_t kMaxOutboundBytes = 256 * 1024;
  static constexpr std::size_t kMaxLineBytes = 64 * 1024;

  explicit BridgeServer(session::SessionConfig cfg) : session_(std::move(cfg)) {}

  ~BridgeServer() { stop(); }

  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  /// Must be called before start().
  BridgeSession& session() { return session_; }

  /// Keep frames, tick counters and command latencies in memory.
  void record_frames(bool on) { record_ = on; }

  /// Binds 127.0.0.1:`port` (0 picks a free port) and starts both threads.
  void start(int port, bool loopback_only = true) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
    int yes = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    addr.sin_addr.s_addr = htonl(loopback_only ? INADDR_LOOPBACK : INADDR_ANY);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
      const std::string reason = std::strerror(errno);
      close_fd(listen_fd_);
      throw Error("cannot bind port " + std::to_string(port) + ": " + reason);
    }
    if (::listen(listen_fd_, 16) < 0) {
      const std::string reason = std::strerror(errno);
      close_fd(listen_fd_);
      throw Error("listen: " + reason);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    set_nonblocking(listen_fd_);
    if (::pipe(wake_) < 0) throw Error(std::string("pipe: ") + std::strerror(errno));
    set_nonblocking(wake_[0]);
    set_nonblocking(wake_[1]);

    running_ = true;
    io_thread_ = std::thread([this] { io_loop(); });
    tick_thread_ = std::thread([this] { tick_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    wake();
    if (tick_thread_.joinable()) tick_thread_.join();
    if (io_thread_.joinable()) io_thread_.join();
    std::lock_guard lock(clients_mutex_);
    for (auto& [fd, _] : clients_) ::close(fd);
    clients_.clear();
    close_fd(listen_fd_);
    close_fd(wake_[0]);
    close_fd(wake_[1]);
  }

  int port() const noexcept { return port_; }
  std::size_t ticks() const noexcept { return ticks_.load(); }

  /// Seconds between receipt of each applied command and the wall time of
  /// the tick that applied it.
  std::vector<double> command_latencies() const {
    std::lock_guard lock(stats_mutex_);
    return latencies_;
  }

  /// Tick counters observed by the loop, in order. Used to check that no
  /// tick is skipped or repeated.
  std::vector<std::size_t> tick_history() const {
    std::lock_guard lock(stats_mutex_);
    return tick_history_;
  }

  std::vector<StateFrame> recorded_frames() const {
    std::lock_guard lock(stats_mutex_);
    return frames_;
  }

  std::size_t dropped_frames() const noexcept { return dropped_.load(); }

 private:
  struct Pending {
    Command command;
    Clock::time_point received;
  };

  struct Client {
    std::string inbound;
    std::string outbound;
  };

  static void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL, 0) | O_NONBLOCK); }

  static void close_fd(int& fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }

  void wake() {
    if (wake_[1] >= 0) {
      const char c = 1;
      [[maybe_unused]] auto n = ::write(wake_[1], &c, 1);
    }
  }

  void tick_loop() {
    const auto period = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(session_.config().sim.tick()));
    auto next = Clock::now();
    while (running_) {
      std::this_thread::sleep_until(next);

      std::deque<Pending> batch;
      {
        std::lock_guard lock(queue_mutex_);
        batch.swap(queue_);
      }
      const auto now = Clock::now();
      std::vector<double> applied;
      for (const auto& p : batch) {
        try {
          session_.apply(p.command);
        } catch (const Error&) {
          // Validated at decode time; a late failure leaves the state untouched.
        }
        applied.push_back(std::chrono::duration<double>(now - p.received).count());
      }

      const auto before = session_.ticks();
      const auto frame = session_.tick();
      ticks_.store(session_.ticks());
      {
        std::lock_guard lock(stats_mutex_);
        if (record_) {
          latencies_.insert(latencies_.end(), applied.begin(), applied.end());
          tick_history_.push_back(before);
          if (frame) frames_.push_back(*frame);
        }
      }
      if (frame) broadcast(encode(*frame));
      next += period;
    }
  }

  void broadcast(const std::string& line) {
    {
      std::lock_guard lock(clients_mutex_);
      for (auto& [fd, client] : clients_) {
        if (client.outbound.size() + line.size() + 1 > kMaxOutboundBytes) {
          ++dropped_;
          continue;
        }
        client.outbound += line;
        client.outbound += '\n';
      }
    }
    wake();
  }

  void queue_reply(int fd, const std::string& line) {
    auto it = clients_.find(fd);
    if (it == clients_.end()) return;
    if (it->second.outbound.size() + line.size() + 1 > kMaxOutboundBytes) return;
    it->second.outbound += line;
    it->second.outbound += '\n';
  }

  void handle_line(int fd, std::string_view line, Clock::time_point received) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) return;
    try {
      Command cmd = decode_command(line, session_.config().sim.anatomical_limit);
      std::lock_guard lock(queue_mutex_);
      queue_.push_back({std::move(cmd), received});
    } catch (const CodecError& e) {
      queue_reply(fd, encode_error(e.what()));
    }
  }

  void io_loop() {
    std::vector<pollfd> fds;
    char buf[4096];
    while (running_) {
      fds.clear();
      fds.push_back({listen_fd_, POLLIN, 0});
      fds.push_back({wake_[0], POLLIN, 0});
      {
        std::lock_guard lock(clients_mutex_);
        for (const auto& [fd, client] : clients_) {
          short events = POLLIN;
          if (!client.outbound.empty()) events |= POLLOUT;
          fds.push_back({fd, events, 0});
        }
      }
      if (::poll(fds.data(), fds.size(), 50) < 0) {
        if (errno == EINTR) continue;
        break;
      }
      if (fds[1].revents & POLLIN) {
        while (::read(wake_[0], buf, sizeof(buf)) > 0) {
        }
      }
      if (fds[0].revents & POLLIN) accept_clients();

      std::vector<int> dead;
      std::lock_guard lock(clients_mutex_);
      for (std::size_t i = 2; i < fds.size(); ++i) {
        const int fd = fds[i].fd;
        auto it = clients_.find(fd);
        if (it == clients_.end()) continue;
        if (fds[i].revents & (POLLERR | POLLHUP | POLLNVAL)) {
          if (!(fds[i].revents & POLLIN)) {
            dead.push_back(fd);
            continue;
          }
        }
        if (fds[i].revents & POLLIN) {
          const auto received = Clock::now();
          const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
          if (n <= 0) {
            if (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK)) {
              dead.push_back(fd);
              continue;
            }
          } else {
            auto& in = it->second.inbound;
            in.append(buf, static_cast<std::size_t>(n));
            std::size_t pos;
            while ((pos = in.find('\n')) != std::string::npos) {
              const std::string line = in.substr(0, pos);
              in.erase(0, pos + 1);
              handle_line(fd, line, received);
            }
            if (in.size() > kMaxLineBytes) {
              in.clear();
              queue_reply(fd, encode_error("line too long"));
            }
          }
        }
        auto& out = it->second.outbound;
        if (!out.empty()) {
          const ssize_t n = ::send(fd, out.data(), out.size(), MSG_NOSIGNAL);
          if (n > 0) {
            out.erase(0, static_cast<std::size_t>(n));
          } else if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) {
            dead.push_back(fd);
          }
        }
      }
      for (int fd : dead) {
        ::close(fd);
        clients_.erase(fd);
      }
    }
  }

  void accept_clients() {
    while (true) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) return;
      set_nonblocking(fd);
      int yes = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
      std::lock_guard lock(clients_mutex_);
      clients_.emplace(fd, Client{});
    }
  }

  BridgeSession session_;
  bool record_ = false;
  int listen_fd_ = -1;
  int wake_[2] = {-1, -1};
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::size_t> ticks_{0};
  std::atomic<std::size_t> dropped_{0};
  std::thread io_thread_;
  std::thread tick_thread_;

  std::mutex queue_mutex_;
  std::deque<Pending> queue_;

  std::mutex clients_mutex_;
  std::map<int, Client> clients_;

  mutable std::mutex stats_mutex_;
  std::vector<double> latencies_;
  std::vector<std::size_t> tick_history_;
  std::vector<StateFrame> frames_;
};

}  // namespace orthosis::bridge
