#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include "optmig/frame.hpp"
#include "optmig/sim_link.hpp"

namespace optmig {

// Real-mode endpoint: frames over a TCP stream socket. send() is safe from
// several threads; a dedicated sender drains urgent frames before normal ones.
class SocketLink {
 public:
  explicit SocketLink(int fd);
  ~SocketLink();

  SocketLink(const SocketLink&) = delete;
  SocketLink& operator=(const SocketLink&) = delete;

  // Two connected endpoints over 127.0.0.1.
  static std::pair<std::unique_ptr<SocketLink>, std::unique_ptr<SocketLink>> loopback_pair();
  static std::unique_ptr<SocketLink> connect_to(const std::string& host, std::uint16_t port);

  void send(Frame frame, Priority priority = Priority::Normal);
  // Blocks for the next frame; nullopt on timeout. Throws TransportFailure
  // when the peer has closed and ProtocolError on a malformed stream.
  std::optional<Frame> recv(std::chrono::milliseconds timeout = std::chrono::milliseconds{-1});
  // Waits for queued frames to reach the socket.
  void flush();
  void close();

  std::uint64_t bytes_sent() const;
  std::uint64_t frames_sent() const;

 private:
  void sender_loop();

  int fd_;
  FrameDecoder decoder_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Frame> urgent_;
  std::deque<Frame> normal_;
  bool closing_ = false;
  bool broken_ = false;
  bool writing_ = false;
  std::uint64_t bytes_sent_ = 0;
  std::uint64_t frames_sent_ = 0;
  std::thread sender_;
};

class SocketListener {
 public:
  // Port 0 picks an ephemeral port.
  explicit SocketListener(std::uint16_t port = 0, const std::string& host = "127.0.0.1");
  ~SocketListener();
  SocketListener(const SocketListener&) = delete;
  SocketListener& operator=(const SocketListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  std::unique_ptr<SocketLink> accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace optmig
