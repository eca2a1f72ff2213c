#include "optmig/socket_link.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <future>

#include "optmig/error.hpp"

namespace optmig {
namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  throw Error(ErrorCode::TransportFailure, what + ": " + std::strerror(errno));
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

bool write_all(int fd, std::span<const std::byte> data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::send(fd, data.data() + done, data.size() - done, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    done += static_cast<std::size_t>(n);
  }
  return true;
}

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw Error(ErrorCode::ConfigInvalid, "not an IPv4 address: " + host);
  }
  return addr;
}

}  // namespace

SocketLink::SocketLink(int fd) : fd_(fd) {
  set_nodelay(fd_);
  sender_ = std::thread([this] { sender_loop(); });
}

SocketLink::~SocketLink() {
  close();
  if (sender_.joinable()) sender_.join();
  if (fd_ >= 0) ::close(fd_);
}

std::pair<std::unique_ptr<SocketLink>, std::unique_ptr<SocketLink>> SocketLink::loopback_pair() {
  SocketListener listener;
  auto accepted = std::async(std::launch::async, [&] { return listener.accept(); });
  auto client = connect_to("127.0.0.1", listener.port());
  return {std::move(client), accepted.get()};
}

std::unique_ptr<SocketLink> SocketLink::connect_to(const std::string& host, std::uint16_t port) {
  const sockaddr_in addr = make_addr(host, port);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int saved = errno;
    ::close(fd);
    errno = saved;
    sys_fail("connect");
  }
  return std::make_unique<SocketLink>(fd);
}

void SocketLink::send(Frame frame, Priority priority) {
  {
    std::scoped_lock lock(mu_);
    if (closing_ || broken_) throw Error(ErrorCode::TransportFailure, "link closed");
    (priority == Priority::Urgent ? urgent_ : normal_).push_back(std::move(frame));
  }
  cv_.notify_all();
}

void SocketLink::sender_loop() {
  std::vector<std::byte> wire;
  for (;;) {
    Frame frame;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return closing_ || !urgent_.empty() || !normal_.empty(); });
      if (urgent_.empty() && normal_.empty()) break;
      auto& q = urgent_.empty() ? normal_ : urgent_;
      frame = std::move(q.front());
      q.pop_front();
      writing_ = true;
    }
    wire.clear();
    encode_frame_into(frame, wire);
    const bool ok = write_all(fd_, wire);
    {
      std::scoped_lock lock(mu_);
      writing_ = false;
      if (ok) {
        bytes_sent_ += wire.size();
        ++frames_sent_;
      } else {
        broken_ = true;
        urgent_.clear();
        normal_.clear();
      }
    }
    cv_.notify_all();
    if (!ok) break;
  }
  ::shutdown(fd_, SHUT_WR);
}

void SocketLink::flush() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return broken_ || (urgent_.empty() && normal_.empty() && !writing_); });
  if (broken_) throw Error(ErrorCode::TransportFailure, "peer closed while flushing");
}

std::optional<Frame> SocketLink::recv(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::byte buf[64 * 1024];
  for (;;) {
    Frame frame;
    const DecodeStatus st = decoder_.next(frame);
    if (st == DecodeStatus::Ok) return frame;
    if (st == DecodeStatus::ProtocolError) {
      throw Error(ErrorCode::ProtocolError, decoder_.error());
    }
    int wait_ms = -1;
    if (timeout.count() >= 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      wait_ms = static_cast<int>(left.count());
    }
    pollfd pfd{fd_, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, wait_ms);
    if (pr < 0) {
      if (errno == EINTR) continue;
      sys_fail("poll");
    }
    if (pr == 0) return std::nullopt;
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      sys_fail("recv");
    }
    if (n == 0) throw Error(ErrorCode::TransportFailure, "peer closed the connection");
    decoder_.feed(std::span<const std::byte>(buf, static_cast<std::size_t>(n)));
  }
}

void SocketLink::close() {
  {
    std::scoped_lock lock(mu_);
    closing_ = true;
  }
  cv_.notify_all();
}

std::uint64_t SocketLink::bytes_sent() const {
  std::scoped_lock lock(mu_);
  return bytes_sent_;
}

std::uint64_t SocketLink::frames_sent() const {
  std::scoped_lock lock(mu_);
  return frames_sent_;
}

SocketListener::SocketListener(std::uint16_t port, const std::string& host) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) sys_fail("socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = make_addr(host, port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) sys_fail("bind");
  if (::listen(fd_, 4) != 0) sys_fail("listen");
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

SocketListener::~SocketListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<SocketLink> SocketListener::accept() {
  for (;;) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) return std::make_unique<SocketLink>(fd);
    if (errno != EINTR) sys_fail("accept");
  }
}

}  // namespace optmig
