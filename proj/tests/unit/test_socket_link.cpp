#include <gtest/gtest.h>

#include <thread>

#include "optmig/socket_link.hpp"

using namespace optmig;
using namespace std::chrono_literals;

TEST(SocketLink, LoopbackCarriesFramesInOrder) {
  auto [a, b] = SocketLink::loopback_pair();
  constexpr int kFrames = 500;
  std::thread sender([&a = a] {
    for (int i = 0; i < kFrames; ++i) {
      Frame f{FrameType::Page, std::vector<std::byte>(4152, std::byte(i & 0xff))};
      a->send(std::move(f));
    }
    a->flush();
  });
  for (int i = 0; i < kFrames; ++i) {
    auto f = b->recv(5000ms);
    ASSERT_TRUE(f.has_value());
    ASSERT_EQ(f->type, FrameType::Page);
    ASSERT_EQ(f->body.size(), 4152u);
    ASSERT_EQ(f->body[0], std::byte(i & 0xff));
  }
  sender.join();
  EXPECT_EQ(a->frames_sent(), static_cast<std::uint64_t>(kFrames));
  EXPECT_EQ(a->bytes_sent(), kFrames * (4152u + kFrameHeader));
}

TEST(SocketLink, BothDirectionsConcurrently) {
  auto [a, b] = SocketLink::loopback_pair();
  std::thread echo([&b = b] {
    for (int i = 0; i < 100; ++i) {
      auto f = b->recv(5000ms);
      if (!f) return;
      b->send(make_ack(parse_page_request(*f), FrameType::PageResponse), Priority::Urgent);
    }
  });
  for (PageIndex i = 0; i < 100; ++i) {
    a->send(make_page_request(i), Priority::Urgent);
    auto ack = a->recv(5000ms);
    ASSERT_TRUE(ack.has_value());
    EXPECT_EQ(parse_ack(*ack).index, i);
  }
  echo.join();
}

TEST(SocketLink, RecvTimesOut) {
  auto [a, b] = SocketLink::loopback_pair();
  EXPECT_FALSE(b->recv(20ms).has_value());
}

TEST(SocketLink, ClosedPeerIsATransportFailure) {
  auto [a, b] = SocketLink::loopback_pair();
  a->send(make_done());
  a.reset();
  auto f = b->recv(5000ms);
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->type, FrameType::Done);
  try {
    b->recv(5000ms);
    FAIL() << "expected TransportFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TransportFailure);
  }
  b->close();
  EXPECT_THROW(b->send(make_done()), Error);
}

TEST(SocketLink, ListenerAcceptsAnExplicitConnection) {
  SocketListener listener;
  ASSERT_NE(listener.port(), 0);
  std::unique_ptr<SocketLink> server;
  std::thread t([&] { server = listener.accept(); });
  auto client = SocketLink::connect_to("127.0.0.1", listener.port());
  t.join();
  client->send(make_hello());
  auto f = server->recv(5000ms);
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(parse_hello(*f), kProtocolVersion);
  EXPECT_THROW(SocketLink::connect_to("not-an-ip", 1), Error);
}
