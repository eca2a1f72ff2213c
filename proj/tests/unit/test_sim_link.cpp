#include <gtest/gtest.h>

#include "optmig/sim_link.hpp"

using namespace optmig;

namespace {

struct Fixture {
  sim::EventLoop loop;
  LinkModel model;
  std::unique_ptr<SimLink> link;
  std::vector<std::pair<Nanos, Frame>> at_dst;

  explicit Fixture(double bw = 1e9, Nanos latency = Nanos{1000}) {
    model.bandwidth = bw;
    model.one_way_latency = latency;
    link = std::make_unique<SimLink>(loop, model);
    link->set_receiver(Side::Destination,
                       [this](Frame&& f) { at_dst.emplace_back(loop.now(), std::move(f)); });
  }
};

Frame sized(FrameType t, std::size_t body, std::uint8_t tag = 0) {
  Frame f{t, std::vector<std::byte>(body, std::byte{tag})};
  return f;
}

}  // namespace

TEST(SimLink, SerializationTimeIsBytesOverBandwidth) {
  LinkModel m;
  m.bandwidth = 125e6;
  EXPECT_EQ(m.serialization_time(125'000'000), Nanos{1'000'000'000});
  EXPECT_EQ(m.serialization_time(4149), Nanos{33'192});
}

TEST(SimLink, ArrivalIsTransmitPlusLatency) {
  Fixture fx(1e9, Nanos{5000});
  fx.link->send(Side::Source, sized(FrameType::Page, 995));  // 1000 wire bytes -> 1000 ns
  fx.link->send(Side::Source, sized(FrameType::Page, 1995));
  fx.loop.run();
  ASSERT_EQ(fx.at_dst.size(), 2u);
  EXPECT_EQ(fx.at_dst[0].first, Nanos{1000 + 5000});
  EXPECT_EQ(fx.at_dst[1].first, Nanos{1000 + 2000 + 5000});
  EXPECT_EQ(fx.link->stats(Side::Source).wire_bytes, 3000u);
  EXPECT_EQ(fx.link->stats(Side::Source).count(FrameType::Page), 2u);
  EXPECT_TRUE(fx.link->idle(Side::Source));
}

TEST(SimLink, UrgentJumpsTheQueueButNotTheWire) {
  Fixture fx;
  for (std::uint8_t i = 0; i < 3; ++i) fx.link->send(Side::Source, sized(FrameType::Page, 100, i));
  fx.link->send(Side::Source, make_page_request(1), Priority::Urgent);
  fx.link->send(Side::Source, sized(FrameType::PageResponse, 10, 9), Priority::Urgent);
  fx.loop.run();
  std::vector<FrameType> types;
  for (auto& [t, f] : fx.at_dst) types.push_back(f.type);
  EXPECT_EQ(types, (std::vector<FrameType>{FrameType::Page, FrameType::PageRequest,
                                           FrameType::PageResponse, FrameType::Page,
                                           FrameType::Page}));
  EXPECT_EQ(fx.at_dst[3].second.body[0], std::byte{1});
  EXPECT_EQ(fx.at_dst[4].second.body[0], std::byte{2});
}

TEST(SimLink, DirectionsAreIndependent) {
  Fixture fx(1e6, Nanos{0});
  std::vector<Nanos> at_src;
  fx.link->set_receiver(Side::Source, [&](Frame&&) { at_src.push_back(fx.loop.now()); });
  fx.link->send(Side::Source, sized(FrameType::Page, 995));
  fx.link->send(Side::Destination, make_ack(1, FrameType::Page));
  fx.loop.run();
  ASSERT_EQ(at_src.size(), 1u);
  EXPECT_EQ(at_src[0], Nanos{14'000});  // 14 wire bytes at 1 MB/s
  EXPECT_EQ(fx.at_dst[0].first, Nanos{1'000'000});
}

TEST(SimLink, FailureNotifiesBothSidesAndDropsTraffic) {
  Fixture fx;
  int failures = 0;
  fx.link->set_failure_handler(Side::Source, [&](const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TransportFailure);
    ++failures;
  });
  fx.link->set_failure_handler(Side::Destination, [&](const Error&) { ++failures; });
  fx.link->fail_after_frames(Side::Source, 2);
  for (int i = 0; i < 5; ++i) fx.link->send(Side::Source, sized(FrameType::Page, 10));
  fx.loop.run();
  EXPECT_EQ(failures, 2);
  EXPECT_LE(fx.at_dst.size(), 2u);
  EXPECT_TRUE(fx.link->down());
  EXPECT_THROW(fx.link->send(Side::Source, make_done()), Error);
}

TEST(SimLink, CorruptedWireBecomesAProtocolFailure) {
  Fixture fx;
  std::string reason;
  fx.link->set_failure_handler(Side::Destination, [&](const Error& e) { reason = e.what(); });
  fx.link->set_tamper([](Side, std::vector<std::byte>& wire) { wire[4] = std::byte{0x7f}; });
  fx.link->send(Side::Source, make_done());
  fx.loop.run();
  EXPECT_TRUE(fx.at_dst.empty());
  EXPECT_NE(reason.find("protocol error"), std::string::npos);
}

TEST(SimLink, TapSeesEveryWireImage) {
  Fixture fx;
  std::size_t seen = 0;
  fx.link->set_tap([&](Side from, std::span<const std::byte> wire) {
    EXPECT_EQ(from, Side::Source);
    seen += wire.size();
  });
  fx.link->send(Side::Source, Frame{FrameType::Hello, {}});
  fx.loop.run();
  EXPECT_EQ(seen, 5u);
}
