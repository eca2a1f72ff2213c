#include <benchmark/benchmark.h>

#include "optmig/frame.hpp"
#include "optmig/seal.hpp"

namespace {

using namespace optmig;

void BM_EncodePageFrame(benchmark::State& state) {
  const std::vector<std::byte> bundle(kSealedPageBundle, std::byte{0x5a});
  std::vector<std::byte> wire;
  for (auto _ : state) {
    wire.clear();
    encode_frame_into(make_page_frame(FrameType::Page, 42, bundle), wire);
    benchmark::DoNotOptimize(wire.data());
  }
  state.SetBytesProcessed(std::int64_t(state.iterations()) * std::int64_t(kSealedPageBundle));
}
BENCHMARK(BM_EncodePageFrame);

void BM_DecodePageFrame(benchmark::State& state) {
  const std::vector<std::byte> bundle(kSealedPageBundle, std::byte{0x5a});
  const std::vector<std::byte> wire = encode_frame(make_page_frame(FrameType::Page, 42, bundle));
  for (auto _ : state) benchmark::DoNotOptimize(decode_frame(wire));
  state.SetBytesProcessed(std::int64_t(state.iterations()) * std::int64_t(wire.size()));
}
BENCHMARK(BM_DecodePageFrame);

// A stream of ACKs fed in 1500-byte chunks.
void BM_StreamDecoderAcks(benchmark::State& state) {
  std::vector<std::byte> wire;
  for (PageIndex i = 0; i < 1024; ++i) encode_frame_into(make_ack(i, FrameType::Page), wire);
  for (auto _ : state) {
    FrameDecoder dec;
    Frame f;
    std::size_t n = 0;
    for (std::size_t off = 0; off < wire.size(); off += 1500) {
      dec.feed(std::span(wire).subspan(off, std::min<std::size_t>(1500, wire.size() - off)));
      while (dec.next(f) == DecodeStatus::Ok) ++n;
    }
    benchmark::DoNotOptimize(n);
  }
  state.SetItemsProcessed(std::int64_t(state.iterations()) * 1024);
}
BENCHMARK(BM_StreamDecoderAcks);

}  // namespace
