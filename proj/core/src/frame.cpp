#include "optmig/frame.hpp"

#include <algorithm>

#include "optmig/bytes.hpp"
#include "optmig/error.hpp"

namespace optmig {

std::string_view to_string(FrameType type) noexcept {
  switch (type) {
    case FrameType::Hello: return "HELLO";
    case FrameType::KeyBundle: return "KEY_BUNDLE";
    case FrameType::MBuff: return "MBUFF";
    case FrameType::Page: return "PAGE";
    case FrameType::PageRequest: return "PAGE_REQUEST";
    case FrameType::PageResponse: return "PAGE_RESPONSE";
    case FrameType::Done: return "DONE";
    case FrameType::Ack: return "ACK";
    case FrameType::Abort: return "ABORT";
  }
  return "?";
}

bool is_known_frame_type(std::uint8_t raw) noexcept { return raw >= 0x01 && raw <= 0x09; }

void encode_frame_into(const Frame& frame, std::vector<std::byte>& out) {
  if (frame.body.size() >= kMaxFrameLength) {
    throw Error(ErrorCode::ProtocolError, "frame body too large");
  }
  ByteWriter w(out);
  w.u32(static_cast<std::uint32_t>(frame.body.size() + 1));
  w.u8(static_cast<std::uint8_t>(frame.type));
  w.bytes(frame.body);
}

std::vector<std::byte> encode_frame(const Frame& frame) {
  std::vector<std::byte> out;
  out.reserve(frame.wire_size());
  encode_frame_into(frame, out);
  return out;
}

DecodeResult decode_frame(std::span<const std::byte> input) {
  DecodeResult res;
  if (input.size() < 4) return res;
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= std::uint32_t(std::to_integer<std::uint8_t>(input[i])) << (8 * i);
  if (len == 0 || len > kMaxFrameLength) {
    res.status = DecodeStatus::ProtocolError;
    res.error = "bad frame length " + std::to_string(len);
    return res;
  }
  if (input.size() < 5) return res;
  const auto raw = std::to_integer<std::uint8_t>(input[4]);
  if (!is_known_frame_type(raw)) {
    res.status = DecodeStatus::ProtocolError;
    res.error = "unknown frame type " + std::to_string(raw);
    return res;
  }
  if (input.size() - 4 < len) return res;
  res.status = DecodeStatus::Ok;
  res.frame.type = static_cast<FrameType>(raw);
  res.frame.body.assign(input.begin() + 5, input.begin() + 4 + len);
  res.consumed = 4 + std::size_t{len};
  return res;
}

void FrameDecoder::feed(std::span<const std::byte> bytes) {
  if (failed_) return;
  // Compact once the consumed prefix dominates the buffer.
  if (pos_ > 0 && pos_ >= buf_.size() / 2) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

DecodeStatus FrameDecoder::next(Frame& out) {
  if (failed_) return DecodeStatus::ProtocolError;
  DecodeResult r = decode_frame(std::span<const std::byte>(buf_).subspan(pos_));
  if (r.status == DecodeStatus::ProtocolError) {
    failed_ = true;
    error_ = r.error;
    return r.status;
  }
  if (r.status == DecodeStatus::Ok) {
    pos_ += r.consumed;
    out = std::move(r.frame);
    if (pos_ == buf_.size()) {
      buf_.clear();
      pos_ = 0;
    }
  }
  return r.status;
}

Frame make_hello() { return Frame{FrameType::Hello, {std::byte{kProtocolVersion}}}; }

Frame make_blob_frame(FrameType type, std::span<const std::byte> blob) {
  return Frame{type, std::vector<std::byte>(blob.begin(), blob.end())};
}

Frame make_page_frame(FrameType type, PageIndex index, std::span<const std::byte> bundle) {
  Frame f{type, {}};
  f.body.reserve(8 + bundle.size());
  ByteWriter w(f.body);
  w.u64(index);
  w.bytes(bundle);
  return f;
}

Frame make_page_request(PageIndex index) {
  Frame f{FrameType::PageRequest, {}};
  ByteWriter(f.body).u64(index);
  return f;
}

Frame make_ack(PageIndex index, FrameType acked) {
  Frame f{FrameType::Ack, {}};
  ByteWriter w(f.body);
  w.u64(index);
  w.u8(static_cast<std::uint8_t>(acked));
  return f;
}

Frame make_done() { return Frame{FrameType::Done, {}}; }

Frame make_abort(std::string_view reason) {
  Frame f{FrameType::Abort, {}};
  const auto* p = reinterpret_cast<const std::byte*>(reason.data());
  f.body.assign(p, p + reason.size());
  return f;
}

namespace {

void expect_type(const Frame& f, std::initializer_list<FrameType> types) {
  if (std::find(types.begin(), types.end(), f.type) == types.end()) {
    throw Error(ErrorCode::ProtocolError, "unexpected frame " + std::string(to_string(f.type)));
  }
}

}  // namespace

PageBody parse_page_body(const Frame& frame) {
  expect_type(frame, {FrameType::Page, FrameType::PageResponse});
  if (frame.body.size() < 8) throw Error(ErrorCode::ProtocolError, "page frame too short");
  ByteReader r(frame.body);
  PageBody b;
  b.index = r.u64();
  b.bundle = std::span<const std::byte>(frame.body).subspan(8);
  return b;
}

PageIndex parse_page_request(const Frame& frame) {
  expect_type(frame, {FrameType::PageRequest});
  if (frame.body.size() != 8) throw Error(ErrorCode::ProtocolError, "bad PAGE_REQUEST body");
  return ByteReader(frame.body).u64();
}

AckBody parse_ack(const Frame& frame) {
  expect_type(frame, {FrameType::Ack});
  if (frame.body.size() != 9) throw Error(ErrorCode::ProtocolError, "bad ACK body");
  ByteReader r(frame.body);
  AckBody a;
  a.index = r.u64();
  const std::uint8_t raw = r.u8();
  if (raw != static_cast<std::uint8_t>(FrameType::Page) &&
      raw != static_cast<std::uint8_t>(FrameType::PageResponse)) {
    throw Error(ErrorCode::ProtocolError, "ACK for a non-page frame");
  }
  a.acked = static_cast<FrameType>(raw);
  return a;
}

std::uint8_t parse_hello(const Frame& frame) {
  expect_type(frame, {FrameType::Hello});
  if (frame.body.size() != 1) throw Error(ErrorCode::ProtocolError, "bad HELLO body");
  return std::to_integer<std::uint8_t>(frame.body[0]);
}

}  // namespace optmig
