#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optmig/types.hpp"

namespace optmig {

enum class FrameType : std::uint8_t {
  Hello = 0x01,
  KeyBundle = 0x02,
  MBuff = 0x03,
  Page = 0x04,
  PageRequest = 0x05,
  PageResponse = 0x06,
  Done = 0x07,
  Ack = 0x08,
  Abort = 0x09,
};

std::string_view to_string(FrameType type) noexcept;
bool is_known_frame_type(std::uint8_t raw) noexcept;

inline constexpr std::uint8_t kProtocolVersion = 0x01;
inline constexpr std::size_t kFrameHeader = 5;
// Largest accepted length field; a key bundle for a 16 GiB heap fits.
inline constexpr std::uint32_t kMaxFrameLength = 160u * 1024 * 1024;

struct Frame {
  FrameType type = FrameType::Hello;
  std::vector<std::byte> body;

  std::size_t wire_size() const noexcept { return kFrameHeader + body.size(); }
  friend bool operator==(const Frame&, const Frame&) = default;
};

// Wire image: [u32 LE length = |body| + 1][u8 type][body].
std::vector<std::byte> encode_frame(const Frame& frame);
void encode_frame_into(const Frame& frame, std::vector<std::byte>& out);

enum class DecodeStatus : std::uint8_t { Ok, NeedMoreBytes, ProtocolError };

struct DecodeResult {
  DecodeStatus status = DecodeStatus::NeedMoreBytes;
  Frame frame;
  std::size_t consumed = 0;
  std::string error;
};

// Total over arbitrary input: never throws on malformed bytes.
DecodeResult decode_frame(std::span<const std::byte> input);

// Incremental decoder for a byte stream.
class FrameDecoder {
 public:
  void feed(std::span<const std::byte> bytes);
  // Ok fills `out`; NeedMoreBytes waits for input; ProtocolError is sticky.
  DecodeStatus next(Frame& out);
  const std::string& error() const noexcept { return error_; }
  std::size_t buffered() const noexcept { return buf_.size() - pos_; }

 private:
  std::vector<std::byte> buf_;
  std::size_t pos_ = 0;
  bool failed_ = false;
  std::string error_;
};

Frame make_hello();
Frame make_blob_frame(FrameType type, std::span<const std::byte> blob);
Frame make_page_frame(FrameType type, PageIndex index, std::span<const std::byte> bundle);
Frame make_page_request(PageIndex index);
Frame make_ack(PageIndex index, FrameType acked);
Frame make_done();
Frame make_abort(std::string_view reason);

struct PageBody {
  PageIndex index = 0;
  std::span<const std::byte> bundle;
};
struct AckBody {
  PageIndex index = 0;
  FrameType acked = FrameType::Page;
};

// Body parsers throw ProtocolError on a malformed body.
PageBody parse_page_body(const Frame& frame);
PageIndex parse_page_request(const Frame& frame);
AckBody parse_ack(const Frame& frame);
std::uint8_t parse_hello(const Frame& frame);

}  // namespace optmig
