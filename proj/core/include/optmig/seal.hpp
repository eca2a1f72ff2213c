#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <span>
#include <vector>

#include "optmig/types.hpp"

namespace optmig {

inline constexpr std::size_t kKeySize = 32;
inline constexpr std::size_t kIvSize = 16;
inline constexpr std::size_t kDigestSize = 32;
inline constexpr std::size_t kSealedPageBody = kPageSize + kDigestSize;
inline constexpr std::uint32_t kSealVersion = 1;
// [u32 version][16-byte IV][u64 ciphertext_len][ciphertext]
inline constexpr std::size_t kBundleHeader = 4 + kIvSize + 8;
inline constexpr std::size_t kSealedPageBundle = kBundleHeader + kSealedPageBody;

using Key = std::array<std::byte, kKeySize>;
using Iv = std::array<std::byte, kIvSize>;
using Digest = std::array<std::byte, kDigestSize>;

// Per-migration key material: a master key and one key per heap page.
struct KeyArr {
  Key master_key{};
  std::vector<Key> page_keys;
};

Key random_key();
KeyArr generate_keys(std::size_t num_pages);
Digest sha256(std::span<const std::byte> data);

struct SealedPage {
  PageIndex page_index = 0;
  Iv iv{};
  std::vector<std::byte> ciphertext;  // AES-256-CTR(page || SHA-256(page))
};

// Hash-then-encrypt of one 4 KiB page under its page key and a fresh IV.
SealedPage seal_page(PageIndex index, std::span<const std::byte> page, const Key& key);
// Throws IntegrityFailure when the embedded digest does not match; a wrong
// key or a flipped bit anywhere in IV or ciphertext surfaces the same way.
Page unseal_page(const SealedPage& sealed, const Key& key);
void unseal_page_into(const SealedPage& sealed, const Key& key, std::span<std::byte, kPageSize> out);

// Generic sealed bundle used for pages on the wire, MBuff, and the key bundle.
std::vector<std::byte> seal_blob(std::span<const std::byte> plain, const Key& key);
std::vector<std::byte> unseal_blob(std::span<const std::byte> bundle, const Key& key);

std::vector<std::byte> encode_sealed_page(const SealedPage& sealed);
SealedPage decode_sealed_page(PageIndex index, std::span<const std::byte> bundle);

std::vector<std::byte> wrap_key_bundle(const KeyArr& keys);
std::vector<Key> unwrap_key_bundle(std::span<const std::byte> bundle, const Key& master_key);

// Stand-in for an attested key channel: the master key leaves it exactly once.
class KeyDeliveryChannel {
 public:
  explicit KeyDeliveryChannel(const Key& master_key) : key_(master_key) {}
  ~KeyDeliveryChannel();
  KeyDeliveryChannel(const KeyDeliveryChannel&) = delete;
  KeyDeliveryChannel& operator=(const KeyDeliveryChannel&) = delete;

  Key deliver();
  bool delivered() const noexcept { return delivered_.load(std::memory_order_acquire); }

 private:
  Key key_;
  std::atomic<bool> delivered_{false};
};

void secure_wipe(std::span<std::byte> bytes) noexcept;

}  // namespace optmig
