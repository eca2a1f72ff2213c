#include "optmig/seal.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <cstring>
#include <memory>
#include <string>

#include "optmig/bytes.hpp"
#include "optmig/error.hpp"

namespace optmig {
namespace {

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const noexcept { EVP_CIPHER_CTX_free(ctx); }
};

EVP_CIPHER_CTX* cipher_ctx() {
  thread_local std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter> ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw std::bad_alloc();
  return ctx.get();
}

const unsigned char* uc(const std::byte* p) { return reinterpret_cast<const unsigned char*>(p); }
unsigned char* uc(std::byte* p) { return reinterpret_cast<unsigned char*>(p); }

void fill_random(std::span<std::byte> out) {
  if (RAND_bytes(uc(out.data()), static_cast<int>(out.size())) != 1) {
    throw std::runtime_error("RAND_bytes failed");
  }
}

// AES-256-CTR is its own inverse.
void ctr_xcrypt(const Key& key, const Iv& iv, std::span<const std::byte> in, std::byte* out) {
  EVP_CIPHER_CTX* ctx = cipher_ctx();
  int len = 0;
  if (EVP_EncryptInit_ex(ctx, EVP_aes_256_ctr(), nullptr, uc(key.data()), uc(iv.data())) != 1 ||
      EVP_EncryptUpdate(ctx, uc(out), &len, uc(in.data()), static_cast<int>(in.size())) != 1 ||
      EVP_EncryptFinal_ex(ctx, uc(out) + len, &len) != 1) {
    throw std::runtime_error("AES-256-CTR failed");
  }
}

// Encrypts plain || SHA-256(plain) into out (plain.size() + 32 bytes).
void hash_then_encrypt(std::span<const std::byte> plain, const Key& key, const Iv& iv,
                       std::byte* out) {
  std::vector<std::byte> buf(plain.size() + kDigestSize);
  std::memcpy(buf.data(), plain.data(), plain.size());
  const Digest d = sha256(plain);
  std::memcpy(buf.data() + plain.size(), d.data(), kDigestSize);
  ctr_xcrypt(key, iv, buf, out);
  secure_wipe(buf);
}

// Decrypts into buf and verifies the trailing digest.
void decrypt_then_verify(std::span<const std::byte> ct, const Key& key, const Iv& iv,
                         std::vector<std::byte>& buf) {
  if (ct.size() < kDigestSize) throw Error(ErrorCode::IntegrityFailure, "ciphertext too short");
  buf.resize(ct.size());
  ctr_xcrypt(key, iv, ct, buf.data());
  const std::size_t n = ct.size() - kDigestSize;
  const Digest d = sha256(std::span<const std::byte>(buf.data(), n));
  if (CRYPTO_memcmp(d.data(), buf.data() + n, kDigestSize) != 0) {
    secure_wipe(buf);
    throw Error(ErrorCode::IntegrityFailure, "digest mismatch");
  }
}

}  // namespace

void secure_wipe(std::span<std::byte> bytes) noexcept {
  if (!bytes.empty()) OPENSSL_cleanse(bytes.data(), bytes.size());
}

Digest sha256(std::span<const std::byte> data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), uc(out.data()), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  return out;
}

Key random_key() {
  Key k{};
  fill_random(k);
  return k;
}

KeyArr generate_keys(std::size_t num_pages) {
  KeyArr keys;
  keys.master_key = random_key();
  keys.page_keys.resize(num_pages);
  if (num_pages > 0) {
    fill_random(std::span<std::byte>(keys.page_keys.front().data(), num_pages * kKeySize));
  }
  return keys;
}

SealedPage seal_page(PageIndex index, std::span<const std::byte> page, const Key& key) {
  if (page.size() != kPageSize) {
    throw Error(ErrorCode::ConfigInvalid, "seal_page needs exactly 4096 bytes");
  }
  SealedPage sealed;
  sealed.page_index = index;
  fill_random(sealed.iv);
  sealed.ciphertext.resize(kSealedPageBody);
  hash_then_encrypt(page, key, sealed.iv, sealed.ciphertext.data());
  return sealed;
}

void unseal_page_into(const SealedPage& sealed, const Key& key, std::span<std::byte, kPageSize> out) {
  if (sealed.ciphertext.size() != kSealedPageBody) {
    throw Error(ErrorCode::IntegrityFailure, "sealed page has the wrong length");
  }
  thread_local std::vector<std::byte> buf;
  decrypt_then_verify(sealed.ciphertext, key, sealed.iv, buf);
  std::memcpy(out.data(), buf.data(), kPageSize);
  secure_wipe(buf);
}

Page unseal_page(const SealedPage& sealed, const Key& key) {
  Page page{};
  unseal_page_into(sealed, key, page);
  return page;
}

std::vector<std::byte> seal_blob(std::span<const std::byte> plain, const Key& key) {
  Iv iv{};
  fill_random(iv);
  std::vector<std::byte> out;
  out.reserve(kBundleHeader + plain.size() + kDigestSize);
  ByteWriter w(out);
  w.u32(kSealVersion);
  w.bytes(iv);
  w.u64(plain.size() + kDigestSize);
  out.resize(kBundleHeader + plain.size() + kDigestSize);
  hash_then_encrypt(plain, key, iv, out.data() + kBundleHeader);
  return out;
}

std::vector<std::byte> unseal_blob(std::span<const std::byte> bundle, const Key& key) {
  Iv iv{};
  std::span<const std::byte> ct;
  try {
    ByteReader r(bundle);
    if (r.u32() != kSealVersion) throw Error(ErrorCode::IntegrityFailure, "bad bundle version");
    auto ivb = r.bytes(kIvSize);
    std::memcpy(iv.data(), ivb.data(), kIvSize);
    ct = r.bytes(r.u64());
    if (!r.done()) throw Error(ErrorCode::IntegrityFailure, "trailing bytes in bundle");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IntegrityFailure) throw;
    throw Error(ErrorCode::IntegrityFailure, std::string("malformed bundle: ") + e.what());
  }
  std::vector<std::byte> buf;
  decrypt_then_verify(ct, key, iv, buf);
  buf.resize(ct.size() - kDigestSize);
  return buf;
}

std::vector<std::byte> encode_sealed_page(const SealedPage& sealed) {
  std::vector<std::byte> out;
  out.reserve(kBundleHeader + sealed.ciphertext.size());
  ByteWriter w(out);
  w.u32(kSealVersion);
  w.bytes(sealed.iv);
  w.u64(sealed.ciphertext.size());
  w.bytes(sealed.ciphertext);
  return out;
}

SealedPage decode_sealed_page(PageIndex index, std::span<const std::byte> bundle) {
  SealedPage sealed;
  sealed.page_index = index;
  ByteReader r(bundle);
  if (r.u32() != kSealVersion) throw Error(ErrorCode::DecodeError, "bad sealed page version");
  auto iv = r.bytes(kIvSize);
  std::memcpy(sealed.iv.data(), iv.data(), kIvSize);
  auto ct = r.bytes(r.u64());
  if (!r.done()) throw Error(ErrorCode::DecodeError, "trailing bytes after sealed page");
  sealed.ciphertext.assign(ct.begin(), ct.end());
  return sealed;
}

std::vector<std::byte> wrap_key_bundle(const KeyArr& keys) {
  const auto* first = keys.page_keys.empty() ? nullptr : keys.page_keys.front().data();
  return seal_blob(std::span<const std::byte>(first, keys.page_keys.size() * kKeySize),
                   keys.master_key);
}

std::vector<Key> unwrap_key_bundle(std::span<const std::byte> bundle, const Key& master_key) {
  std::vector<std::byte> plain = unseal_blob(bundle, master_key);
  if (plain.size() % kKeySize != 0) {
    secure_wipe(plain);
    throw Error(ErrorCode::IntegrityFailure, "key bundle is not a whole number of keys");
  }
  std::vector<Key> keys(plain.size() / kKeySize);
  if (!keys.empty()) std::memcpy(keys.front().data(), plain.data(), plain.size());
  secure_wipe(plain);
  return keys;
}

KeyDeliveryChannel::~KeyDeliveryChannel() { secure_wipe(key_); }

Key KeyDeliveryChannel::deliver() {
  if (delivered_.exchange(true, std::memory_order_acq_rel)) {
    throw Error(ErrorCode::AlreadyDelivered, "master key was already delivered for this epoch");
  }
  Key out = key_;
  secure_wipe(key_);
  return out;
}

}  // namespace optmig
