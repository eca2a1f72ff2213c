#include <gtest/gtest.h>
#include <openssl/evp.h>

#include <random>
#include <set>
#include <string>
#include <thread>

#include "optmig/error.hpp"
#include "optmig/seal.hpp"

using namespace optmig;

namespace {

std::vector<std::byte> from_hex(std::string_view hex) {
  std::vector<std::byte> out;
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2) {
    out.push_back(static_cast<std::byte>(std::stoi(std::string(hex.substr(i, 2)), nullptr, 16)));
  }
  return out;
}

template <class T>
T fixed(std::string_view hex) {
  T out{};
  const auto v = from_hex(hex);
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

// Reference AES-256-CTR and SHA-256 straight from libcrypto.
std::vector<std::byte> ref_ctr(const Key& key, const Iv& iv, std::span<const std::byte> in) {
  std::vector<std::byte> out(in.size());
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  int len = 0;
  EVP_EncryptInit_ex(ctx, EVP_aes_256_ctr(), nullptr,
                     reinterpret_cast<const unsigned char*>(key.data()),
                     reinterpret_cast<const unsigned char*>(iv.data()));
  EVP_EncryptUpdate(ctx, reinterpret_cast<unsigned char*>(out.data()), &len,
                    reinterpret_cast<const unsigned char*>(in.data()), static_cast<int>(in.size()));
  EVP_CIPHER_CTX_free(ctx);
  return out;
}

Digest ref_sha(std::span<const std::byte> in) {
  Digest d{};
  unsigned int n = 0;
  EVP_Digest(in.data(), in.size(), reinterpret_cast<unsigned char*>(d.data()), &n, EVP_sha256(),
             nullptr);
  return d;
}

Page random_page(std::mt19937_64& rng) {
  Page p;
  for (auto& b : p) b = static_cast<std::byte>(rng());
  return p;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ConfigInvalid;
}

constexpr std::string_view kF55Key =
    "603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4";
constexpr std::string_view kF55Counter = "f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff";
constexpr std::string_view kF55Plain =
    "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51"
    "30c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710";
constexpr std::string_view kF55Cipher =
    "601ec313775789a5b7a7f504bbf3d228f443e3ca4d62b59aca84e990cacaf5c5"
    "2b0930daa23de94ce87017ba2d84988ddfc9c58db67aada613c2dd08457941a6";

}  // namespace

TEST(Sha256, AbcVector) {
  const std::string abc = "abc";
  const Digest d = sha256(std::as_bytes(std::span(abc)));
  EXPECT_EQ(d, fixed<Digest>("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"));
}

TEST(Sha256, EmptyVector) {
  EXPECT_EQ(sha256({}),
            fixed<Digest>("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"));
}

TEST(SealPage, UnsealFollowsAes256CtrKnownAnswer) {
  // A page whose first four blocks are the F.5.5 plaintext; the ciphertext of
  // those blocks is the published vector, the rest comes from the reference.
  const Key key = fixed<Key>(kF55Key);
  const Iv iv = fixed<Iv>(kF55Counter);
  Page page{};
  const auto plain = from_hex(kF55Plain);
  std::copy(plain.begin(), plain.end(), page.begin());

  std::vector<std::byte> body(page.begin(), page.end());
  const Digest d = ref_sha(page);
  body.insert(body.end(), d.begin(), d.end());
  SealedPage sealed;
  sealed.iv = iv;
  sealed.ciphertext = ref_ctr(key, iv, body);
  const auto expected = from_hex(kF55Cipher);
  ASSERT_TRUE(std::equal(expected.begin(), expected.end(), sealed.ciphertext.begin()));

  EXPECT_EQ(unseal_page(sealed, key), page);
}

TEST(SealPage, CiphertextIsCtrOfPageAndDigest) {
  std::mt19937_64 rng(1);
  const Page page = random_page(rng);
  const Key key = random_key();
  const SealedPage s = seal_page(9, page, key);
  ASSERT_EQ(s.ciphertext.size(), kSealedPageBody);
  const auto plain = ref_ctr(key, s.iv, s.ciphertext);
  EXPECT_TRUE(std::equal(page.begin(), page.end(), plain.begin()));
  const Digest d = ref_sha(page);
  EXPECT_TRUE(std::equal(d.begin(), d.end(), plain.begin() + kPageSize));
  EXPECT_EQ(s.page_index, 9u);
}

TEST(SealPage, ZeroPageRoundTrips) {
  const Page zero{};
  const Key key = random_key();
  EXPECT_EQ(unseal_page(seal_page(0, zero, key), key), zero);
}

TEST(SealPage, RandomPagesRoundTrip) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Page p = random_page(rng);
    const Key key = random_key();
    const SealedPage s = seal_page(i, p, key);
    EXPECT_EQ(unseal_page(s, key), p);
    EXPECT_EQ(unseal_page(decode_sealed_page(i, encode_sealed_page(s)), key), p);
  }
}

TEST(SealPage, FreshIvPerSeal) {
  const Page p{};
  const Key key = random_key();
  EXPECT_NE(seal_page(0, p, key).ciphertext, seal_page(0, p, key).ciphertext);
}

TEST(SealPage, EverySingleBitFlipIsRejected) {
  std::mt19937_64 rng(3);
  const Page p = random_page(rng);
  const Key key = random_key();
  const SealedPage good = seal_page(0, p, key);
  int accepted = 0;
  for (int t = 0; t < 1000; ++t) {
    SealedPage bad = good;
    const std::size_t bit = rng() % ((bad.ciphertext.size() + kIvSize) * 8);
    const std::byte mask{static_cast<unsigned char>(1u << (bit % 8))};
    if (bit / 8 < kIvSize) {
      bad.iv[bit / 8] ^= mask;
    } else {
      bad.ciphertext[bit / 8 - kIvSize] ^= mask;
    }
    if (code_of([&] { unseal_page(bad, key); }) != ErrorCode::IntegrityFailure) ++accepted;
  }
  EXPECT_EQ(accepted, 0);
}

TEST(SealPage, WrongPageKeyIsRejectedOnAToyHeap) {
  std::mt19937_64 rng(4);
  const KeyArr keys = generate_keys(4);
  std::vector<SealedPage> sealed;
  for (PageIndex i = 0; i < 4; ++i) sealed.push_back(seal_page(i, random_page(rng), keys.page_keys[i]));
  for (PageIndex i = 0; i < 4; ++i) {
    for (PageIndex j = 0; j < 4; ++j) {
      const ErrorCode c = code_of([&] { unseal_page(sealed[i], keys.page_keys[j]); });
      if (i == j) {
        EXPECT_NO_THROW(unseal_page(sealed[i], keys.page_keys[j]));
      } else {
        EXPECT_EQ(c, ErrorCode::IntegrityFailure) << i << "," << j;
      }
    }
  }
}

TEST(SealPage, TruncatedOrWrongSizeInput) {
  const Key key = random_key();
  std::vector<std::byte> short_page(100);
  EXPECT_EQ(code_of([&] { seal_page(0, short_page, key); }), ErrorCode::ConfigInvalid);
  SealedPage s = seal_page(0, Page{}, key);
  s.ciphertext.pop_back();
  EXPECT_EQ(code_of([&] { unseal_page(s, key); }), ErrorCode::IntegrityFailure);
  auto wire = encode_sealed_page(seal_page(0, Page{}, key));
  wire.pop_back();
  EXPECT_EQ(code_of([&] { decode_sealed_page(0, wire); }), ErrorCode::DecodeError);
}

TEST(Keys, EmptyHeapHasOnlyAMasterKey) {
  const KeyArr k = generate_keys(0);
  EXPECT_TRUE(k.page_keys.empty());
  EXPECT_NE(k.master_key, Key{});
}

TEST(Keys, MasterKeysAreDistinct) {
  std::set<Key> seen;
  for (int i = 0; i < 100; ++i) seen.insert(generate_keys(1).master_key);
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Keys, OneGiBHeapHasOneKeyPerPage) {
  const std::size_t pages = (std::size_t{1} << 30) / (std::size_t{1} << 12);
  EXPECT_EQ(pages, 262144u);
  EXPECT_EQ(generate_keys(pages).page_keys.size(), 262144u);
}

TEST(KeyBundle, RoundTripAndTamper) {
  const KeyArr k = generate_keys(33);
  auto bundle = wrap_key_bundle(k);
  EXPECT_EQ(bundle.size(), kBundleHeader + 33 * kKeySize + kDigestSize);
  EXPECT_EQ(unwrap_key_bundle(bundle, k.master_key), k.page_keys);
  EXPECT_EQ(code_of([&] { unwrap_key_bundle(bundle, random_key()); }), ErrorCode::IntegrityFailure);
  bundle[kBundleHeader + 40] ^= std::byte{0x10};
  EXPECT_EQ(code_of([&] { unwrap_key_bundle(bundle, k.master_key); }), ErrorCode::IntegrityFailure);
  bundle.resize(10);
  EXPECT_EQ(code_of([&] { unwrap_key_bundle(bundle, k.master_key); }), ErrorCode::IntegrityFailure);
}

TEST(KeyBundle, BlobRoundTrip) {
  const Key key = random_key();
  const std::string msg = "metadata blob";
  const auto sealed = seal_blob(std::as_bytes(std::span(msg)), key);
  const auto back = unseal_blob(sealed, key);
  EXPECT_EQ(std::string(reinterpret_cast<const char*>(back.data()), back.size()), msg);
  EXPECT_TRUE(unseal_blob(seal_blob({}, key), key).empty());
}

TEST(KeyDelivery, MasterKeyLeavesOnce) {
  const Key master = random_key();
  KeyDeliveryChannel ch(master);
  EXPECT_FALSE(ch.delivered());
  EXPECT_EQ(ch.deliver(), master);
  EXPECT_TRUE(ch.delivered());
  EXPECT_EQ(code_of([&] { ch.deliver(); }), ErrorCode::AlreadyDelivered);
}

TEST(KeyDelivery, ConcurrentCallersGetOneKey) {
  for (int round = 0; round < 50; ++round) {
    KeyDeliveryChannel ch(random_key());
    std::atomic<int> winners{0}, refused{0};
    std::vector<std::thread> ts;
    for (int i = 0; i < 4; ++i) {
      ts.emplace_back([&] {
        try {
          ch.deliver();
          ++winners;
        } catch (const Error& e) {
          if (e.code() == ErrorCode::AlreadyDelivered) ++refused;
        }
      });
    }
    for (auto& t : ts) t.join();
    EXPECT_EQ(winners, 1);
    EXPECT_EQ(refused, 3);
  }
}

TEST(KeyDelivery, ReplayedBBuffFailsUnderAFreshEpoch) {
  std::mt19937_64 rng(5);
  const KeyArr old_epoch = generate_keys(16);
  std::vector<SealedPage> bbuff;
  for (PageIndex i = 0; i < 16; ++i) {
    bbuff.push_back(seal_page(i, random_page(rng), old_epoch.page_keys[i]));
  }
  const KeyArr fresh = generate_keys(16);
  KeyDeliveryChannel ch(fresh.master_key);
  const auto keys = unwrap_key_bundle(wrap_key_bundle(fresh), ch.deliver());
  for (PageIndex i = 0; i < 16; ++i) {
    EXPECT_EQ(code_of([&] { unseal_page(bbuff[i], keys[i]); }), ErrorCode::IntegrityFailure);
  }
}
