#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>

namespace optmig {

enum class BitRole : std::uint8_t { SaveVec, RestoreVec, Claim };

// Fixed-size array of flags. Bits only go 0 -> 1 until reset(); every
// operation is atomic per bit, so concurrent setters race safely.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t bits, BitRole role = BitRole::SaveVec);

  BitVector(BitVector&&) noexcept = default;
  BitVector& operator=(BitVector&&) noexcept = default;

  std::size_t size() const noexcept { return bits_; }
  BitRole role() const noexcept { return role_; }

  bool test(std::size_t i) const noexcept;
  // Returns the previous value: false means this caller won the bit.
  bool test_and_set(std::size_t i) noexcept;
  void set(std::size_t i) noexcept { (void)test_and_set(i); }

  std::size_t count() const noexcept;
  bool all() const noexcept { return count() == bits_; }
  bool none() const noexcept { return count() == 0; }
  void reset() noexcept;

 private:
  static constexpr std::size_t kWordBits = 64;

  std::size_t bits_ = 0;
  BitRole role_ = BitRole::SaveVec;
  std::unique_ptr<std::atomic<std::uint64_t>[]> words_;
  std::unique_ptr<std::atomic<std::size_t>> ones_;
};

}  // namespace optmig
