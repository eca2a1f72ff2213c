#include "optmig/bitvector.hpp"

namespace optmig {

BitVector::BitVector(std::size_t bits, BitRole role)
    : bits_(bits),
      role_(role),
      words_(new std::atomic<std::uint64_t>[(bits + kWordBits - 1) / kWordBits]),
      ones_(std::make_unique<std::atomic<std::size_t>>(0)) {
  reset();
}

bool BitVector::test(std::size_t i) const noexcept {
  const std::uint64_t mask = std::uint64_t{1} << (i % kWordBits);
  return (words_[i / kWordBits].load(std::memory_order_acquire) & mask) != 0;
}

bool BitVector::test_and_set(std::size_t i) noexcept {
  const std::uint64_t mask = std::uint64_t{1} << (i % kWordBits);
  const std::uint64_t prev = words_[i / kWordBits].fetch_or(mask, std::memory_order_acq_rel);
  const bool was_set = (prev & mask) != 0;
  if (!was_set) ones_->fetch_add(1, std::memory_order_acq_rel);
  return was_set;
}

std::size_t BitVector::count() const noexcept {
  return ones_ ? ones_->load(std::memory_order_acquire) : 0;
}

void BitVector::reset() noexcept {
  const std::size_t words = (bits_ + kWordBits - 1) / kWordBits;
  for (std::size_t w = 0; w < words; ++w) words_[w].store(0, std::memory_order_relaxed);
  if (ones_) ones_->store(0, std::memory_order_release);
}

}  // namespace optmig
