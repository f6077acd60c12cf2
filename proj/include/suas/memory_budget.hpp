#pragma once

#include <condition_variable>
#include <cstdint>
#include <mutex>

namespace suas {

inline constexpr std::uint64_t kDefaultPixelBudgetBytes = 512ull << 20;

// Counting gate for resident tile buffers (pixels + score planes). Acquire
// blocks until the request fits under the cap.
class MemoryBudget {
 public:
  explicit MemoryBudget(std::uint64_t cap_bytes = kDefaultPixelBudgetBytes) : cap_(cap_bytes) {}

  // Throws kInvalidArgument if `bytes` alone exceeds the cap.
  void Acquire(std::uint64_t bytes);
  void Release(std::uint64_t bytes);

  std::uint64_t cap() const { return cap_; }
  std::uint64_t in_use() const;
  std::uint64_t peak() const;

 private:
  std::uint64_t cap_;
  std::uint64_t in_use_ = 0;
  std::uint64_t peak_ = 0;
  mutable std::mutex mutex_;
  std::condition_variable released_;
};

class BudgetLease {
 public:
  BudgetLease(MemoryBudget& budget, std::uint64_t bytes) : budget_(&budget), bytes_(bytes) {
    budget_->Acquire(bytes_);
  }
  ~BudgetLease() {
    if (budget_ != nullptr) budget_->Release(bytes_);
  }
  BudgetLease(const BudgetLease&) = delete;
  BudgetLease& operator=(const BudgetLease&) = delete;

 private:
  MemoryBudget* budget_;
  std::uint64_t bytes_;
};

}  // namespace suas
