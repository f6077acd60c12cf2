#include "suas/memory_budget.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "suas/error.hpp"

namespace suas {

void MemoryBudget::Acquire(std::uint64_t bytes) {
  if (bytes > cap_) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("a single tile needs {} bytes, above the {} byte budget", bytes, cap_));
  }
  std::unique_lock lock(mutex_);
  released_.wait(lock, [&] { return in_use_ + bytes <= cap_; });
  in_use_ += bytes;
  peak_ = std::max(peak_, in_use_);
}

void MemoryBudget::Release(std::uint64_t bytes) {
  {
    std::lock_guard lock(mutex_);
    in_use_ -= bytes;
  }
  released_.notify_all();
}

std::uint64_t MemoryBudget::in_use() const {
  std::lock_guard lock(mutex_);
  return in_use_;
}

std::uint64_t MemoryBudget::peak() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

}  // namespace suas
