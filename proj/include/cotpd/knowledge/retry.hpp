#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <mutex>
#include <thread>

#include "cotpd/error.hpp"

namespace cotpd::knowledge {

/// Thrown by providers for a retryable HTTP 429 / quota response.
class RateLimited : public Error {
 public:
  using Error::Error;
};

/// Thrown by providers when the endpoint cannot be reached (retryable).
class TransientFailure : public Error {
 public:
  using Error::Error;
};

struct RetryOptions {
  std::size_t max_retries = 5;
  std::chrono::milliseconds backoff_base{200};
  std::chrono::milliseconds backoff_cap{10'000};

  std::chrono::milliseconds delay(std::size_t attempt) const {
    auto d = backoff_base * (std::size_t{1} << std::min<std::size_t>(attempt, 20));
    return std::min<std::chrono::milliseconds>(std::chrono::duration_cast<std::chrono::milliseconds>(d), backoff_cap);
  }
};

/// Bounds in-flight requests and spaces request starts by a minimum interval.
class RateLimiter {
 public:
  explicit RateLimiter(std::size_t max_in_flight = 4,
                       std::chrono::milliseconds min_interval = std::chrono::milliseconds{0})
      : slots_(std::max<std::size_t>(max_in_flight, 1)), min_interval_(min_interval) {}

  class Permit {
   public:
    explicit Permit(RateLimiter& l) : limiter_(l) { limiter_.acquire(); }
    ~Permit() { limiter_.release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    RateLimiter& limiter_;
  };

 private:
  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return slots_ > 0; });
    --slots_;
    auto now = std::chrono::steady_clock::now();
    auto start = std::max(now, next_start_);
    next_start_ = start + min_interval_;
    lock.unlock();
    if (start > now) std::this_thread::sleep_until(start);
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      ++slots_;
    }
    cv_.notify_one();
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t slots_;
  std::chrono::milliseconds min_interval_;
  std::chrono::steady_clock::time_point next_start_{};
};

}  // namespace cotpd::knowledge
