#include "crowdnav/thread_pool.hpp"

#include <stdexcept>

namespace crowdnav {

ThreadPool::ThreadPool(int threads) : threads_(threads) {
  if (threads < 1) throw std::invalid_argument("ThreadPool: need at least one thread");
  for (int i = 1; i < threads; ++i) workers_.emplace_back([this] { worker_loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  for (std::thread& t : workers_) t.join();
}

void ThreadPool::worker_loop() {
  std::uint64_t seen = 0;
  std::unique_lock lock(mutex_);
  for (;;) {
    wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
    if (stop_) return;
    seen = generation_;
    ++active_;
    while (next_index_ < job_size_) {
      const int i = next_index_++;
      const auto* job = job_;
      lock.unlock();
      try {
        (*job)(i);
      } catch (...) {
        lock.lock();
        errors_[i] = std::current_exception();
        continue;
      }
      lock.lock();
    }
    if (--active_ == 0) finished_.notify_all();
  }
}

void ThreadPool::parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (workers_.empty()) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::unique_lock lock(mutex_);
  job_ = &fn;
  job_size_ = n;
  next_index_ = 0;
  errors_.assign(n, nullptr);
  ++generation_;
  wake_.notify_all();
  // The caller works too.
  ++active_;
  while (next_index_ < job_size_) {
    const int i = next_index_++;
    lock.unlock();
    try {
      fn(i);
    } catch (...) {
      lock.lock();
      errors_[i] = std::current_exception();
      continue;
    }
    lock.lock();
  }
  --active_;
  finished_.wait(lock, [&] { return active_ == 0; });
  job_ = nullptr;
  job_size_ = 0;
  for (const auto& e : errors_) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace crowdnav
