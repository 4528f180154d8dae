// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/parallel.hpp"

namespace moce {

ThreadPool::ThreadPool(int workers) {
  int extra = workers > 1 ? workers - 1 : 0;
  threads_.reserve(static_cast<std::size_t>(extra));
  for (int i = 0; i < extra; ++i) threads_.emplace_back([this] { worker_loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_work_.notify_all();
  for (auto& t : threads_) t.join();
}

bool ThreadPool::work_one() {
  int i = next_.fetch_add(1);
  if (i >= job_count_) return false;
  try {
    (*job_)(i);
  } catch (...) {
    std::lock_guard<std::mutex> lock(mu_);
    if (!error_) error_ = std::current_exception();
  }
  if (remaining_.fetch_sub(1) == 1) {
    std::lock_guard<std::mutex> lock(mu_);
    cv_done_.notify_all();
  }
  return true;
}

void ThreadPool::worker_loop() {
  std::uint64_t seen = 0;
  for (;;) {
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_work_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
    }
    while (work_one()) {
    }
  }
}

void ThreadPool::run_indexed(int count, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  {
    std::lock_guard<std::mutex> lock(mu_);
    job_ = &fn;
    job_count_ = count;
    next_.store(0);
    remaining_.store(count);
    error_ = nullptr;
    ++generation_;
  }
  cv_work_.notify_all();
  while (work_one()) {
  }
  {
    std::unique_lock<std::mutex> lock(mu_);
    cv_done_.wait(lock, [&] { return remaining_.load() == 0; });
    job_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }
}

}  // namespace moce
