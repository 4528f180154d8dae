// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace moce {

// Fixed-size worker pool for shard-parallel batch work. Tasks must write to
// disjoint, index-addressed slots; callers merge results in index order so
// outcomes never depend on scheduling or pool size.
class ThreadPool {
 public:
  explicit ThreadPool(int workers);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int workers() const { return static_cast<int>(threads_.size()) + 1; }

  // Runs fn(0) .. fn(count - 1), returning when all are done. The calling
  // thread participates. Exceptions from tasks are rethrown (first wins).
  void run_indexed(int count, const std::function<void(int)>& fn);

 private:
  void worker_loop();
  bool work_one();

  std::mutex mu_;
  std::condition_variable cv_work_, cv_done_;
  const std::function<void(int)>* job_ = nullptr;
  int job_count_ = 0;
  std::atomic<int> next_{0};
  std::atomic<int> remaining_{0};
  std::exception_ptr error_;
  bool stop_ = false;
  std::uint64_t generation_ = 0;
  std::vector<std::thread> threads_;
};

}  // namespace moce
