// Copyright 2026 The Wingbeat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace wingbeat {

// Persistent worker pool. Work items are index chunks; every output element
// is written by exactly one chunk, so results do not depend on the worker
// count or on scheduling. WINGBEAT_THREADS overrides the lane count.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    int lanes() const { return lanes_; }

    // Runs fn(chunk) for chunk in [0, n_chunks); the caller participates.
    // Blocks until every chunk has finished.
    void run(int64_t n_chunks, const std::function<void(int64_t)>& fn) {
        if (n_chunks <= 0) return;
        if (lanes_ == 1 || n_chunks == 1) {
            for (int64_t i = 0; i < n_chunks; ++i) fn(i);
            return;
        }
        auto job = std::make_shared<Job>();
        job->fn = &fn;
        job->total = n_chunks;
        {
            std::lock_guard<std::mutex> g(mutex_);
            job_ = job;
            ++generation_;
        }
        cv_work_.notify_all();
        drain(*job);
        std::unique_lock<std::mutex> lock(mutex_);
        cv_done_.wait(lock, [&] { return job->done.load() >= job->total; });
        if (job_ == job) job_.reset();
        if (job->error) std::rethrow_exception(job->error);
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

private:
    struct Job {
        const std::function<void(int64_t)>* fn = nullptr;
        int64_t total = 0;
        std::atomic<int64_t> next{0}, done{0};
        std::exception_ptr error;  // first failure, guarded by pool mutex
    };

    ThreadPool() {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (const char* env = std::getenv("WINGBEAT_THREADS")) {
            hw = std::atoi(env);
        }
        lanes_ = hw < 1 ? 1 : hw;
        for (int i = 0; i + 1 < lanes_; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> g(mutex_);
            stop_ = true;
        }
        cv_work_.notify_all();
        for (auto& t : workers_) t.join();
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_work_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                job = job_;
            }
            if (job) drain(*job);
        }
    }

    // A job whose chunks are exhausted drains to a no-op, so a lagging
    // worker holding an old Job can never touch a newer one.
    void drain(Job& job) {
        for (;;) {
            int64_t i = job.next.fetch_add(1);
            if (i >= job.total) break;
            try {
                (*job.fn)(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(mutex_);
                if (!job.error) job.error = std::current_exception();
            }
            if (job.done.fetch_add(1) + 1 == job.total) {
                std::lock_guard<std::mutex> g(mutex_);
                cv_done_.notify_all();
            }
        }
    }

    int lanes_ = 1;
    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable cv_work_, cv_done_;
    bool stop_ = false;
    uint64_t generation_ = 0;
    std::shared_ptr<Job> job_;
};

// Splits [0, n) into contiguous ranges and runs body(begin, end) on the pool.
// Partitioning is independent of which worker executes which range.
template <typename Body>
void parallel_for(int64_t n, int64_t grain, Body&& body) {
    if (n <= 0) return;
    auto& pool = ThreadPool::instance();
    int64_t chunks = std::min<int64_t>(pool.lanes() * 4, (n + grain - 1) / grain);
    if (chunks <= 1) {
        body(int64_t{0}, n);
        return;
    }
    const int64_t step = (n + chunks - 1) / chunks;
    std::function<void(int64_t)> fn = [&](int64_t c) {
        int64_t b = c * step;
        int64_t e = std::min(n, b + step);
        if (b < e) body(b, e);
    };
    pool.run(chunks, fn);
}

template <typename Body>
void parallel_for(int64_t n, Body&& body) {
    parallel_for(n, 1, std::forward<Body>(body));
}

}  // namespace wingbeat
