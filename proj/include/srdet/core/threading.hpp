#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace srdet {

namespace detail {
inline int& thread_count_ref() {
    static int n = 1;
    return n;
}
} // namespace detail

/// Worker threads used by the convolution kernels. 0 selects the hardware
/// count (capped at 4). Partitioning is by output slice, so results are
/// byte-identical for every thread count.
inline void set_num_threads(int n) {
    if (n <= 0) {
        unsigned hw = std::thread::hardware_concurrency();
        n = static_cast<int>(std::min(hw == 0 ? 1u : hw, 4u));
    }
    detail::thread_count_ref() = n;
}

inline int num_threads() { return detail::thread_count_ref(); }

/// Runs fn(begin, end) over disjoint chunks of [0, count).
template <typename Fn>
void parallel_for(int count, const Fn& fn) {
    const int threads = std::min(num_threads(), count);
    if (threads <= 1) {
        if (count > 0) fn(0, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    const int chunk = (count + threads - 1) / threads;
    for (int t = 1; t < threads; ++t) {
        const int lo = t * chunk;
        const int hi = std::min(count, lo + chunk);
        if (lo < hi) pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    fn(0, std::min(count, chunk));
    for (auto& th : pool) th.join();
}

/// Restores the previous thread count on scope exit; latency measurement
/// uses this to force single-threaded inference.
class ThreadCountGuard {
public:
    explicit ThreadCountGuard(int n) : saved_(num_threads()) { set_num_threads(n); }
    ~ThreadCountGuard() { detail::thread_count_ref() = saved_; }
    ThreadCountGuard(const ThreadCountGuard&) = delete;
    ThreadCountGuard& operator=(const ThreadCountGuard&) = delete;

private:
    int saved_;
};

} // namespace srdet
