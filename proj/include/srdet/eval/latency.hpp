#pragma once

#include <chrono>
#include <functional>

#include "srdet/core/errors.hpp"
#include "srdet/core/threading.hpp"

namespace srdet {

struct LatencyConfig {
    int warmup = 3;     // raised to 3 if lower
    int iterations = 10; // raised to 10 if lower
};

/// Mean wall-clock milliseconds per invocation, measured single-threaded
/// for comparability across pipeline variants. Excludes data loading; the
/// callable should cover exactly the per-image inference path.
inline double measure_latency_ms(const std::function<void()>& pipeline, LatencyConfig cfg = {}) {
    if (!pipeline) throw ValidationError("measure_latency: empty pipeline");
    const int warmup = std::max(cfg.warmup, 3);
    const int iterations = std::max(cfg.iterations, 10);
    ThreadCountGuard guard(1);
    for (int i = 0; i < warmup; ++i) pipeline();
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < iterations; ++i) pipeline();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / iterations;
}

} // namespace srdet
