#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace retbench {

struct LatencyStats {
  double median_ms = 0.0;
  double std_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t n_runs = 0;
  std::size_t n_warmups = 0;
  std::vector<double> samples_ms;
  double timer_resolution_ms = 0.0;
  std::uint64_t seed = 42;
};

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample.
/// Throws UsageError on empty input or p outside (0, 100].
double percentile(std::span<const double> samples, double p);

/// Median, sample standard deviation (n - 1; 0 for a single sample) and p95.
LatencyStats summarize_latency(std::vector<double> samples_ms);

/// Monotonic time source in nanoseconds. Tests inject a fake one.
using MonotonicClock = std::function<std::int64_t()>;
MonotonicClock steady_clock_ns();

struct LatencyOptions {
  std::size_t n_warmups = 5;
  std::size_t n_runs = 50;
  std::uint64_t seed = 42;
};

/// Runs the pipeline n_warmups times untimed, then n_runs times timed.
/// A throwing run aborts the measurement with an error naming its index.
LatencyStats measure_latency(const std::function<void()>& pipeline,
                             const LatencyOptions& options = {},
                             const MonotonicClock& clock = steady_clock_ns());

struct LatencyRow {
  std::string model;
  LatencyStats stats;
  std::optional<double> cost_per_million_tokens;
};

std::string render_latency_table(const std::vector<LatencyRow>& rows);
std::string render_latency_csv(const std::vector<LatencyRow>& rows);

}  // namespace retbench
