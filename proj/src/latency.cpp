#include "retbench/latency.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "retbench/error.hpp"

namespace retbench {

double percentile(std::span<const double> samples, double p) {
  if (samples.empty()) throw UsageError("percentile of an empty sample");
  if (!(p > 0.0 && p <= 100.0)) throw UsageError(fmt::format("percentile {} outside (0, 100]", p));
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  // p * n / 100 rather than (p / 100) * n: 0.95 * 100 rounds up past 95.
  const double rank = std::ceil(p * static_cast<double>(sorted.size()) / 100.0);
  const auto idx = static_cast<std::size_t>(std::max(1.0, rank)) - 1;
  return sorted[std::min(idx, sorted.size() - 1)];
}

LatencyStats summarize_latency(std::vector<double> samples_ms) {
  if (samples_ms.empty()) throw UsageError("no latency samples");
  LatencyStats s;
  s.n_runs = samples_ms.size();
  std::vector<double> sorted = samples_ms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median_ms = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  s.std_ms = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  s.p95_ms = percentile(sorted, 95.0);
  s.samples_ms = std::move(samples_ms);
  return s;
}

MonotonicClock steady_clock_ns() {
  return [] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  };
}

LatencyStats measure_latency(const std::function<void()>& pipeline, const LatencyOptions& options,
                             const MonotonicClock& clock) {
  if (options.n_runs == 0) throw UsageError("latency measurement needs at least one run");
  for (std::size_t i = 0; i < options.n_warmups; ++i) {
    try {
      pipeline();
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("warm-up {} failed: {}", i + 1, e.what()));
    } catch (const std::exception& e) {
      throw Error(ExitCode::kInternal, fmt::format("warm-up {} failed: {}", i + 1, e.what()));
    }
  }
  std::vector<double> samples;
  samples.reserve(options.n_runs);
  for (std::size_t i = 0; i < options.n_runs; ++i) {
    const std::int64_t t0 = clock();
    try {
      pipeline();
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("measured run {} failed: {}", i + 1, e.what()));
    } catch (const std::exception& e) {
      throw Error(ExitCode::kInternal, fmt::format("measured run {} failed: {}", i + 1, e.what()));
    }
    samples.push_back(static_cast<double>(clock() - t0) / 1e6);
  }
  LatencyStats s = summarize_latency(std::move(samples));
  s.n_warmups = options.n_warmups;
  s.seed = options.seed;
  using Period = std::chrono::steady_clock::period;
  s.timer_resolution_ms = 1e3 * static_cast<double>(Period::num) / static_cast<double>(Period::den);
  return s;
}

std::string render_latency_table(const std::vector<LatencyRow>& rows) {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.model.size());
  std::string out = fmt::format("{:<{}}  {:>10}  {:>10}  {:>10}  {:>5}  {:>12}\n", "Model", w,
                                "median_ms", "std_ms", "p95_ms", "runs", "$/1M tok");
  for (const auto& r : rows) {
    out += fmt::format("{:<{}}  {:>10.3f}  {:>10.3f}  {:>10.3f}  {:>5}  {:>12}\n", r.model, w,
                       r.stats.median_ms, r.stats.std_ms, r.stats.p95_ms, r.stats.n_runs,
                       r.cost_per_million_tokens ? fmt::format("{:.4f}", *r.cost_per_million_tokens)
                                                 : std::string("-"));
  }
  return out;
}

std::string render_latency_csv(const std::vector<LatencyRow>& rows) {
  std::string out = "model,median_ms,std_ms,p95_ms,n_runs,n_warmups,timer_resolution_ms,cost_per_million_tokens\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.6f},{:.6f},{:.6f},{},{},{:.9f},{}\n", r.model, r.stats.median_ms,
                       r.stats.std_ms, r.stats.p95_ms, r.stats.n_runs, r.stats.n_warmups,
                       r.stats.timer_resolution_ms,
                       r.cost_per_million_tokens ? fmt::format("{:.6f}", *r.cost_per_million_tokens)
                                                 : std::string());
  }
  return out;
}

}  // namespace retbench
