#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "retbench/embedding.hpp"

namespace retbench {

/// Exponential backoff with full jitter: before retry n (1-based) sleep a
/// uniform draw from [0, base * factor^(n-1)).
struct RetryPolicy {
  std::chrono::milliseconds base{200};
  double factor = 2.0;
  int max_attempts = 5;
  std::uint64_t jitter_seed = 42;
};

/// Minimum-interval limiter. Instances for the same endpoint are shared
/// process-wide through for_endpoint().
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second);
  void acquire();
  double requests_per_second() const { return rps_; }

  static std::shared_ptr<RateLimiter> for_endpoint(const std::string& endpoint, double rps);

 private:
  double rps_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_slot_{};
};

/// JSON body for POST /embed (wire protocol v1).
std::string encode_embed_request(const EmbedRequest& request);
/// Parses POST /embed; throws ProtocolError when the shape is wrong.
EmbedRequest decode_embed_request(const std::string& body);
std::string encode_embed_response(std::size_t dim, const std::vector<std::vector<float>>& vectors);
/// Throws ProtocolError on malformed JSON, missing fields or length mismatch.
std::vector<std::vector<float>> decode_embed_response(const std::string& body,
                                                      std::size_t expected_count);

struct HealthStatus {
  std::string status;
  std::vector<std::string> models;
};
HealthStatus decode_health(const std::string& body);

struct RemoteOptions {
  RetryPolicy retry;
  double requests_per_second = 5.0;
  std::chrono::milliseconds timeout{30000};
  /// Sent as "Authorization: Bearer <token>" when non-empty.
  std::string token;
};

/// Client for the v1 embedding wire protocol. Connections are kept alive
/// between requests.
class RemoteBackend : public EmbeddingBackend {
 public:
  RemoteBackend(std::string endpoint, RemoteOptions options = {});
  ~RemoteBackend() override;

  std::vector<std::vector<float>> embed(const EmbedRequest& request) override;
  bool prefixes_server_side() const override { return true; }

  HealthStatus health();
  /// HTTP attempts made so far, retries included.
  std::size_t attempts() const;

  /// Sleep hook; tests replace it to skip real backoff.
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace retbench
