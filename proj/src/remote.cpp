#include "retbench/remote.hpp"

#include <cmath>
#include <map>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "retbench/error.hpp"
#include "retbench/rng.hpp"

namespace retbench {

using nlohmann::json;

RateLimiter::RateLimiter(double requests_per_second) : rps_(requests_per_second) {}

void RateLimiter::acquire() {
  if (rps_ <= 0.0) return;
  const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / rps_));
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_slot_);
    next_slot_ = slot + interval;
  }
  std::this_thread::sleep_until(slot);
}

std::shared_ptr<RateLimiter> RateLimiter::for_endpoint(const std::string& endpoint, double rps) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<RateLimiter>> limiters;
  std::lock_guard lock(mu);
  auto& slot = limiters[endpoint];
  if (!slot || slot->requests_per_second() != rps) slot = std::make_shared<RateLimiter>(rps);
  return slot;
}

std::string encode_embed_request(const EmbedRequest& request) {
  return json{{"model", request.model},
              {"task", std::string(task_wire_name(request.task))},
              {"normalize", request.normalize},
              {"texts", request.texts}}
      .dump();
}

EmbedRequest decode_embed_request(const std::string& body) {
  try {
    const auto j = json::parse(body);
    EmbedRequest r;
    r.model = j.at("model").get<std::string>();
    const auto task = j.at("task").get<std::string>();
    if (task == "query") {
      r.task = TaskType::kRetrievalQuery;
    } else if (task == "document") {
      r.task = TaskType::kRetrievalDocument;
    } else {
      throw ProtocolError("task must be \"query\" or \"document\", got \"" + task + "\"");
    }
    r.normalize = j.at("normalize").get<bool>();
    r.texts = j.at("texts").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed embed request: ") + e.what());
  }
}

std::string encode_embed_response(std::size_t dim, const std::vector<std::vector<float>>& vectors) {
  return json{{"dim", dim}, {"vectors", vectors}}.dump();
}

std::vector<std::vector<float>> decode_embed_response(const std::string& body,
                                                      std::size_t expected_count) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("embed response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("dim") || !j.contains("vectors") ||
      !j["dim"].is_number_unsigned() || !j["vectors"].is_array()) {
    throw ProtocolError("embed response lacks integer \"dim\" or array \"vectors\"");
  }
  const auto dim = j["dim"].get<std::size_t>();
  const auto& vecs = j["vectors"];
  if (vecs.size() != expected_count) {
    throw ProtocolError(fmt::format("embed response has {} vectors for {} texts", vecs.size(),
                                    expected_count));
  }
  std::vector<std::vector<float>> out;
  out.reserve(vecs.size());
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    const auto& v = vecs[i];
    if (!v.is_array() || v.size() != dim) {
      throw ProtocolError(fmt::format("vector {} does not have the declared dim {}", i, dim));
    }
    std::vector<float> values;
    values.reserve(dim);
    for (const auto& x : v) {
      if (!x.is_number()) throw ProtocolError(fmt::format("vector {} holds a non-number", i));
      values.push_back(x.get<float>());
    }
    out.push_back(std::move(values));
  }
  return out;
}

HealthStatus decode_health(const std::string& body) {
  try {
    const auto j = json::parse(body);
    return {j.at("status").get<std::string>(), j.at("models").get<std::vector<std::string>>()};
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed /healthz body: ") + e.what());
  }
}

struct RemoteBackend::Impl {
  std::string endpoint;
  std::string base_path;
  RemoteOptions options;
  std::unique_ptr<httplib::Client> client;
  std::shared_ptr<RateLimiter> limiter;
  Rng jitter;
  std::mutex mu;
  std::size_t attempts = 0;
  std::function<void(std::chrono::milliseconds)> sleeper = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };

  Impl(std::string ep, RemoteOptions opts)
      : endpoint(std::move(ep)), options(std::move(opts)), jitter(options.retry.jitter_seed) {
    const auto scheme = endpoint.find("://");
    if (scheme == std::string::npos) throw UsageError("endpoint '" + endpoint + "' lacks a scheme");
    const auto path = endpoint.find('/', scheme + 3);
    const std::string origin = endpoint.substr(0, path);
    base_path = path == std::string::npos ? "" : endpoint.substr(path);
    while (!base_path.empty() && base_path.back() == '/') base_path.pop_back();
    client = std::make_unique<httplib::Client>(origin);
    if (!client->is_valid()) throw UsageError("cannot use endpoint '" + endpoint + "'");
    const auto secs = options.timeout.count() / 1000;
    const auto usecs = (options.timeout.count() % 1000) * 1000;
    client->set_connection_timeout(secs, usecs);
    client->set_read_timeout(secs, usecs);
    client->set_write_timeout(secs, usecs);
    client->set_keep_alive(true);
    if (!options.token.empty()) client->set_bearer_token_auth(options.token);
    limiter = RateLimiter::for_endpoint(origin, options.requests_per_second);
  }

  static bool transient(int status) { return status == 429 || (status >= 500 && status <= 504); }

  // Returns the 200 body; retries transient failures per the policy.
  std::string send(const std::string& method, const std::string& path, const std::string& body) {
    std::lock_guard lock(mu);
    std::string last_error;
    const int max_attempts = std::max(1, options.retry.max_attempts);
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
      if (attempt > 1) {
        const double cap = static_cast<double>(options.retry.base.count()) *
                           std::pow(options.retry.factor, attempt - 2);
        sleeper(std::chrono::milliseconds(static_cast<std::int64_t>(jitter.unit() * cap)));
      }
      limiter->acquire();
      ++attempts;
      auto res = method == "GET" ? client->Get(base_path + path)
                                 : client->Post(base_path + path, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) return res->body;
      if (transient(res->status)) {
        last_error = fmt::format("HTTP {}", res->status);
        continue;
      }
      throw ProtocolError(fmt::format("{} {}{} returned HTTP {}: {}", method, endpoint, path,
                                      res->status, res->body));
    }
    throw TransportError(fmt::format("{} {}{} failed after {} attempts: {}", method, endpoint, path,
                                     max_attempts, last_error));
  }
};

RemoteBackend::RemoteBackend(std::string endpoint, RemoteOptions options)
    : impl_(std::make_unique<Impl>(std::move(endpoint), std::move(options))) {}

RemoteBackend::~RemoteBackend() = default;

std::vector<std::vector<float>> RemoteBackend::embed(const EmbedRequest& request) {
  const auto body = impl_->send("POST", "/embed", encode_embed_request(request));
  return decode_embed_response(body, request.texts.size());
}

HealthStatus RemoteBackend::health() { return decode_health(impl_->send("GET", "/healthz", {})); }

std::size_t RemoteBackend::attempts() const {
  std::lock_guard lock(impl_->mu);
  return impl_->attempts;
}

void RemoteBackend::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
  std::lock_guard lock(impl_->mu);
  impl_->sleeper = std::move(sleeper);
}

}  // namespace retbench
