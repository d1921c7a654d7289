#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <json.hpp>
#include <thread>

#include "retbench/embedding.hpp"
#include "retbench/error.hpp"
#include "retbench/remote.hpp"

namespace rb = retbench;
using nlohmann::json;

namespace {

/// Minimal server speaking the v1 protocol over mock_embed. Models named
/// "*-e5" get query/passage prefixes applied server-side.
class ReferenceServer {
 public:
  ReferenceServer() {
    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok","models":["mock-256","mock-e5"]})", "application/json");
    });
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_auth = req.get_header_value("Authorization");
      if (fail_next > 0) {
        --fail_next;
        res.status = 503;
        return;
      }
      if (garbage) {
        res.set_content("{\"dim\": 16, \"vectors\": [[1,2]", "application/json");
        return;
      }
      rb::EmbedRequest r;
      try {
        r = rb::decode_embed_request(req.body);
      } catch (const rb::Error&) {
        res.status = 400;
        return;
      }
      if (r.model != "mock-256" && r.model != "mock-e5") {
        res.status = 404;
        return;
      }
      std::vector<std::vector<float>> out;
      for (const auto& t : r.texts) {
        std::string text = t;
        if (r.model == "mock-e5") text = (r.task == rb::TaskType::kRetrievalQuery ? "query: " : "passage: ") + t;
        out.push_back(rb::mock_embed(text, short_dim ? 255 : 256).values);
      }
      res.set_content(rb::encode_embed_response(short_dim ? 255 : 256, out), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ReferenceServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> hits{0};
  std::atomic<int> fail_next{0};
  std::atomic<bool> garbage{false};
  std::atomic<bool> short_dim{false};
  std::string last_auth;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

rb::RemoteOptions fast_options() {
  rb::RemoteOptions o;
  o.requests_per_second = 1000;
  o.timeout = std::chrono::milliseconds(2000);
  return o;
}

std::unique_ptr<rb::RemoteBackend> client(const std::string& ep, rb::RemoteOptions o = fast_options()) {
  auto c = std::make_unique<rb::RemoteBackend>(ep, o);
  c->set_sleeper([](std::chrono::milliseconds) {});
  return c;
}

rb::EmbedRequest request(const std::string& model, std::vector<std::string> texts,
                         rb::TaskType task = rb::TaskType::kRetrievalDocument) {
  rb::EmbedRequest r;
  r.model = model;
  r.task = task;
  r.texts = std::move(texts);
  return r;
}

/// Endpoint under test: an external server when RETBENCH_CONFORMANCE_ENDPOINT
/// is set, the in-process reference otherwise.
class Conformance : public ::testing::Test {
 protected:
  void SetUp() override {
    if (const char* ep = std::getenv("RETBENCH_CONFORMANCE_ENDPOINT")) {
      endpoint_ = ep;
      model_ = std::getenv("RETBENCH_CONFORMANCE_MODEL") ? std::getenv("RETBENCH_CONFORMANCE_MODEL") : "mock-e5";
    } else {
      server_ = std::make_unique<ReferenceServer>();
      endpoint_ = server_->endpoint();
      model_ = "mock-e5";
    }
  }
  std::unique_ptr<ReferenceServer> server_;
  std::string endpoint_;
  std::string model_;
};

}  // namespace

TEST(Wire, RequestEncodingIsExact) {
  auto r = request("m", {"a", "b"}, rb::TaskType::kRetrievalQuery);
  EXPECT_EQ(rb::encode_embed_request(r),
            R"({"model":"m","normalize":true,"task":"query","texts":["a","b"]})");
  const auto back = rb::decode_embed_request(rb::encode_embed_request(r));
  EXPECT_EQ(back.texts, r.texts);
  EXPECT_EQ(back.task, r.task);
}

TEST(Wire, RequestDecodeRejectsBadShape) {
  EXPECT_THROW(rb::decode_embed_request(R"({"model":"m","task":"other","normalize":true,"texts":[]})"),
               rb::ProtocolError);
  EXPECT_THROW(rb::decode_embed_request(R"({"model":"m","task":"query","texts":["a"]})"),
               rb::ProtocolError);
  EXPECT_THROW(rb::decode_embed_request("[]"), rb::ProtocolError);
}

TEST(Wire, ResponseDecode) {
  const auto v = rb::decode_embed_response(R"({"dim":2,"vectors":[[1,0],[0.5,0.25]]})", 2);
  EXPECT_EQ(v[1], (std::vector<float>{0.5f, 0.25f}));
  EXPECT_THROW(rb::decode_embed_response(R"({"dim":2,"vectors":[[1,0]]})", 2), rb::ProtocolError);
  EXPECT_THROW(rb::decode_embed_response(R"({"dim":3,"vectors":[[1,0]]})", 1), rb::ProtocolError);
  EXPECT_THROW(rb::decode_embed_response("nope", 1), rb::ProtocolError);
}

TEST(Wire, Health) {
  const auto h = rb::decode_health(R"({"status":"ok","models":["a","b"]})");
  EXPECT_EQ(h.status, "ok");
  EXPECT_EQ(h.models.size(), 2u);
}

TEST_F(Conformance, HealthListsModels) {
  auto c = client(endpoint_);
  const auto h = c->health();
  EXPECT_EQ(h.status, "ok");
  EXPECT_NE(std::find(h.models.begin(), h.models.end(), model_), h.models.end());
}

TEST_F(Conformance, EmbedReturnsOneVectorPerTextInOrder) {
  auto c = client(endpoint_);
  const auto v = c->embed(request(model_, {"uno due", "tre", "uno due"}));
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].size(), v[1].size());
  EXPECT_EQ(v[0], v[2]);
  EXPECT_NE(v[0], v[1]);
}

TEST_F(Conformance, RawJsonShape) {
  httplib::Client raw(endpoint_);
  auto res = raw.Post("/embed", R"({"model":")" + model_ + R"(","task":"document","normalize":true,"texts":["a","b"]})",
                      "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  ASSERT_TRUE(j["dim"].is_number_integer());
  ASSERT_TRUE(j["vectors"].is_array());
  ASSERT_EQ(j["vectors"].size(), 2u);
  for (const auto& v : j["vectors"]) EXPECT_EQ(v.size(), j["dim"].get<std::size_t>());
}

TEST_F(Conformance, QueryAndDocumentTasksDiffer) {
  auto c = client(endpoint_);
  const auto q = c->embed(request(model_, {"roma capitale"}, rb::TaskType::kRetrievalQuery));
  const auto d = c->embed(request(model_, {"roma capitale"}, rb::TaskType::kRetrievalDocument));
  EXPECT_NE(q[0], d[0]);
}

TEST_F(Conformance, Deterministic) {
  auto c = client(endpoint_);
  const auto a = c->embed(request(model_, {"stesso testo"}));
  const auto b = c->embed(request(model_, {"stesso testo"}));
  ASSERT_EQ(a[0].size(), b[0].size());
  for (std::size_t i = 0; i < a[0].size(); ++i) EXPECT_NEAR(a[0][i], b[0][i], 1e-6);
}

TEST_F(Conformance, UnknownModelIs404) {
  httplib::Client raw(endpoint_);
  auto res = raw.Post("/embed", R"({"model":"no-such-model","task":"query","normalize":true,"texts":["a"]})",
                      "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  auto c = client(endpoint_);
  EXPECT_THROW(c->embed(request("no-such-model", {"a"})), rb::ProtocolError);
}

TEST_F(Conformance, MalformedRequestIs400) {
  httplib::Client raw(endpoint_);
  auto res = raw.Post("/embed", R"({"texts": 5})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST(Remote, RetriesTransientThenSucceeds) {
  ReferenceServer s;
  s.fail_next = 2;
  auto c = client(s.endpoint());
  std::vector<std::chrono::milliseconds> sleeps;
  c->set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  const auto v = c->embed(request("mock-256", {"a"}));
  EXPECT_EQ(v.size(), 1u);
  EXPECT_EQ(c->attempts(), 3u);
  ASSERT_EQ(sleeps.size(), 2u);
  EXPECT_LT(sleeps[0].count(), 200);
  EXPECT_LT(sleeps[1].count(), 400);
}

TEST(Remote, DownServerFailsAfterFiveAttempts) {
  int port;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto o = fast_options();
  o.timeout = std::chrono::milliseconds(300);
  auto c = client("http://127.0.0.1:" + std::to_string(port), o);
  try {
    c->embed(request("mock-256", {"a"}));
    FAIL();
  } catch (const rb::TransportError& e) {
    EXPECT_EQ(e.code(), rb::ExitCode::kTransport);
  }
  EXPECT_EQ(c->attempts(), 5u);
}

TEST(Remote, PersistentOverloadExhaustsRetries) {
  ReferenceServer s;
  s.fail_next = 100;
  auto c = client(s.endpoint());
  EXPECT_THROW(c->embed(request("mock-256", {"a"})), rb::TransportError);
  EXPECT_EQ(s.hits.load(), 5);
}

TEST(Remote, MalformedResponseIsProtocolError) {
  ReferenceServer s;
  s.garbage = true;
  auto c = client(s.endpoint());
  EXPECT_THROW(c->embed(request("mock-256", {"a"})), rb::ProtocolError);
}

TEST(Remote, WrongDimIsContractViolation) {
  ReferenceServer s;
  s.short_dim = true;
  rb::EmbedderSpec spec;
  spec.name = "mock-256";
  spec.dim = 256;
  spec.backend = rb::BackendKind::kRemote;
  spec.endpoint = s.endpoint();
  rb::Embedder e(spec, client(s.endpoint()));
  EXPECT_THROW(e.embed_one("a", rb::TaskType::kRetrievalDocument), rb::ContractViolation);
}

TEST(Remote, BearerTokenAndBasePath) {
  ReferenceServer s;
  auto o = fast_options();
  o.token = "secret";
  auto c = client(s.endpoint() + "/", o);
  c->embed(request("mock-256", {"a"}));
  EXPECT_EQ(s.last_auth, "Bearer secret");
}

TEST(Remote, EmbedderSendsRawTextForServerPrefixing) {
  ReferenceServer s;
  rb::EmbedderSpec spec;
  spec.name = "mock-e5";
  spec.dim = 256;
  spec.prefix_policy = rb::PrefixPolicy::kE5Style;
  spec.backend = rb::BackendKind::kRemote;
  spec.endpoint = s.endpoint();
  rb::Embedder e(spec, client(s.endpoint()));
  const auto q = e.embed_one("roma", rb::TaskType::kRetrievalQuery);
  EXPECT_EQ(q.values, rb::mock_embed("query: roma", 256).values);
}

TEST(RateLimit, SpacesRequests) {
  rb::RateLimiter limiter(20.0);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 5; ++i) limiter.acquire();
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_GE(elapsed, std::chrono::milliseconds(190));
}

TEST(RateLimit, SharedPerEndpoint) {
  EXPECT_EQ(rb::RateLimiter::for_endpoint("http://x", 5), rb::RateLimiter::for_endpoint("http://x", 5));
  EXPECT_NE(rb::RateLimiter::for_endpoint("http://x", 5), rb::RateLimiter::for_endpoint("http://y", 5));
}
