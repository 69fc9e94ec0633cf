#include <atomic>
#include <thread>

#include "artifact/reward.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace artifact;
namespace si = scene_index;

namespace {

SceneParams nominal_scene() {
  const SceneConfig cfg;
  SceneParams p;
  p[si::kCenterX] = 0.5;
  p[si::kCenterY] = 0.5;
  p[si::kRadius] = 0.12;
  for (int slot = 0; slot < kLimbSlots; ++slot) {
    p[si::angle(slot)] = cfg.base_angle(slot);
    p[si::length(slot)] = slot < 4 ? 0.2 : 0.0;
  }
  return p;
}

// Local HTTP server on an ephemeral port, stopped on destruction.
class StubServer {
 public:
  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/classify", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/classify"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RemoteOptions fast() {
  RemoteOptions o;
  o.initial_backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::milliseconds(2000);
  return o;
}

}  // namespace

TEST_CASE("reward of the reduced configuration") {
  RewardConfig cfg = RewardConfig::defaults(default_taxonomy());
  cfg.alpha = 0;
  cfg.beta = 0;
  CHECK(artifact_reward("No artifacts", cfg, EmbeddingModel()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(artifact_reward("...", cfg, EmbeddingModel()), DomainError);
}

TEST_CASE("default reward is positive and peaks at No artifacts") {
  const Taxonomy& t = default_taxonomy();
  const RewardConfig cfg = RewardConfig::defaults(t);
  const EmbeddingModel model;
  const auto table = enumerate_canonical_rewards(cfg, model, t, 1);
  REQUIRE(table.size() == 14);
  CHECK(table.front().answer == "No artifacts.");
  for (std::size_t i = 1; i < table.size(); ++i) {
    CHECK(table[i].reward > 0);
    CHECK(table.front().reward > table[i].reward);
  }
  const auto pairs = enumerate_canonical_rewards(cfg, model, t, 2);
  CHECK(pairs.size() == 1 + 13 + 78);
  for (const auto& entry : pairs) CHECK(entry.reward > 0);

  const ArtifactReward reward(cfg, model, t);
  CHECK(reward.max_canonical_reward() == table.front().reward);
  CHECK(reward("No artifacts.") == table.front().reward);
  CHECK(reward("Blur.") == table[12].reward);
  CHECK(reward.min_canonical_reward() > 0);
}

TEST_CASE("reward construction rejects non-positive configurations") {
  RewardConfig cfg = RewardConfig::defaults(default_taxonomy());
  cfg.beta = 0;
  cfg.alpha = 1.0;
  CHECK_THROWS_AS(ArtifactReward(cfg, EmbeddingModel(), default_taxonomy()), ValidationError);
  cfg.phrases.clear();
  CHECK_THROWS_AS(ArtifactReward(cfg, EmbeddingModel(), default_taxonomy()), ValidationError);
}

TEST_CASE("oracle answers") {
  const SceneConfig cfg;
  const Taxonomy& t = default_taxonomy();
  CHECK(oracle_answer(nominal_scene(), cfg, t) == "No artifacts.");
  SceneParams three = nominal_scene();
  three[si::length(2)] = 0.0;
  const std::string answer = oracle_answer(three, cfg, t);
  CHECK(answer.find("Omitted components") != std::string::npos);
  CHECK(oracle_answer(three, cfg, t) == answer);
  const OracleClassifier classifier(cfg, t);
  CHECK(classifier.answer("any question", three) == answer);

  const Taxonomy small({{0, "Blur", CoarseGroup::Others, "Smeared."}}, "one");
  CHECK_THROWS_AS(OracleClassifier(cfg, small), ValidationError);
}

TEST_CASE("base64") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  CHECK(base64_encode(std::string("\xff\x00\x10", 3)) == "/wAQ");
}

TEST_CASE("remote classifier protocol") {
  SUBCASE("echo") {
    std::string seen_format, seen_question;
    StubServer server([&](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      seen_format = body.at("image_format");
      seen_question = body.at("question");
      res.set_content(R"({"answer": "No artifacts."})", "application/json");
    });
    CHECK(remote_answer("What is wrong?", "P5 bytes", server.url(), fast()) == "No artifacts.");
    CHECK(seen_format == "pgm");
    CHECK(seen_question == "What is wrong?");

    const RemoteClassifier classifier(server.url(), fast());
    CHECK(classifier.answer("q", nominal_scene()) == "No artifacts.");
  }
  SUBCASE("three server errors") {
    std::atomic<int> calls = 0;
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
      ++calls;
      res.status = 500;
    });
    CHECK_THROWS_AS(remote_answer("q", "img", server.url(), fast()), TransportError);
    CHECK(calls == 3);
  }
  SUBCASE("recovers after a transient error") {
    std::atomic<int> calls = 0;
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
      if (++calls == 1) {
        res.status = 503;
        return;
      }
      res.set_content(R"({"answer": "Blur."})", "application/json");
    });
    CHECK(remote_answer("q", "img", server.url(), fast()) == "Blur.");
    CHECK(calls == 2);
  }
  SUBCASE("malformed JSON") {
    StubServer server([](const httplib::Request&, httplib::Response& res) {
      res.set_content("{not json", "application/json");
    });
    CHECK_THROWS_AS(remote_answer("q", "img", server.url(), fast()), ProtocolError);
  }
  SUBCASE("missing answer field is named") {
    StubServer server([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"reply": "Blur."})", "application/json");
    });
    try {
      remote_answer("q", "img", server.url(), fast());
      FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
      CHECK(std::string(e.what()).find("answer") != std::string::npos);
    }
  }
  SUBCASE("client errors are not retried") {
    std::atomic<int> calls = 0;
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
      ++calls;
      res.status = 404;
    });
    CHECK_THROWS_AS(remote_answer("q", "img", server.url(), fast()), ProtocolError);
    CHECK(calls == 1);
  }
  SUBCASE("unreachable endpoint and bad URLs") {
    CHECK_THROWS_AS(remote_answer("q", "img", "http://127.0.0.1:1/x", fast()), TransportError);
    CHECK_THROWS_AS(remote_answer("q", "img", "https://example.com", fast()), TransportError);
  }
}

TEST_CASE("No artifacts maximizes the reward over every canonical answer") {
  const Taxonomy& t = default_taxonomy();
  const auto table = enumerate_canonical_rewards(RewardConfig::defaults(t), EmbeddingModel(), t, t.size());
  REQUIRE(table.size() == 8192);
  for (std::size_t i = 1; i < table.size(); ++i) {
    CHECK(table[i].reward > 0);
    CHECK(table[i].reward < table.front().reward);
  }
}
