#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "asym/http_judge.hpp"

using namespace asym;

namespace {

/// Local judge server whose reply is chosen per test.
class FakeServer {
 public:
  using Handler = std::function<void(const Json& req, httplib::Response& res, int call)>;

  explicit FakeServer(Handler h) : handler_(std::move(h)) {
    server_.Post("/judge", [this](const httplib::Request& req, httplib::Response& res) {
      handler_(Json::parse(req.body), res, calls_++);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int calls() const { return calls_; }

 private:
  httplib::Server server_;
  Handler handler_;
  std::atomic<int> calls_{0};
  int port_ = 0;
  std::thread thread_;
};

HttpJudgeOptions fast() {
  HttpJudgeOptions o;
  o.retries = 2;
  o.backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::milliseconds(2000);
  return o;
}

const Query kQuery{"q1", "fever cause", std::nullopt};
const std::vector<Document> kDocs = {{"a", "fever text", std::nullopt}, {"b", "other text", std::nullopt}};

void reply(httplib::Response& res, const Json& j) { res.set_content(j.dump(), "application/json"); }

}  // namespace

TEST(HttpJudge, SendsProtocolRequestAndParsesGrades) {
  Json seen;
  FakeServer srv([&](const Json& req, httplib::Response& res, int) {
    seen = req;
    reply(res, {{"grades", {"S", "C"}}});
  });
  HttpJudge j(srv.url(), fast());
  const auto g = j.grade(kQuery, kDocs);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0], Grade::S);
  EXPECT_EQ(g[1], Grade::C);
  EXPECT_EQ(seen["query"], "fever cause");
  EXPECT_EQ(seen["passages"], Json({"fever text", "other text"}));
  EXPECT_EQ(j.id(), srv.url());
}

TEST(HttpJudge, RetriesTransientFailures) {
  FakeServer srv([](const Json&, httplib::Response& res, int call) {
    if (call < 2) {
      res.status = call == 0 ? 503 : 429;
      return;
    }
    reply(res, {{"grades", {"A", "D"}}});
  });
  const auto g = HttpJudge(srv.url(), fast()).grade(kQuery, kDocs);
  EXPECT_EQ(g[0], Grade::A);
  EXPECT_EQ(srv.calls(), 3);
}

TEST(HttpJudge, ExhaustedRetriesLeavePassagesUnjudged) {
  FakeServer srv([](const Json&, httplib::Response& res, int) { res.status = 500; });
  const auto g = HttpJudge(srv.url(), fast()).grade(kQuery, kDocs);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_FALSE(g[0]);
  EXPECT_FALSE(g[1]);
  EXPECT_EQ(srv.calls(), 3);
}

TEST(HttpJudge, UnreachableServerLeavesPassagesUnjudged) {
  int port = 0;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  auto o = fast();
  o.retries = 1;
  o.timeout = std::chrono::milliseconds(200);
  const auto g = HttpJudge("http://127.0.0.1:" + std::to_string(port), o).grade(kQuery, kDocs);
  EXPECT_FALSE(g[0]);
}

TEST(HttpJudge, ProtocolViolationsThrow) {
  std::string body;
  int status = 200;
  FakeServer srv([&](const Json&, httplib::Response& res, int) {
    res.status = status;
    res.set_content(body, "application/json");
  });
  HttpJudge j(srv.url(), fast());
  for (const std::string b : {"{not json", "{\"grades\": \"S\"}", "{\"grades\": [\"S\"]}",
                              "{\"grades\": [\"S\", \"E\"]}", "{\"grades\": [\"S\", 3]}", "[]"}) {
    body = b;
    EXPECT_THROW(j.grade(kQuery, kDocs), ProtocolError) << b;
  }
  status = 400;
  body = "{\"grades\": [\"S\", \"S\"]}";
  EXPECT_THROW(j.grade(kQuery, kDocs), ProtocolError);
}

TEST(HttpJudge, PlugsIntoConsensusLabeling) {
  FakeServer s1([](const Json&, httplib::Response& res, int) { reply(res, {{"grades", {"S", "D"}}}); });
  FakeServer s2([](const Json&, httplib::Response& res, int) { reply(res, {{"grades", {"A", "A"}}}); });
  HttpJudge j1(s1.url(), fast()), j2(s2.url(), fast());
  std::vector<JudgeClient*> js = {&j1, &j2};
  const std::vector<Query> qs = {kQuery};
  const std::map<std::string, Document> docs = {{"a", kDocs[0]}, {"b", kDocs[1]}};
  const std::map<std::string, std::vector<std::string>> cands = {{"q1", {"a", "b"}}};
  const auto r = label_candidates(qs, cands, docs, js);
  EXPECT_EQ(r.positives, 1u);
  EXPECT_EQ(r.discarded, 1u);
}
