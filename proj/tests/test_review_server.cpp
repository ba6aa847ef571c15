#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "labelaudit/review_server.hpp"

using namespace labelaudit;
namespace fs = std::filesystem;

namespace {

class LiveServer : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("labelaudit_server_" +
                                        std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    for (int i = 0; i < 3; ++i) {
      Incident inc;
      inc.incident_id = "r" + std::to_string(i);
      inc.source = "T";
      inc.note_a = "note";
      inc.labels["v"] = Label::present;
      corpus_.add(inc);
      ledger_.counts[inc.incident_id] = 5;
      ledger_.flags.push_back(inc.incident_id);
    }
    ledger_.variable = "v";
    ledger_.target_source = "T";
  }

  void start(ServerOptions options = {}) {
    store_ = std::make_unique<ReviewStore>(dir_ / "store");
    server_ = std::make_unique<ReviewServer>(*store_, &corpus_, options);
    port_ = server_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen(); });
    server_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }

  void TearDown() override {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
    fs::remove_all(dir_);
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  void create(const std::vector<std::string>& annotators) {
    auto r = post("/api/sessions", {{"ledger", to_json(ledger_)}, {"annotators", annotators}, {"session_id", "s"}});
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 201) << r->body;
  }

  httplib::Result adjudicate(const std::string& id, const std::string& who, const std::string& verdict, int version) {
    return post("/api/sessions/s/adjudications",
                {{"incident_id", id}, {"annotator_id", who}, {"verdict", verdict}, {"version", version}});
  }

  fs::path dir_;
  Corpus corpus_;
  ErrorCountLedger ledger_;
  std::unique_ptr<ReviewStore> store_;
  std::unique_ptr<ReviewServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_F(LiveServer, SessionLifecycleAndStatusCodes) {
  start();
  create({"a", "b"});
  auto dup = post("/api/sessions", {{"ledger", to_json(ledger_)}, {"annotators", {"a"}}, {"session_id", "s"}});
  EXPECT_EQ(dup->status, 400);
  EXPECT_EQ(post("/api/sessions", {{"annotators", {"a"}}})->status, 400);
  EXPECT_EQ(client_->Post("/api/sessions", "{not json", "application/json")->status, 400);

  auto ok = adjudicate("r0", "a", "flip", 1);
  EXPECT_EQ(ok->status, 201);
  EXPECT_EQ(json::parse(ok->body)["version"], 1);
  auto stale = adjudicate("r0", "a", "keep", 1);
  EXPECT_EQ(stale->status, 409);
  EXPECT_EQ(json::parse(stale->body)["latest_version"], 1);
  EXPECT_EQ(adjudicate("zz", "a", "keep", 1)->status, 404);
  EXPECT_EQ(adjudicate("r0", "a", "maybe", 2)->status, 400);
  EXPECT_EQ(client_->Get("/api/sessions/nope")->status, 404);

  auto iaa = client_->Get("/api/sessions/s/iaa");
  EXPECT_EQ(iaa->status, 422);
  EXPECT_EQ(json::parse(iaa->body)["pending"].size(), 5u);
  EXPECT_EQ(post("/api/sessions/s/export", json::object())->status, 422);

  for (const char* id : {"r1", "r2"}) adjudicate(id, "a", "keep", 1);
  for (const char* id : {"r0", "r1", "r2"}) adjudicate(id, "b", std::string(id) == "r2" ? "flip" : "keep", 1);
  iaa = client_->Get("/api/sessions/s/iaa");
  ASSERT_EQ(iaa->status, 200);
  EXPECT_EQ(json::parse(iaa->body)["items"], 3);

  auto e1 = post("/api/sessions/s/export", {{"resolution", "consensus_only"}});
  auto e2 = post("/api/sessions/s/export", {{"resolution", "consensus_only"}});
  ASSERT_EQ(e1->status, 200);
  const auto j1 = json::parse(e1->body), j2 = json::parse(e2->body);
  EXPECT_EQ(j1["export"], j2["export"]);
  EXPECT_TRUE(j2["reused"].get<bool>());
  EXPECT_EQ(j1["disagreements"].size(), 2u);
  EXPECT_EQ(post("/api/sessions/s/export", {{"resolution", "vote"}})->status, 400);
}

TEST_F(LiveServer, ItemsFilteredByAnnotatorAndStatus) {
  start();
  create({"a", "b"});
  adjudicate("r1", "a", "uncertain", 1);
  auto r = client_->Get("/api/sessions/s/items?annotator=a&status=pending");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["items"].size(), 2u);
  r = client_->Get("/api/sessions/s/items?annotator=b");
  EXPECT_EQ(json::parse(r->body)["items"][0]["peer_status"].is_string(), true);
  EXPECT_EQ(client_->Get("/api/sessions/s/items?status=bogus")->status, 400);
  EXPECT_EQ(client_->Get("/api/sessions/s/items?annotator=z")->status, 404);
  EXPECT_EQ(client_->Get("/api/sessions/s")->status, 200);
}

TEST_F(LiveServer, PlaceholderPageAtRoot) {
  start();
  auto r = client_->Get("/");
  ASSERT_EQ(r->status, 200);
  EXPECT_NE(r->body.find("/api/sessions"), std::string::npos);
  EXPECT_NE(r->get_header_value("Content-Type").find("text/html"), std::string::npos);
}

TEST_F(LiveServer, ServesStaticDirectory) {
  fs::create_directories(dir_ / "www");
  std::ofstream(dir_ / "www" / "index.html") << "<p>bundle</p>";
  start({dir_ / "www"});
  auto r = client_->Get("/index.html");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "<p>bundle</p>");
  EXPECT_EQ(client_->Get("/")->body, "<p>bundle</p>");
}

TEST(ReviewServerOptions, MissingStaticDirIsUsageError) {
  ReviewStore store(fs::temp_directory_path() / "labelaudit_server_missing");
  EXPECT_THROW(ReviewServer(store, nullptr, {fs::path("/nonexistent/labelaudit")}), UsageError);
  fs::remove_all(fs::temp_directory_path() / "labelaudit_server_missing");
}
