#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "parityd/service.hpp"

using namespace parityd;
using namespace std::chrono_literals;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string& compas_csv() {
  static const std::string text = slurp(PARITYD_TEST_DATA_DIR "/compas.csv");
  return text;
}

nlohmann::json compas_schema() {
  return {{"entity_id_column", "id"},
          {"score_column", "decile_score"},
          {"decision_column", "score_binary"},
          {"label_column", "two_yr_recid"},
          {"attribute_columns", {"race", "sex", "age_cat"}}};
}

nlohmann::json fixed_reference() {
  return {{"kind", "fixed"}, {"groups", {{"race", "Caucasian"}, {"sex", "Male"}, {"age_cat", "25 - 45"}}}};
}

class ServiceTest : public ::testing::Test {
 protected:
  void start(service::ServiceOptions opts = {}) {
    opts.host = "127.0.0.1";
    service_ = std::make_unique<service::Service>(opts, FairnessTree::builtin(), [this] { return clock(); });
    port_ = service_->bind_any_port();
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { service_->listen_after_bind(); });
    service_->wait_until_ready();
  }

  void TearDown() override {
    if (service_) service_->stop();
    if (thread_.joinable()) thread_.join();
  }

  service::Clock::time_point clock() const { return base_ + std::chrono::seconds(offset_seconds_.load()); }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30s);
    c.set_write_timeout(30s);
    return c;
  }

  httplib::Result upload(const std::string& csv, const nlohmann::json& schema) const {
    httplib::MultipartFormDataItems items = {{"file", csv, "data.csv", "text/csv"},
                                             {"schema", schema.dump(), "schema.json", "application/json"}};
    return client().Post("/v1/datasets", items);
  }

  std::string upload_compas() const {
    auto res = upload(compas_csv(), compas_schema());
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 201) << res->body;
    return nlohmann::json::parse(res->body).at("dataset_id");
  }

  httplib::Result audit(const std::string& id, const nlohmann::json& body) const {
    return client().Post("/v1/datasets/" + id + "/audits", body.dump(), "application/json");
  }

  std::unique_ptr<service::Service> service_;
  std::thread thread_;
  int port_ = 0;
  service::Clock::time_point base_ = service::Clock::now();
  std::atomic<long long> offset_seconds_{0};
};

}  // namespace

TEST_F(ServiceTest, UploadReturnsSummary) {
  start();
  auto res = upload(compas_csv(), compas_schema());
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201) << res->body;
  auto j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j.at("row_count"), 7214);
  EXPECT_EQ(j.at("dataset_id").get<std::string>().rfind("ds_", 0), 0u);
  EXPECT_EQ(j.at("content_hash").get<std::string>().rfind("sha256:", 0), 0u);
  EXPECT_EQ(j.at("schema").at("label_column"), "two_yr_recid");

  auto get = client().Get("/v1/datasets/" + j.at("dataset_id").get<std::string>());
  ASSERT_TRUE(get);
  EXPECT_EQ(get->status, 200);
  EXPECT_EQ(nlohmann::json::parse(get->body), j);
  EXPECT_EQ(get->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(ServiceTest, UploadErrors) {
  start();
  auto res = upload("id,score,race\na,0.5,x\n", {{"score_column", "score"}, {"label_column", "label"},
                                                  {"entity_id_column", "id"}, {"attribute_columns", {"race"}}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(nlohmann::json::parse(res->body).at("code"), "MissingColumn");

  res = upload("id,score,label,race\na,0.5,1,x\n", {{"score_column", "score"}, {"attribute_columns", {"race"}}});
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(nlohmann::json::parse(res->body).at("code"), "InvalidSchema");

  res = upload("id,score,label,race\n", {{"score_column", "score"}, {"label_column", "label"}, {"attribute_columns", {"race"}}});
  EXPECT_EQ(nlohmann::json::parse(res->body).at("code"), "EmptyDataset");

  res = client().Post("/v1/datasets", "{}", "application/json");
  EXPECT_EQ(res->status, 400);
}

TEST_F(ServiceTest, OversizedUploadIs413) {
  start();
  std::string big(70u << 20, 'x');
  auto res = client().Post("/v1/datasets", big, "text/csv");
  ASSERT_TRUE(res) << httplib::to_string(res.error());
  EXPECT_EQ(res->status, 413);
  EXPECT_EQ(nlohmann::json::parse(res->body).at("code"), "PayloadTooLarge");
}

TEST_F(ServiceTest, CompasAuditAndTauMonotonicity) {
  start();
  const auto id = upload_compas();
  auto failing = [&](double tau) {
    auto res = audit(id, {{"reference", fixed_reference()}, {"tau", tau}});
    EXPECT_EQ(res->status, 200) << res->body;
    auto j = nlohmann::json::parse(res->body);
    std::size_t n = 0;
    for (const auto& a : j.at("attributes")) {
      for (const auto& d : a.at("disparities")) n += d.at("verdict") == "fail";
    }
    return std::make_pair(n, j);
  };
  auto [strict, report] = failing(0.8);
  auto [loose, _] = failing(0.3);
  EXPECT_LE(loose, strict);
  EXPECT_GT(strict, 0u);
  EXPECT_FALSE(report.contains("timestamp"));
  for (const auto& d : report.at("attributes")[0].at("disparities")) {
    if (d.at("group") == "African-American" && d.at("metric") == "FPR") {
      EXPECT_NEAR(d.at("ratio").get<double>(), 1.91, 0.01);
    }
  }
}

TEST_F(ServiceTest, AuditConfigErrorsAre422) {
  start();
  const auto id = upload_compas();
  auto res = audit(id, {{"reference", {{"kind", "fixed"}, {"groups", {{"race", "martian"}, {"sex", "Male"}, {"age_cat", "25 - 45"}}}}}});
  EXPECT_EQ(res->status, 422);
  EXPECT_EQ(nlohmann::json::parse(res->body).at("code"), "FixedGroupAbsent");

  res = audit(id, {{"tau", 0}});
  EXPECT_EQ(res->status, 422);
  res = audit(id, {{"tree_path", {"uses-labels", "sideways"}}});
  EXPECT_EQ(res->status, 422);
  EXPECT_EQ(nlohmann::json::parse(res->body).at("code"), "InvalidAnswer");
  res = audit(id, {{"attributes", {"zodiac"}}});
  EXPECT_EQ(res->status, 422);

  res = client().Post("/v1/datasets/" + id + "/audits", "{not json", "application/json");
  EXPECT_EQ(res->status, 400);
  res = audit("ds_nope", nlohmann::json::object());
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(client().Get("/v1/datasets/ds_nope/audits")->status, 404);
  EXPECT_EQ(client().Get("/v1/nowhere")->status, 404);
}

TEST_F(ServiceTest, MatchesTheEngineAndRepeatsIdentically) {
  start();
  const auto id = upload_compas();
  nlohmann::json body = {{"threshold", {{"kind", "top_percent"}, {"p", 0.25}, {"ties", "all"}}},
                         {"reference", {{"kind", "min_metric"}}},
                         {"metrics", {"FDR", "FNR"}}};
  auto first = audit(id, body);
  auto second = audit(id, body);
  ASSERT_EQ(first->status, 200) << first->body;
  EXPECT_EQ(first->body, second->body);

  ParseOptions opts;
  auto ds = parse_csv(compas_csv(), schema_from_json(compas_schema()), opts);
  auto expected = dump_report_json(report_to_json(run_audit(ds, config_from_json(body, ds)), std::nullopt));
  EXPECT_EQ(first->body, expected);
}

TEST_F(ServiceTest, HistoryKeepsSubmissionOrder) {
  start();
  const auto id = upload_compas();
  for (double tau : {0.5, 0.9, 0.7}) {
    offset_seconds_ += 1;
    ASSERT_EQ(audit(id, {{"tau", tau}})->status, 200);
  }
  auto res = client().Get("/v1/datasets/" + id + "/audits");
  auto j = nlohmann::json::parse(res->body);
  ASSERT_EQ(j.at("audits").size(), 3u);
  EXPECT_EQ(j.at("audits")[0].at("report").at("config").at("tau"), 0.5);
  EXPECT_EQ(j.at("audits")[1].at("report").at("config").at("tau"), 0.9);
  EXPECT_EQ(j.at("audits")[2].at("report").at("config").at("tau"), 0.7);
  EXPECT_LT(j.at("audits")[0].at("submitted_at").get<std::string>(), j.at("audits")[2].at("submitted_at").get<std::string>());
}

TEST_F(ServiceTest, FairnessTreeEtag) {
  start();
  auto res = client().Get("/v1/fairness-tree");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->body, FairnessTree::builtin().definition_text());
  const auto etag = res->get_header_value("ETag");
  EXPECT_EQ(etag, FairnessTree::builtin().etag());
  auto again = client().Get("/v1/fairness-tree", {{"If-None-Match", etag}});
  EXPECT_EQ(again->status, 304);
  EXPECT_TRUE(again->body.empty());
  EXPECT_EQ(client().Get("/v1/fairness-tree", {{"If-None-Match", "\"stale\""}})->status, 200);
}

TEST_F(ServiceTest, ParallelAuditsAgree) {
  start();
  const auto id = upload_compas();
  const nlohmann::json body = {{"reference", fixed_reference()}};
  std::vector<std::string> bodies(8);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    threads.emplace_back([&, i] {
      auto res = audit(id, body);
      if (res && res->status == 200) bodies[i] = res->body;
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& b : bodies) {
    ASSERT_FALSE(b.empty());
    EXPECT_EQ(b, bodies[0]);
  }
  auto hist = nlohmann::json::parse(client().Get("/v1/datasets/" + id + "/audits")->body);
  EXPECT_EQ(hist.at("audits").size(), bodies.size());
}

TEST_F(ServiceTest, DatasetsExpireAfterTtl) {
  service::ServiceOptions opts;
  opts.ttl = 1h;
  start(opts);
  const auto id = upload_compas();
  offset_seconds_ = 3599;
  EXPECT_EQ(client().Get("/v1/datasets/" + id)->status, 200);
  offset_seconds_ = 3600;
  EXPECT_EQ(client().Get("/v1/datasets/" + id)->status, 404);
  EXPECT_EQ(service_->store().size(), 0u);
}

TEST_F(ServiceTest, ReportsArePersistedWhenConfigured) {
  auto dir = std::filesystem::temp_directory_path() / ("parityd_persist_" + service::random_id());
  service::ServiceOptions opts;
  opts.persist_dir = dir;
  start(opts);
  const auto id = upload_compas();
  auto first = audit(id, {{"tau", 0.8}});
  auto second = audit(id, {{"tau", 0.6}});
  EXPECT_EQ(slurp((dir / id / "1.json").string()), first->body);
  EXPECT_EQ(slurp((dir / id / "2.json").string()), second->body);
  std::filesystem::remove_all(dir);
}

TEST(ServiceOptions, AddressParsing) {
  service::ServiceOptions o;
  service::apply_address(o, "0.0.0.0:9000");
  EXPECT_EQ(o.host, "0.0.0.0");
  EXPECT_EQ(o.port, 9000);
  service::apply_address(o, ":7000");
  EXPECT_EQ(o.host, "0.0.0.0");
  EXPECT_EQ(o.port, 7000);
  EXPECT_THROW(service::apply_address(o, "localhost:http"), Error);
}
