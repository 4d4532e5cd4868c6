#pragma once

#include <openssl/rand.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "parityd/audit.hpp"
#include "parityd/fairness_tree.hpp"
#include "parityd/ingest.hpp"
#include "parityd/report.hpp"

namespace parityd::service {

using Clock = std::chrono::system_clock;

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_body_bytes = std::size_t{64} << 20;
  std::chrono::seconds ttl = std::chrono::hours(24);
  /// When set, every report is also written to <dir>/<dataset id>/<n>.json.
  std::optional<std::filesystem::path> persist_dir;
  std::string cors_origin = "*";
  std::size_t worker_threads = 8;
};

/// Parses "host:port" or ":port" or "port".
inline void apply_address(ServiceOptions& opts, const std::string& addr) {
  const auto colon = addr.rfind(':');
  std::string port = addr;
  if (colon != std::string::npos) {
    if (colon > 0) opts.host = addr.substr(0, colon);
    port = addr.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::invalid_argument("port");
    opts.port = p;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidConfig, "bad listen address '" + addr + "'", addr);
  }
}

inline std::string random_id() {
  unsigned char bytes[16];
  if (RAND_bytes(bytes, sizeof bytes) != 1) throw std::runtime_error("RAND_bytes failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = "ds_";
  for (unsigned char b : bytes) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

inline std::string format_time(Clock::time_point t) {
  const auto tt = Clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct StoredReport {
  std::string submitted_at;
  std::string body;
};

/// One uploaded dataset and the audits run against it. The dataset is
/// immutable; only the report history changes, under `mutex`.
struct Session {
  std::string id;
  std::shared_ptr<const Dataset> dataset;
  Diagnostics diagnostics;
  Clock::time_point created;
  Clock::time_point expires;

  std::size_t append(StoredReport report) {
    std::lock_guard lock(mutex_);
    history_.push_back(std::move(report));
    return history_.size();
  }

  std::vector<StoredReport> history() const {
    std::lock_guard lock(mutex_);
    return history_;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<StoredReport> history_;
};

/// In-memory sessions with TTL eviction. Expired sessions are dropped lazily
/// on access and on every insert.
class SessionStore {
 public:
  using NowFn = std::function<Clock::time_point()>;

  explicit SessionStore(std::chrono::seconds ttl, NowFn now = [] { return Clock::now(); })
      : ttl_(ttl), now_(std::move(now)) {}

  std::shared_ptr<Session> create(Dataset dataset, Diagnostics diagnostics) {
    auto s = std::make_shared<Session>();
    s->id = random_id();
    s->dataset = std::make_shared<const Dataset>(std::move(dataset));
    s->diagnostics = std::move(diagnostics);
    s->created = now_();
    s->expires = s->created + ttl_;
    std::unique_lock lock(mutex_);
    evict_locked();
    sessions_.emplace(s->id, s);
    return s;
  }

  std::shared_ptr<Session> find(const std::string& id) {
    {
      std::shared_lock lock(mutex_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) return nullptr;
      if (it->second->expires > now_()) return it->second;
    }
    std::unique_lock lock(mutex_);
    evict_locked();
    return nullptr;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
  }

 private:
  void evict_locked() {
    const auto now = now_();
    std::erase_if(sessions_, [&](const auto& kv) { return kv.second->expires <= now; });
  }

  std::chrono::seconds ttl_;
  NowFn now_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

inline nlohmann::json error_body(std::string_view code, const std::string& message, const std::string& detail = {}) {
  return {{"code", code}, {"message", message}, {"detail", detail}};
}

inline int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidPolicy:
    case ErrorCode::PolicyDatasetMismatch:
    case ErrorCode::UnknownAttribute:
    case ErrorCode::FixedGroupAbsent:
    case ErrorCode::NoDefinedMetric:
    case ErrorCode::InvalidAnswer:
    case ErrorCode::AlreadyTerminal:
    case ErrorCode::NotTerminal:
      return 422;
    default:
      return 400;
  }
}

/// The /v1 HTTP API over the shared engine.
class Service {
 public:
  explicit Service(ServiceOptions options = {}, const FairnessTree& tree = FairnessTree::builtin(),
                   SessionStore::NowFn now = [] { return Clock::now(); })
      : options_(std::move(options)), tree_(tree), store_(options_.ttl, now), now_(std::move(now)) {
    install();
  }

  httplib::Server& server() { return server_; }
  SessionStore& store() { return store_; }

  /// Binds to options.host and an OS-chosen port; returns the port.
  int bind_any_port() { return server_.bind_to_any_port(options_.host); }
  bool bind() { return server_.bind_to_port(options_.host, options_.port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  bool listen() { return server_.listen(options_.host, options_.port); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
  }

  void install() {
    server_.set_payload_max_length(options_.max_body_bytes);
    server_.new_task_queue = [n = options_.worker_threads] { return new httplib::ThreadPool(n); };
    server_.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                                 {"Access-Control-Allow-Headers", "Content-Type, If-None-Match"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                 {"Access-Control-Expose-Headers", "ETag"}});
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 413) {
        send_json(res, 413, error_body("PayloadTooLarge", "request body exceeds the upload size cap"));
      } else if (res.status == 404) {
        send_json(res, 404, error_body("NotFound", "no such endpoint"));
      }
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        if (ep) std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send_json(res, 500, error_body("Internal", what));
    });
    server_.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server_.Get("/v1/fairness-tree", [this](const httplib::Request& req, httplib::Response& res) {
      const auto etag = tree_.etag();
      res.set_header("ETag", etag);
      res.set_header("Cache-Control", "public, max-age=3600");
      if (req.get_header_value("If-None-Match") == etag) {
        res.status = 304;
        return;
      }
      res.status = 200;
      res.set_content(tree_.definition_text(), "application/json");
    });

    server_.Post("/v1/datasets", [this](const httplib::Request& req, httplib::Response& res) { upload(req, res); });
    server_.Get("/v1/datasets/:id", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = store_.find(req.path_params.at("id"));
      if (!s) return send_json(res, 404, error_body("UnknownDataset", "no such dataset", req.path_params.at("id")));
      send_json(res, 200, dataset_summary(*s));
    });
    server_.Post("/v1/datasets/:id/audits", [this](const httplib::Request& req, httplib::Response& res) { audit(req, res); });
    server_.Get("/v1/datasets/:id/audits", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = store_.find(req.path_params.at("id"));
      if (!s) return send_json(res, 404, error_body("UnknownDataset", "no such dataset", req.path_params.at("id")));
      nlohmann::json audits = nlohmann::json::array();
      for (const auto& r : s->history()) {
        audits.push_back({{"submitted_at", r.submitted_at}, {"report", nlohmann::json::parse(r.body)}});
      }
      send_json(res, 200, {{"dataset_id", s->id}, {"audits", audits}});
    });
  }

  nlohmann::json dataset_summary(const Session& s) const {
    nlohmann::json diags = nlohmann::json::array();
    for (const auto& d : s.diagnostics) diags.push_back(detail::diagnostic_to_json(d));
    const auto fp = fingerprint(*s.dataset);
    return {{"dataset_id", s.id},
            {"row_count", fp.row_count},
            {"content_hash", fp.content_hash},
            {"schema", schema_to_json(s.dataset->schema)},
            {"diagnostics", diags},
            {"created_at", format_time(s.created)},
            {"expires_at", format_time(s.expires)}};
  }

  void upload(const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      return send_json(res, 400, error_body("BadRequest", "expected multipart/form-data with 'file' and 'schema' parts"));
    }
    if (!req.has_file("file") || !req.has_file("schema")) {
      return send_json(res, 400, error_body("BadRequest", "multipart body needs 'file' and 'schema' parts"));
    }
    try {
      nlohmann::json schema_doc;
      try {
        schema_doc = nlohmann::json::parse(req.get_file_value("schema").content);
      } catch (const nlohmann::json::exception& e) {
        return send_json(res, 400, error_body("BadRequest", "schema part is not valid JSON", e.what()));
      }
      const auto schema = schema_from_json(schema_doc);
      ParseOptions parse;
      if (schema_doc.contains("delimiter")) {
        const auto d = schema_doc.at("delimiter").get<std::string>();
        if (d.size() != 1) return send_json(res, 400, error_body("BadRequest", "delimiter must be one character", d));
        parse.delimiter = d[0];
      }
      if (schema_doc.contains("max_distinct_values")) {
        parse.max_distinct_values = schema_doc.at("max_distinct_values").get<std::size_t>();
      }
      auto ds = parse_csv(req.get_file_value("file").content, schema, parse);
      auto diags = validate(ds);
      auto session = store_.create(std::move(ds), std::move(diags));
      send_json(res, 201, dataset_summary(*session));
    } catch (const Error& e) {
      send_json(res, 400, error_body(to_string(e.code()), e.what(), e.detail()));
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, error_body("BadRequest", "malformed schema", e.what()));
    }
  }

  void audit(const httplib::Request& req, httplib::Response& res) {
    auto s = store_.find(req.path_params.at("id"));
    if (!s) return send_json(res, 404, error_body("UnknownDataset", "no such dataset", req.path_params.at("id")));
    nlohmann::json body;
    try {
      body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      return send_json(res, 400, error_body("BadRequest", "body is not valid JSON", e.what()));
    }
    std::string report;
    try {
      const auto config = config_from_json(body, *s->dataset);
      report = dump_report_json(report_to_json(run_audit(*s->dataset, config, tree_), std::nullopt));
    } catch (const Error& e) {
      return send_json(res, status_for(e.code()), error_body(to_string(e.code()), e.what(), e.detail()));
    }
    const auto n = s->append({format_time(now_()), report});
    if (options_.persist_dir) persist(s->id, n, report);
    res.status = 200;
    res.set_content(report, "application/json");
  }

  void persist(const std::string& id, std::size_t n, const std::string& report) const {
    std::error_code ec;
    const auto dir = *options_.persist_dir / id;
    std::filesystem::create_directories(dir, ec);
    std::ofstream(dir / (std::to_string(n) + ".json"), std::ios::binary) << report;
  }

  ServiceOptions options_;
  const FairnessTree& tree_;
  SessionStore store_;
  SessionStore::NowFn now_;
  httplib::Server server_;
};

}  // namespace parityd::service
