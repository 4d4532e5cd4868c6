#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "parityd/audit.hpp"
#include "parityd/fairness_tree.hpp"
#include "parityd/report.hpp"
#include "parityd/service.hpp"

namespace parityd::cli {

/// Exit codes: the audit verdict is the exit status so pipelines can gate on it.
inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitUsage = 2;

struct Io {
  std::ostream& out;
  std::ostream& err;
  std::istream& in;
  bool color = false;
  std::function<const char*(const char*)> getenv = [](const char* k) { return std::getenv(k); };
};

/// Flags of `parityd audit`, resolved with defaults.
struct CliConfig {
  std::string input;
  std::optional<std::string> score_col, decision_col, id_col;
  std::string label_col;
  std::vector<std::string> attrs;
  std::optional<long long> top_k;
  std::optional<double> top_percent;
  std::optional<double> cutoff;
  std::string ties = "exact";
  std::string ref = "majority";
  std::optional<double> tau;
  std::vector<std::string> metrics;
  std::vector<std::string> tree_path;
  std::string indeterminate = "report_only";
  std::string format = "markdown";
  std::optional<std::string> out;
  bool no_timestamp = false;
  std::string delimiter = ",";
  std::size_t min_group_size = 1;
  std::size_t max_distinct = 50;
};

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline double parse_tau(const std::string& text, std::string_view origin) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || !(v > 0.0 && v <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, std::string(origin) + " must be a number in (0, 1], got '" + text + "'", text);
  }
  return v;
}

inline ReferenceStrategy parse_reference(const std::string& spec) {
  if (spec == "majority") return MajorityReference{};
  if (spec == "min-metric") return MinMetricReference{};
  if (spec.rfind("fixed:", 0) == 0) {
    FixedReference fixed;
    for (const auto& pair : split(spec.substr(6), ',')) {
      const auto eq = pair.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::InvalidConfig, "--ref fixed: expects attr=group pairs, got '" + pair + "'", pair);
      }
      fixed.groups[pair.substr(0, eq)] = pair.substr(eq + 1);
    }
    if (fixed.groups.empty()) throw Error(ErrorCode::InvalidConfig, "--ref fixed: needs at least one attr=group");
    return fixed;
  }
  throw Error(ErrorCode::InvalidConfig, "--ref must be majority, min-metric or fixed:attr=group,...", spec);
}

inline char parse_delimiter(const std::string& d) {
  if (d == "," || d == "comma") return ',';
  if (d == "tab" || d == "\\t" || d == "\t") return '\t';
  if (d == ";" || d == "semicolon") return ';';
  throw Error(ErrorCode::InvalidConfig, "--delimiter must be comma, tab or semicolon", d);
}

/// Turns parsed flags into schema + audit config. Enforces exactly one
/// decision source.
inline std::pair<DatasetSchema, AuditConfig> resolve(const CliConfig& c, double default_tau) {
  const int sources = (c.decision_col ? 1 : 0) + (c.top_k ? 1 : 0) + (c.top_percent ? 1 : 0) + (c.cutoff ? 1 : 0);
  if (sources != 1) {
    throw Error(ErrorCode::InvalidConfig,
                "give exactly one decision source: --decision-col, --top-k, --top-percent or --cutoff");
  }
  if (!c.decision_col && !c.score_col) {
    throw Error(ErrorCode::InvalidConfig, "--top-k/--top-percent/--cutoff need --score-col");
  }
  if (!c.metrics.empty() && !c.tree_path.empty()) {
    throw Error(ErrorCode::InvalidConfig, "give either --metrics or --tree-path, not both");
  }

  DatasetSchema schema;
  schema.score_column = c.score_col;
  schema.decision_column = c.decision_col;
  schema.entity_id_column = c.id_col;
  schema.label_column = c.label_col;
  schema.attribute_columns = c.attrs;
  schema.check();

  AuditConfig cfg;
  if (c.decision_col) {
    cfg.threshold.kind = PreBinarized{};
  } else if (c.top_k) {
    if (*c.top_k < 1) throw Error(ErrorCode::InvalidPolicy, "--top-k must be >= 1");
    cfg.threshold.kind = TopK{static_cast<std::size_t>(*c.top_k)};
  } else if (c.top_percent) {
    cfg.threshold.kind = TopPercent{*c.top_percent};
  } else {
    cfg.threshold.kind = ScoreCutoff{*c.cutoff};
  }
  if (c.ties == "exact") {
    cfg.threshold.tie_mode = TieMode::ExactK;
  } else if (c.ties == "all") {
    cfg.threshold.tie_mode = TieMode::IncludeAllTies;
  } else {
    throw Error(ErrorCode::InvalidConfig, "--ties must be exact or all", c.ties);
  }
  cfg.threshold.check();
  cfg.reference = parse_reference(c.ref);
  cfg.parity.tau = c.tau.value_or(default_tau);
  if (!c.metrics.empty()) cfg.parity.metrics = parse_metric_list(c.metrics);
  cfg.tree_path = c.tree_path;
  auto policy = parse_indeterminate_policy(c.indeterminate);
  if (!policy) throw Error(ErrorCode::InvalidConfig, "--indeterminate must be treat_as_fail, treat_as_pass or report_only");
  cfg.parity.indeterminate_policy = *policy;
  cfg.parity.check();
  cfg.min_group_size = c.min_group_size;
  return {schema, cfg};
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::InvalidConfig, "cannot read input file '" + path + "'", path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::string paint(const Io& io, std::string_view text, int code) {
  if (!io.color) return std::string(text);
  return "\033[" + std::to_string(code) + "m" + std::string(text) + "\033[0m";
}

inline int run_audit_command(const CliConfig& c, Io& io) {
  double default_tau = 0.8;
  if (const char* env = io.getenv("PARITYD_TAU"); env && *env) default_tau = parse_tau(env, "PARITYD_TAU");

  auto [schema, config] = resolve(c, default_tau);
  const auto format = parse_report_format(c.format);
  if (!format) throw Error(ErrorCode::InvalidConfig, "--format must be json, markdown or csv", c.format);

  ParseOptions parse;
  parse.delimiter = parse_delimiter(c.delimiter);
  parse.max_distinct_values = c.max_distinct;
  const auto dataset = parse_csv(read_file(c.input), schema, parse);
  const auto result = run_audit(dataset, config);

  std::optional<std::string> timestamp;
  if (*format == ReportFormat::Json && !c.no_timestamp) timestamp = utc_timestamp();
  const auto doc = build_report(result, *format, timestamp);
  if (c.out) {
    std::ofstream f(*c.out, std::ios::binary);
    if (!f) throw Error(ErrorCode::InvalidConfig, "cannot write '" + *c.out + "'", *c.out);
    f << doc;
  } else {
    io.out << doc;
  }

  std::size_t failing = 0;
  for (const auto& a : result.attributes) {
    for (const auto& r : a.rows) failing += r.verdict == Verdict::Fail;
  }
  const auto verdict = result.overall;
  const int colour = verdict == TriState::Pass ? 32 : verdict == TriState::Fail ? 31 : 33;
  std::string upper(to_string(verdict));
  for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  io.err << "verdict: " << paint(io, upper, colour) << " (" << failing << " failing rows, tau "
         << format_double(result.config.parity.tau) << ")\n";
  return verdict == TriState::Fail ? kExitFail : kExitPass;
}

struct TreeArgs {
  std::vector<std::string> answers;
  bool emit_flags = false;
  bool definition = false;
};

inline int run_tree_command(const TreeArgs& t, Io& io, const FairnessTree& tree = FairnessTree::builtin()) {
  if (t.definition) {
    io.out << tree.definition_text();
    return kExitPass;
  }
  TreeState state = tree.start();
  if (!t.answers.empty()) {
    state = tree.replay(t.answers);
    if (!state.is_terminal()) {
      throw Error(ErrorCode::NotTerminal, "answers stop at question '" + state.question().id + "': " + state.question().text,
                  state.question().id);
    }
  } else {
    while (!state.is_terminal()) {
      const auto& q = state.question();
      io.err << paint(io, q.text, 1) << "\n";
      for (std::size_t i = 0; i < q.answers.size(); ++i) {
        io.err << "  " << (i + 1) << ") " << q.answers[i].id << ": " << q.answers[i].text << "\n";
      }
      io.err << "> " << std::flush;
      std::string line;
      if (!std::getline(io.in, line)) throw Error(ErrorCode::NotTerminal, "input ended before the interview finished");
      line = std::string(detail::trim(line));
      std::string id = line;
      if (!line.empty() && std::all_of(line.begin(), line.end(), ::isdigit)) {
        const auto n = std::stoul(line);
        if (n >= 1 && n <= q.answers.size()) id = q.answers[n - 1].id;
      }
      try {
        state = tree.answer(state, id);
      } catch (const Error& e) {
        io.err << e.what() << "\n";
      }
    }
  }
  const auto& metrics = FairnessTree::recommended_metrics(state);
  if (t.emit_flags) {
    io.out << "--metrics " << join_metrics(metrics) << "\n";
  } else {
    io.out << join_metrics(metrics) << "\n";
    io.out << "rationale: " << state.terminal().rationale << "\n";
  }
  return kExitPass;
}

struct ServeArgs {
  std::optional<std::string> addr;
  std::optional<double> ttl_hours;
  std::optional<std::size_t> max_body_mib;
  std::optional<std::string> persist_dir;
  std::string cors_origin = "*";
};

inline service::ServiceOptions resolve_serve(const ServeArgs& a, const Io& io) {
  service::ServiceOptions opts;
  if (const char* env = io.getenv("PARITYD_ADDR"); env && *env) service::apply_address(opts, env);
  if (a.addr) service::apply_address(opts, *a.addr);
  std::optional<double> ttl = a.ttl_hours;
  if (!ttl) {
    if (const char* env = io.getenv("PARITYD_TTL_HOURS"); env && *env) {
      try {
        ttl = std::stod(env);
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "PARITYD_TTL_HOURS must be a number", env);
      }
    }
  }
  if (ttl) {
    if (!(*ttl > 0)) throw Error(ErrorCode::InvalidConfig, "TTL must be positive");
    opts.ttl = std::chrono::seconds(static_cast<long long>(*ttl * 3600.0));
  }
  if (a.max_body_mib) opts.max_body_bytes = *a.max_body_mib << 20;
  if (a.persist_dir) opts.persist_dir = *a.persist_dir;
  opts.cors_origin = a.cors_origin;
  return opts;
}

inline int run_serve_command(const ServeArgs& a, Io& io) {
  auto opts = resolve_serve(a, io);
  service::Service svc(opts);
  if (!svc.bind()) throw Error(ErrorCode::InvalidConfig, "cannot bind " + opts.host + ":" + std::to_string(opts.port));
  io.err << "parityd listening on http://" << opts.host << ":" << opts.port << "/v1\n";
  return svc.listen_after_bind() ? kExitPass : kExitUsage;
}

/// Entry point shared by the binary and the tests. Never throws.
inline int run(std::vector<std::string> args, Io& io) {
  CLI::App app{"parityd: group fairness audits of scored, labeled predictions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  CliConfig c;
  auto* audit = app.add_subcommand("audit", "Audit a CSV of predictions; exit 0 pass, 1 fail, 2 error");
  audit->add_option("--input", c.input, "CSV file")->required();
  audit->add_option("--score-col", c.score_col, "Score column");
  audit->add_option("--decision-col", c.decision_col, "Binary decision column (pre-binarized decisions)");
  audit->add_option("--label-col", c.label_col, "Binary true-outcome column")->required();
  audit->add_option("--attrs", c.attrs, "Comma-separated attribute columns")->required()->delimiter(',');
  audit->add_option("--id-col", c.id_col, "Entity id column (row number when absent)");
  auto* topk = audit->add_option("--top-k", c.top_k, "Flag the k highest scores");
  auto* toppct = audit->add_option("--top-percent", c.top_percent, "Flag the top fraction p in (0,1] of scores");
  auto* cutoff = audit->add_option("--cutoff", c.cutoff, "Flag scores >= C");
  topk->excludes(toppct)->excludes(cutoff);
  toppct->excludes(cutoff);
  audit->add_option("--ties", c.ties, "exact (exactly k flagged) or all (every tie at the k-th score)");
  audit->add_option("--ref", c.ref, "majority | min-metric | fixed:attr=group,...");
  audit->add_option("--tau", c.tau, "Parity band parameter in (0,1] (default 0.8 or $PARITYD_TAU)");
  auto* metrics = audit->add_option("--metrics", c.metrics, "Comma-separated subset of PPrev,PPR,FDR,FOR,FPR,FNR")
                      ->delimiter(',');
  auto* tree_path = audit->add_option("--tree-path", c.tree_path, "Fairness tree answer ids, comma-separated")
                        ->delimiter(',');
  metrics->excludes(tree_path);
  audit->add_option("--indeterminate", c.indeterminate, "treat_as_fail | treat_as_pass | report_only");
  audit->add_option("--format", c.format, "json | markdown | csv");
  audit->add_option("--out", c.out, "Write the report here instead of stdout");
  audit->add_flag("--no-timestamp", c.no_timestamp, "Omit the timestamp from JSON reports");
  audit->add_option("--delimiter", c.delimiter, "comma | tab | semicolon");
  audit->add_option("--min-group-size", c.min_group_size, "Warn about groups smaller than this");
  audit->add_option("--max-distinct", c.max_distinct, "Reject attributes with more distinct values than this");

  TreeArgs t;
  auto* tree = app.add_subcommand("tree", "Walk the fairness tree to choose metrics");
  tree->add_option("--answers", t.answers, "Comma-separated answer ids (non-interactive)")->delimiter(',');
  tree->add_flag("--emit-flags", t.emit_flags, "Print a ready-to-paste --metrics flag");
  tree->add_flag("--definition", t.definition, "Print the tree definition JSON");

  ServeArgs s;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--addr", s.addr, "host:port (default 127.0.0.1:8080 or $PARITYD_ADDR)");
  serve->add_option("--ttl-hours", s.ttl_hours, "Dataset lifetime (default 24 or $PARITYD_TTL_HOURS)");
  serve->add_option("--max-body-mib", s.max_body_mib, "Upload size cap in MiB (default 64)");
  serve->add_option("--persist-dir", s.persist_dir, "Also write report JSON files under this directory");
  serve->add_option("--cors-origin", s.cors_origin, "Allowed console origin");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    io.out << app.help();
    return kExitPass;
  } catch (const CLI::CallForAllHelp&) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return kExitPass;
  } catch (const CLI::CallForVersion&) {
    io.out << kToolVersion << "\n";
    return kExitPass;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    io.err << "error: " << msg << "\n";
    return kExitUsage;
  }

  try {
    if (*audit) return run_audit_command(c, io);
    if (*tree) return run_tree_command(t, io);
    if (*serve) return run_serve_command(s, io);
  } catch (const Error& e) {
    io.err << "error: " << to_string(e.code()) << ": " << e.what();
    if (!e.detail().empty()) io.err << " (" << e.detail() << ")";
    io.err << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace parityd::cli
