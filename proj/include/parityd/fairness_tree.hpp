#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "parityd/error.hpp"
#include "parityd/fingerprint.hpp"
#include "parityd/fairness_tree_data.hpp"
#include "parityd/metric.hpp"

namespace parityd {

struct TreeAnswer {
  std::string id;
  std::string text;
  std::string next;  // question id or terminal id

  friend bool operator==(const TreeAnswer&, const TreeAnswer&) = default;
};

struct TreeQuestion {
  std::string id;
  std::string text;
  std::vector<TreeAnswer> answers;

  friend bool operator==(const TreeQuestion&, const TreeQuestion&) = default;
};

struct TreeTerminal {
  std::string id;
  std::vector<Metric> metrics;
  std::string rationale;

  friend bool operator==(const TreeTerminal&, const TreeTerminal&) = default;
};

struct TreeState {
  std::vector<std::pair<std::string, std::string>> answered;  // (question id, answer id)
  std::variant<TreeQuestion, TreeTerminal> current;

  bool is_terminal() const { return std::holds_alternative<TreeTerminal>(current); }
  const TreeQuestion& question() const { return std::get<TreeQuestion>(current); }
  const TreeTerminal& terminal() const { return std::get<TreeTerminal>(current); }

  std::vector<std::string> answer_ids() const {
    std::vector<std::string> out;
    for (const auto& [_, a] : answered) out.push_back(a);
    return out;
  }

  friend bool operator==(const TreeState&, const TreeState&) = default;
};

/// Question/answer state machine mapping intervention context to the metrics
/// an audit should weigh. The structure is data: a versioned JSON document.
class FairnessTree {
 public:
  static FairnessTree from_json(const nlohmann::json& doc) {
    FairnessTree t;
    try {
      t.version_ = doc.at("tree_version").get<std::string>();
      t.root_ = doc.at("root").get<std::string>();
      for (const auto& q : doc.at("questions")) {
        TreeQuestion question{q.at("id").get<std::string>(), q.at("text").get<std::string>(), {}};
        std::set<std::string> answer_ids;
        for (const auto& a : q.at("answers")) {
          TreeAnswer ans{a.at("id").get<std::string>(), a.at("text").get<std::string>(),
                         a.at("next").get<std::string>()};
          if (!answer_ids.insert(ans.id).second) {
            throw Error(ErrorCode::InvalidTree, "duplicate answer id '" + ans.id + "' in question '" + question.id + "'");
          }
          question.answers.push_back(std::move(ans));
        }
        if (question.answers.empty()) throw Error(ErrorCode::InvalidTree, "question '" + question.id + "' has no answers");
        const auto id = question.id;
        if (!t.questions_.emplace(id, std::move(question)).second) {
          throw Error(ErrorCode::InvalidTree, "duplicate question id '" + id + "'");
        }
      }
      for (const auto& n : doc.at("terminals")) {
        TreeTerminal term{n.at("id").get<std::string>(), {}, n.at("rationale").get<std::string>()};
        try {
          term.metrics = parse_metric_list(n.at("metrics").get<std::vector<std::string>>());
        } catch (const Error& e) {
          throw Error(ErrorCode::InvalidTree, "terminal '" + term.id + "': " + e.what(), e.detail());
        }
        const auto id = term.id;
        if (t.questions_.count(id) || !t.terminals_.emplace(id, std::move(term)).second) {
          throw Error(ErrorCode::InvalidTree, "duplicate node id '" + id + "'");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidTree, std::string("malformed tree definition: ") + e.what());
    }
    t.check_structure();
    t.document_ = doc;
    return t;
  }

  /// The tree compiled in from data/fairness_tree.json.
  static const FairnessTree& builtin() {
    static const FairnessTree tree = from_json(nlohmann::json::parse(kBuiltinFairnessTreeJson));
    return tree;
  }

  const std::string& version() const { return version_; }
  const nlohmann::json& definition() const { return document_; }

  /// Canonical serialized definition, byte-stable for a given tree.
  std::string definition_text() const { return document_.dump(2) + "\n"; }

  /// Strong validator for HTTP caching: version plus content digest.
  std::string etag() const {
    return "\"tree-v" + version_ + "-" + sha256_hex(definition_text()).substr(0, 16) + "\"";
  }

  TreeState start() const { return TreeState{{}, questions_.at(root_)}; }

  TreeState answer(const TreeState& state, std::string_view answer_id) const {
    if (state.is_terminal()) {
      throw Error(ErrorCode::AlreadyTerminal, "the interview is already complete", std::string(answer_id));
    }
    const auto& q = state.question();
    auto qit = questions_.find(q.id);
    if (qit == questions_.end()) throw Error(ErrorCode::InvalidAnswer, "state does not belong to this tree", q.id);
    for (const auto& a : qit->second.answers) {
      if (a.id != answer_id) continue;
      TreeState next{state.answered, node(a.next)};
      next.answered.emplace_back(q.id, a.id);
      return next;
    }
    std::string valid;
    for (const auto& a : qit->second.answers) valid += (valid.empty() ? "" : ", ") + a.id;
    throw Error(ErrorCode::InvalidAnswer,
                "'" + std::string(answer_id) + "' is not an answer to '" + q.id + "' (expected one of: " + valid + ")",
                std::string(answer_id));
  }

  /// Applies answers in order from start().
  TreeState replay(const std::vector<std::string>& answer_ids) const {
    auto s = start();
    for (const auto& a : answer_ids) s = answer(s, a);
    return s;
  }

  static const std::vector<Metric>& recommended_metrics(const TreeState& state) {
    if (!state.is_terminal()) throw Error(ErrorCode::NotTerminal, "the interview has unanswered questions");
    return state.terminal().metrics;
  }

  /// Every root-to-leaf answer path.
  std::vector<std::vector<std::string>> enumerate_paths() const {
    std::vector<std::vector<std::string>> out;
    std::vector<std::string> path;
    std::function<void(const std::string&)> walk = [&](const std::string& id) {
      auto it = questions_.find(id);
      if (it == questions_.end()) {
        out.push_back(path);
        return;
      }
      for (const auto& a : it->second.answers) {
        path.push_back(a.id);
        walk(a.next);
        path.pop_back();
      }
    };
    walk(root_);
    return out;
  }

 private:
  std::variant<TreeQuestion, TreeTerminal> node(const std::string& id) const {
    if (auto it = questions_.find(id); it != questions_.end()) return it->second;
    return terminals_.at(id);
  }

  void check_structure() const {
    if (!questions_.count(root_)) throw Error(ErrorCode::InvalidTree, "root '" + root_ + "' is not a question");
    for (const auto& [_, q] : questions_) {
      for (const auto& a : q.answers) {
        if (!questions_.count(a.next) && !terminals_.count(a.next)) {
          throw Error(ErrorCode::InvalidTree, "answer '" + a.id + "' of '" + q.id + "' leads to unknown node '" + a.next + "'");
        }
      }
    }
    // Cycle check: depth-first with an on-stack marker.
    std::map<std::string, int> mark;
    std::function<void(const std::string&)> visit = [&](const std::string& id) {
      auto it = questions_.find(id);
      if (it == questions_.end()) return;
      if (mark[id] == 1) throw Error(ErrorCode::InvalidTree, "cycle through question '" + id + "'");
      if (mark[id] == 2) return;
      mark[id] = 1;
      for (const auto& a : it->second.answers) visit(a.next);
      mark[id] = 2;
    };
    visit(root_);
  }

  std::string version_;
  std::string root_;
  std::map<std::string, TreeQuestion> questions_;
  std::map<std::string, TreeTerminal> terminals_;
  nlohmann::json document_;
};

}  // namespace parityd
