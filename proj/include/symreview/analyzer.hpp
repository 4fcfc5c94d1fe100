#pragma once

// Symbolic detectors for the detector-backed knowledge-map rules.
//
//   KM-01  naming anti-patterns        detect_naming
//   KM-02  unreachable code            detect_unreachable
//   KM-03  error-handling risks        detect_error_handling
//   KM-04  resource leaks              detect_resource_leak
//   KM-05  mutable default arguments   detect_mutable_default
//
// All detectors are pure functions of the syntax tree. Opaque (unparseable)
// regions contribute nothing.

#include <symreview/knowledge_map.hpp>
#include <symreview/syntax.hpp>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace symreview {

struct Finding {
  std::string rule_id;
  std::size_t line = 0;
  std::string excerpt;
  std::string message;

  bool operator==(const Finding&) const = default;
};

inline bool finding_less(const Finding& a, const Finding& b) {
  return std::tie(a.line, a.rule_id, a.message, a.excerpt) < std::tie(b.line, b.rule_id, b.message, b.excerpt);
}

// Naming lists shipped with the catalog. Single-letter names outside the
// allow-list are flagged when bound; `e` is only accepted as an except-handler
// binding. Deny-listed names are flagged when used more than once in a scope.
inline constexpr std::string_view kNamingAllowList[] = {"i", "j", "k", "n", "_"};
inline constexpr std::string_view kExceptAllowName = "e";
inline constexpr std::string_view kNamingDenyList[] = {"data", "temp", "tmp", "val", "obj"};

// Call names whose result owns a closeable resource.
inline constexpr std::string_view kResourceConstructors[] = {"open", "connect", "socket", "create_connection",
                                                             "urlopen"};

inline constexpr std::size_t kMaxExcerpt = 120;

namespace detail {

using syntax::Node;
using syntax::NodeKind;
using syntax::Role;
using syntax::SyntaxTree;

template <std::size_t N>
bool contains(const std::string_view (&list)[N], std::string_view value) {
  return std::find(std::begin(list), std::end(list), value) != std::end(list);
}

inline std::string make_excerpt(const SyntaxTree& tree, std::size_t line) {
  std::string_view text = tree.line_text(line);
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (text.size() <= kMaxExcerpt) return std::string(text);
  std::size_t cut = kMaxExcerpt - 3;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return std::string(text.substr(0, cut)) + "...";
}

inline Finding make_finding(const SyntaxTree& tree, std::string_view rule, std::size_t line, std::string message) {
  return Finding{std::string(rule), line, make_excerpt(tree, line), std::move(message)};
}

inline bool opens_scope(NodeKind kind) { return kind == NodeKind::FunctionDef || kind == NodeKind::ClassDef; }

/// Visits every node of a scope without entering nested function or class
/// definitions. `with_depth` counts enclosing with-blocks inside the scope.
template <typename Visit>
void visit_scope_nodes(const Node& node, Visit&& visit, int with_depth = 0) {
  for (const auto& child : node.children) {
    if (opens_scope(child.kind)) continue;
    visit(child, with_depth);
    visit_scope_nodes(child, visit, with_depth + (child.kind == NodeKind::With ? 1 : 0));
  }
}

/// The module, every function and every class body, each paired with the
/// node whose children form the scope.
inline std::vector<const Node*> collect_scopes(const Node& root) {
  std::vector<const Node*> scopes{&root};
  syntax::walk(root, [&](const Node& n) {
    if (opens_scope(n.kind)) scopes.push_back(&n);
    return true;
  });
  return scopes;
}

/// Name nodes bound by an assignment-like target (through tuples, lists and
/// starred elements, not through attributes or subscripts).
inline void bound_names(const Node& target, std::vector<const Node*>& out) {
  switch (target.kind) {
    case NodeKind::Name:
      out.push_back(&target);
      break;
    case NodeKind::Tuple:
    case NodeKind::List:
    case NodeKind::Starred:
      for (const auto& c : target.children) bound_names(c, out);
      break;
    default:
      break;
  }
}

inline std::string_view final_call_name(const Node& call) {
  const Node* callee = call.child(Role::Callee);
  if (!callee) return {};
  if (callee->kind == NodeKind::Name || callee->kind == NodeKind::Attribute) return callee->text;
  return {};
}

inline bool is_pass_only(const Node* block) {
  if (!block || block->children.empty()) return false;
  return std::all_of(block->children.begin(), block->children.end(), [](const Node& s) {
    if (s.kind == NodeKind::Pass) return true;
    if (s.kind == NodeKind::ExprStmt) {
      const Node* v = s.child(Role::Value);
      return v && v->kind == NodeKind::Constant && v->constant == syntax::ConstantKind::Ellipsis;
    }
    return false;
  });
}

inline bool is_broad_exception_type(const Node& type) {
  if (type.kind == NodeKind::Name) return type.text == "Exception" || type.text == "BaseException";
  if (type.kind == NodeKind::Attribute) {
    const Node* base = type.child(Role::Value);
    return base && base->kind == NodeKind::Name && base->text == "builtins" &&
           (type.text == "Exception" || type.text == "BaseException");
  }
  if (type.kind == NodeKind::Tuple) {
    return std::any_of(type.children.begin(), type.children.end(),
                       [](const Node& c) { return is_broad_exception_type(c); });
  }
  return false;
}

inline bool is_always_true(const Node* test) {
  if (!test || test->kind != NodeKind::Constant) return false;
  return (test->constant == syntax::ConstantKind::Keyword && test->text == "True") ||
         (test->constant == syntax::ConstantKind::Number && test->text == "1");
}

// break statements that exit this loop (not nested loops or definitions).
inline bool loop_has_break(const Node& body) {
  bool found = false;
  syntax::walk(body, [&](const Node& n) {
    if (found) return false;
    if (n.kind == NodeKind::Break) {
      found = true;
      return false;
    }
    if (&n != &body && (n.kind == NodeKind::For || n.kind == NodeKind::While || opens_scope(n.kind) ||
                        n.kind == NodeKind::Lambda)) {
      return false;
    }
    return true;
  });
  return found;
}

}  // namespace detail

/// KM-01: ambiguous single-letter bindings and overused generic names.
inline std::vector<Finding> detect_naming(const syntax::SyntaxTree& tree) {
  using namespace detail;
  std::vector<Finding> out;
  for (const Node* scope : collect_scopes(tree.root)) {
    // first binding line per flagged single-letter name, in binding order
    std::vector<std::pair<std::string, std::size_t>> single;
    std::set<std::string> seen;
    auto bind = [&](const std::string& name, std::size_t line, bool in_handler) {
      if (name.size() != 1 || contains(kNamingAllowList, name)) return;
      if (in_handler && name == kExceptAllowName) return;
      if (seen.insert(name).second) single.emplace_back(name, line);
    };

    std::map<std::string, std::pair<std::size_t, std::size_t>> generic;  // name -> (count, first line)
    auto use = [&](const std::string& name, std::size_t line) {
      if (!contains(kNamingDenyList, name)) return;
      auto [it, inserted] = generic.try_emplace(name, 0, line);
      ++it->second.first;
      it->second.second = std::min(it->second.second, line);
    };

    if (scope->kind == NodeKind::FunctionDef) {
      for (const Node* p : scope->children_with(Role::Parameter)) {
        bind(p->text, p->span.begin.line, false);
        use(p->text, p->span.begin.line);
      }
    }
    const Node* body = scope->kind == NodeKind::Module ? scope : scope->child(Role::Body);
    if (!body) continue;

    visit_scope_nodes(*body, [&](const Node& n, int) {
      std::vector<const Node*> targets;
      switch (n.kind) {
        case NodeKind::Assign:
        case NodeKind::AugAssign:
        case NodeKind::AnnAssign:
        case NodeKind::For:
        case NodeKind::WithItem:
        case NodeKind::NamedExpr:
          for (const Node* t : n.children_with(Role::Target)) bound_names(*t, targets);
          break;
        case NodeKind::ExceptHandler:
          if (!n.text.empty()) {
            bind(n.text, n.span.begin.line, true);
            use(n.text, n.span.begin.line);
          }
          break;
        case NodeKind::Name:
          use(n.text, n.span.begin.line);
          break;
        default:
          break;
      }
      for (const Node* t : targets) bind(t->text, t->span.begin.line, false);
    });

    for (const auto& [name, line] : single) {
      out.push_back(make_finding(tree, rule_ids::kNaming, line,
                                 "single-letter name '" + name + "' is ambiguous; use a descriptive name"));
    }
    for (const auto& [name, info] : generic) {
      if (info.first < 2) continue;
      out.push_back(make_finding(tree, rule_ids::kNaming, info.second,
                                 "generic name '" + name + "' used " + std::to_string(info.first) +
                                     " times; it hides what the value means"));
    }
  }
  return out;
}

/// KM-02: the first statement following a return, raise, or break-less
/// `while True` loop in the same block.
inline std::vector<Finding> detect_unreachable(const syntax::SyntaxTree& tree) {
  using namespace detail;
  std::vector<Finding> out;
  syntax::walk(tree.root, [&](const Node& n) {
    if (n.kind != NodeKind::Module && n.kind != NodeKind::Block) return true;
    const auto& stmts = n.children;
    for (std::size_t i = 0; i < stmts.size(); ++i) {
      const Node& s = stmts[i];
      std::string cause;
      if (s.kind == NodeKind::Return) cause = "return";
      else if (s.kind == NodeKind::Raise) cause = "raise";
      else if (s.kind == NodeKind::While && is_always_true(s.child(Role::Test)) && s.child(Role::Body) &&
               !loop_has_break(*s.child(Role::Body))) {
        cause = "infinite loop without break";
      }
      if (cause.empty()) continue;
      for (std::size_t j = i + 1; j < stmts.size(); ++j) {
        if (stmts[j].kind == NodeKind::Opaque) continue;
        out.push_back(make_finding(tree, rule_ids::kUnreachable, stmts[j].span.begin.line,
                                   "unreachable code after " + cause + " on line " +
                                       std::to_string(s.span.begin.line)));
        break;
      }
      break;
    }
    return true;
  });
  return out;
}

/// KM-03: bare except, swallowed exceptions (`pass`-only handler), and
/// `except Exception` with a `pass`-only body.
inline std::vector<Finding> detect_error_handling(const syntax::SyntaxTree& tree) {
  using namespace detail;
  std::vector<Finding> out;
  syntax::walk(tree.root, [&](const Node& n) {
    if (n.kind != NodeKind::ExceptHandler) return true;
    const std::size_t line = n.span.begin.line;
    const Node* type = n.child(Role::Type);
    const bool swallowed = is_pass_only(n.child(Role::Body));
    if (!type) {
      out.push_back(make_finding(tree, rule_ids::kErrorHandling, line,
                                 "bare except: catches every exception including KeyboardInterrupt"));
    }
    if (swallowed) {
      out.push_back(make_finding(tree, rule_ids::kErrorHandling, line,
                                 "swallowed exception: handler body only passes"));
    }
    if (type && swallowed && is_broad_exception_type(*type)) {
      out.push_back(make_finding(tree, rule_ids::kErrorHandling, line,
                                 "overbroad catch: Exception is silenced; catch a specific type such as ValueError"));
    }
    return true;
  });
  return out;
}

/// KM-04: resources bound to a name with no `<name>.close()` in the same
/// scope. Flow-insensitive; bindings inside a with-block are exempt.
inline std::vector<Finding> detect_resource_leak(const syntax::SyntaxTree& tree) {
  using namespace detail;
  std::vector<Finding> out;
  for (const Node* scope : collect_scopes(tree.root)) {
    const Node* body = scope->kind == NodeKind::Module ? scope : scope->child(Role::Body);
    if (!body) continue;

    std::vector<std::tuple<std::string, std::size_t, std::string>> opened;  // name, line, constructor
    std::set<std::string> closed;
    visit_scope_nodes(*body, [&](const Node& n, int with_depth) {
      if (n.kind == NodeKind::Assign && with_depth == 0) {
        const Node* value = n.child(Role::Value);
        if (value && value->kind == NodeKind::Call && contains(kResourceConstructors, final_call_name(*value))) {
          for (const Node* t : n.children_with(Role::Target)) {
            if (t->kind == NodeKind::Name) {
              opened.emplace_back(t->text, n.span.begin.line, std::string(final_call_name(*value)));
            }
          }
        }
      } else if (n.kind == NodeKind::Call) {
        const Node* callee = n.child(Role::Callee);
        if (callee && callee->kind == NodeKind::Attribute && callee->text == "close") {
          const Node* owner = callee->child(Role::Value);
          if (owner && owner->kind == NodeKind::Name) closed.insert(owner->text);
        }
      } else if (n.kind == NodeKind::WithItem) {
        // `with handle:` and `with closing(handle):` manage an existing binding.
        const Node* value = n.child(Role::Value);
        if (value && value->kind == NodeKind::Name) closed.insert(value->text);
        if (value && value->kind == NodeKind::Call && final_call_name(*value) == "closing") {
          for (const Node* arg : value->children_with(Role::Argument)) {
            if (arg->kind == NodeKind::Name) closed.insert(arg->text);
          }
        }
      }
    });

    std::set<std::string> reported;
    for (const auto& [name, line, ctor] : opened) {
      if (closed.contains(name) || !reported.insert(name).second) continue;
      out.push_back(make_finding(tree, rule_ids::kResourceLeak, line,
                                 "'" + name + "' from " + ctor + "() is never closed; use a with block"));
    }
  }
  return out;
}

/// KM-05: list, dict or set displays (or list()/dict()/set() calls) as
/// parameter defaults.
inline std::vector<Finding> detect_mutable_default(const syntax::SyntaxTree& tree) {
  using namespace detail;
  std::vector<Finding> out;
  syntax::walk(tree.root, [&](const Node& n) {
    if (n.kind != NodeKind::FunctionDef) return true;
    for (const Node* p : n.children_with(Role::Parameter)) {
      const Node* def = p->child(Role::Default);
      if (!def) continue;
      bool mutable_default = def->kind == NodeKind::List || def->kind == NodeKind::Dict || def->kind == NodeKind::Set;
      if (def->kind == NodeKind::Comprehension && def->text != "gen") mutable_default = true;
      if (def->kind == NodeKind::Call) {
        const Node* callee = def->child(Role::Callee);
        mutable_default = callee && callee->kind == NodeKind::Name &&
                          (callee->text == "list" || callee->text == "dict" || callee->text == "set");
      }
      if (mutable_default) {
        out.push_back(make_finding(tree, rule_ids::kMutableDefault, p->span.begin.line,
                                   "parameter '" + p->text + "' of " + n.text +
                                       "() has a mutable default shared across calls"));
      }
    }
    return true;
  });
  return out;
}

using Detector = std::vector<Finding> (*)(const syntax::SyntaxTree&);

/// rule_id -> detector for every rule the analyzer can check.
inline const std::map<std::string, Detector, std::less<>>& detector_registry() {
  static const std::map<std::string, Detector, std::less<>> registry{
      {std::string(rule_ids::kNaming), &detect_naming},
      {std::string(rule_ids::kUnreachable), &detect_unreachable},
      {std::string(rule_ids::kErrorHandling), &detect_error_handling},
      {std::string(rule_ids::kResourceLeak), &detect_resource_leak},
      {std::string(rule_ids::kMutableDefault), &detect_mutable_default},
  };
  return registry;
}

struct AnalysisResult {
  std::vector<Finding> findings;
  // Diagnostics such as skipped unparseable regions.
  std::vector<std::string> notes;
};

inline AnalysisResult analyze_detailed(std::string_view source, const KnowledgeMap& map,
                                       syntax::ParseMode mode = syntax::ParseMode::Tolerant) {
  AnalysisResult result;
  const auto tree = syntax::parse(source, mode);
  for (const auto& span : tree.opaque_regions) {
    std::string note = "unparseable region at lines " + std::to_string(span.begin.line) + "-" +
                       std::to_string(span.end.line) + " skipped";
    spdlog::debug("{}", note);
    result.notes.push_back(std::move(note));
  }
  const auto& registry = detector_registry();
  for (const auto& rule : map.rules) {
    if (!rule.has_detector) continue;
    auto it = registry.find(rule.rule_id);
    if (it == registry.end()) {
      result.notes.push_back("rule " + rule.rule_id + " claims a detector but none is registered");
      continue;
    }
    auto found = it->second(tree);
    result.findings.insert(result.findings.end(), found.begin(), found.end());
  }
  std::sort(result.findings.begin(), result.findings.end(), finding_less);
  result.findings.erase(std::unique(result.findings.begin(), result.findings.end()), result.findings.end());
  return result;
}

/// Findings sorted by (line, rule_id).
inline std::vector<Finding> analyze(std::string_view source, const KnowledgeMap& map,
                                    syntax::ParseMode mode = syntax::ParseMode::Tolerant) {
  return analyze_detailed(source, map, mode).findings;
}

inline bool has_defect(const std::vector<Finding>& findings, const KnowledgeMap& map) {
  return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) {
    const Rule* rule = map.find(f.rule_id);
    return rule && rule->severity == Severity::Defect;
  });
}

inline ojson findings_to_json(const std::vector<Finding>& findings) {
  ojson array = ojson::array();
  for (const auto& f : findings) {
    ojson item = ojson::object();
    item["rule_id"] = f.rule_id;
    item["line"] = f.line;
    item["excerpt"] = f.excerpt;
    item["message"] = f.message;
    array.push_back(std::move(item));
  }
  return array;
}

}  // namespace symreview
