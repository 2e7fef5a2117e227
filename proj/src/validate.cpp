#include "bpd/validate.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace bpd {

namespace {

struct NodeInfo {
  const FlowNode* node = nullptr;
  std::string pool_id;
  std::string scope_id;
};

// Tolerant collection pass: unlike node_index(), never throws on dangling or
// duplicate ids (first declaration wins for lookups).
struct Collected {
  std::map<std::string, NodeInfo> nodes;
  std::map<std::string, const SequenceFlow*> flows;
  std::map<std::string, std::string> flow_scope;
  std::map<std::string, std::vector<const SequenceFlow*>> outgoing;
  std::map<std::string, std::vector<const SequenceFlow*>> incoming;
  std::set<std::string> artifact_ids;
  std::map<std::string, ExprType> var_types;
};

void collect_scope(Collected& c, const std::vector<FlowNode>& nodes,
                   const std::vector<SequenceFlow>& flows,
                   const std::string& scope, const std::string& pool,
                   std::vector<std::pair<std::string, std::string>>& ids) {
  for (const FlowNode& n : nodes) {
    ids.emplace_back(n.id, "node");
    c.nodes.emplace(n.id, NodeInfo{&n, pool, scope});
    if (const ActivityNode* a = n.activity(); a && a->body) {
      for (const SequenceFlow& f : a->body->flows) {
        ids.emplace_back(f.id, "flow");
        c.flows.emplace(f.id, &f);
        c.flow_scope.emplace(f.id, n.id);
      }
      collect_scope(c, a->body->nodes, a->body->flows, n.id, pool, ids);
    }
  }
}

class Validator {
 public:
  explicit Validator(const ProcessDefinition& def) : def_(def) {}

  std::vector<Diagnostic> run() {
    collect();
    check_pools();
    check_flows();
    check_message_flows();
    check_nodes();
    check_associations();
    check_reachability();
    finish();
    return std::move(diags_);
  }

 private:
  void add(const char* code, const std::string& subject, std::string message,
           Severity sev = Severity::error) {
    diags_.push_back(Diagnostic{code, std::move(message), subject, sev});
  }

  void collect() {
    std::vector<std::pair<std::string, std::string>> ids;
    for (const Pool& p : def_.pools) {
      ids.emplace_back(p.id, "pool");
      for (const Lane& l : p.lanes) {
        ids.emplace_back(l.id, "lane");
        collect_scope(c_, l.nodes, {}, kTopScope, p.id, ids);
      }
    }
    for (const SequenceFlow& f : def_.sequence_flows) {
      ids.emplace_back(f.id, "flow");
      c_.flows.emplace(f.id, &f);
      c_.flow_scope.emplace(f.id, kTopScope);
    }
    for (const MessageFlow& m : def_.message_flows) ids.emplace_back(m.id, "message flow");
    for (const Association& a : def_.associations) ids.emplace_back(a.id, "association");
    for (const Artifact& a : def_.artifacts) {
      ids.emplace_back(a.id, "artifact");
      c_.artifact_ids.insert(a.id);
    }

    std::set<std::string> seen;
    for (const auto& [id, what] : ids) {
      if (!seen.insert(id).second) {
        add("E001", id, "duplicate identifier '" + id + "' (" + what + ")");
      }
    }
    std::set<std::string> seen_vars;
    for (const VariableDecl& v : def_.variables) {
      if (!seen_vars.insert(v.name).second) {
        add("E001", v.name, "duplicate variable name '" + v.name + "'");
      }
      c_.var_types[v.name] =
          v.type == VarType::boolean ? ExprType::boolean : ExprType::integer;
    }

    for (const auto& [id, flow] : c_.flows) {
      if (c_.nodes.count(flow->source)) c_.outgoing[flow->source].push_back(flow);
      if (c_.nodes.count(flow->target)) c_.incoming[flow->target].push_back(flow);
    }
  }

  void check_pools() {
    if (def_.pools.empty()) {
      add("E013", def_.id, "definition declares no pools");
    }
  }

  // Flow condition typing shared by sequence flows and loop conditions.
  void check_condition(const ExprSource& cond, const std::string& subject,
                       const char* what) {
    if (!cond.tree) {
      add("E012", subject, std::string(what) + " does not parse: " + cond.text);
      return;
    }
    if (contains_token_count(*cond.tree)) {
      add("E020", subject,
          std::string(what) + " uses tokens(); only activation expressions may");
    }
    std::string issue;
    ExprType t = infer_type(*cond.tree, c_.var_types, &issue);
    if (!issue.empty()) {
      add("E012", subject, std::string(what) + " " + issue);
    } else if (t == ExprType::integer) {
      add("E012", subject, std::string(what) + " has integer type, boolean required");
    }
  }

  void check_flows() {
    for (const auto& [id, flow] : c_.flows) {
      auto src = c_.nodes.find(flow->source);
      auto tgt = c_.nodes.find(flow->target);
      if (src == c_.nodes.end()) {
        add("E002", id, "flow source '" + flow->source + "' does not exist");
      }
      if (tgt == c_.nodes.end()) {
        add("E002", id, "flow target '" + flow->target + "' does not exist");
      }
      if (src == c_.nodes.end() || tgt == c_.nodes.end()) continue;

      if (src->second.pool_id != tgt->second.pool_id) {
        add("E003", id, "sequence flow crosses pools '" + src->second.pool_id +
                            "' and '" + tgt->second.pool_id + "'");
      } else {
        // Within a pool, both ends must also share the flow's scope.
        const std::string& scope = c_.flow_scope[id];
        if (src->second.scope_id != scope || tgt->second.scope_id != scope) {
          add("E002", id, "flow endpoint lies outside the flow's scope");
        }
      }

      if (flow->condition && flow->is_default) {
        add("E018", id, "flow has both a condition and the default marker");
      }
      if (flow->condition) {
        check_condition(*flow->condition, id, "flow condition");
      }

      const GatewayNode* src_gw = src->second.node->gateway();
      if (flow->is_default) {
        if (!src_gw || !src_gw->default_flow || *src_gw->default_flow != id) {
          add("E008", id, "flow marked default but not named by its source gateway");
        }
      }
      if (src_gw && src_gw->kind == GatewayKind::parallel && flow->condition) {
        add("E010", id, "condition on a flow leaving parallel gateway '" +
                            flow->source + "'");
      }
    }
  }

  void check_message_flows() {
    for (const MessageFlow& m : def_.message_flows) {
      auto src = c_.nodes.find(m.source);
      auto tgt = c_.nodes.find(m.target);
      if (src == c_.nodes.end()) {
        add("E002", m.id, "message flow source '" + m.source + "' does not exist");
      }
      if (tgt == c_.nodes.end()) {
        add("E002", m.id, "message flow target '" + m.target + "' does not exist");
      }
      if (src != c_.nodes.end() && tgt != c_.nodes.end() &&
          src->second.pool_id == tgt->second.pool_id) {
        add("E004", m.id, "message flow stays inside pool '" + src->second.pool_id + "'");
      }
    }
  }

  void check_event(const std::string& id, const EventNode& e) {
    if (e.attached_to && e.kind != EventKind::intermediate) {
      add("E014", id, "only intermediate events may attach to an activity");
    }
    if (e.kind == EventKind::start && e.trigger != EventTrigger::none &&
        e.trigger != EventTrigger::message && e.trigger != EventTrigger::timer) {
      add("E014", id, "start event trigger must be none, message, or timer");
    }
    if (e.kind == EventKind::end && e.trigger != EventTrigger::none &&
        e.trigger != EventTrigger::error && e.trigger != EventTrigger::cancel &&
        e.trigger != EventTrigger::compensation &&
        e.trigger != EventTrigger::terminate) {
      add("E014", id, "end event trigger must be none, error, cancel, "
                      "compensation, or terminate");
    }
    const auto& in = c_.incoming[id];
    const auto& out = c_.outgoing[id];
    if (e.kind == EventKind::start && !in.empty()) {
      add("E005", id, "start event has an incoming sequence flow");
    }
    if (e.kind == EventKind::end && !out.empty()) {
      add("E006", id, "end event has an outgoing sequence flow");
    }
    if (e.attached_to && e.kind == EventKind::intermediate) {
      auto host = c_.nodes.find(*e.attached_to);
      const NodeInfo* self = &c_.nodes[id];
      if (host == c_.nodes.end()) {
        add("E002", id, "boundary event host '" + *e.attached_to + "' does not exist");
        add("E007", id, "boundary event has no host activity");
      } else if (!host->second.node->activity() ||
                 host->second.scope_id != self->scope_id) {
        add("E007", id, "boundary event host must be an activity in the same scope");
      }
      if (!in.empty()) add("E007", id, "boundary event has an incoming flow");
      if (out.size() != 1) {
        add("E007", id, "boundary event needs exactly one outgoing flow, has " +
                            std::to_string(out.size()));
      }
    }
  }

  void check_activity(const std::string& id, const ActivityNode& a) {
    if (a.kind == ActivityKind::task && a.body) {
      add("E015", id, "task carries a decomposition body");
    }
    if (a.kind != ActivityKind::task && !a.body) {
      add("E015", id, std::string(to_text(a.kind)) + " is missing its body");
    }
    if (a.markers.loop && a.markers.multi_instance) {
      add("E016", id, "loop and multiInstance markers are mutually exclusive");
    }
    if (!a.markers.loop && (a.loop_condition || a.loop_max)) {
      add("E016", id, "loop settings without the loop marker");
    }
    if (a.markers.multi_instance && !a.multi_instance_count) {
      add("E016", id, "multiInstance marker without a count variable");
    }
    if (!a.markers.multi_instance && a.multi_instance_count) {
      add("E016", id, "multiInstanceCount without the multiInstance marker");
    }
    if (a.markers.multi_instance && a.kind != ActivityKind::task) {
      add("E021", id, "multiInstance marker is only executable on tasks");
    }
    if (a.multi_instance_count && !c_.var_types.count(*a.multi_instance_count)) {
      add("E002", id, "multiInstanceCount names undeclared variable '" +
                          *a.multi_instance_count + "'");
    }
    if (a.loop_condition) {
      check_condition(*a.loop_condition, id, "loop condition");
    }
    if (a.loop_max && *a.loop_max <= 0) {
      add("E016", id, "loopMax must be positive");
    }
    if (a.markers.compensation) {
      if (!c_.incoming[id].empty() || !c_.outgoing[id].empty()) {
        add("E009", id, "compensation activity is wired into normal sequence flow");
      }
    }
  }

  void check_gateway(const std::string& id, const GatewayNode& g) {
    const auto& in = c_.incoming[id];
    const auto& out = c_.outgoing[id];
    if (g.default_flow) {
      if (g.kind != GatewayKind::exclusive_data && g.kind != GatewayKind::inclusive) {
        add("E008", id, "default flow on a " + std::string(to_text(g.kind)) +
                            " gateway");
      }
      auto f = c_.flows.find(*g.default_flow);
      if (f == c_.flows.end()) {
        add("E002", id, "default flow '" + *g.default_flow + "' does not exist");
      } else if (f->second->source != id) {
        add("E008", id, "default flow '" + *g.default_flow +
                            "' is not one of this gateway's outgoing flows");
      }
    }
    const bool wants_activation = g.kind == GatewayKind::complex && in.size() >= 2;
    if (g.activation_expression && !wants_activation) {
      add("E017", id, "activation expression on a gateway that is not a "
                      "complex merge with two or more incoming flows");
    }
    if (!g.activation_expression && wants_activation) {
      add("E017", id, "complex merge is missing its activation expression");
    }
    if (g.activation_expression) {
      const ExprSource& act = *g.activation_expression;
      if (!act.tree) {
        add("E017", id, "activation expression does not parse: " + act.text);
      } else {
        for (const std::string& flow : token_count_flows(*act.tree)) {
          bool incoming_here = std::any_of(
              in.begin(), in.end(),
              [&](const SequenceFlow* f) { return f->id == flow; });
          if (!incoming_here) {
            add("E017", id, "activation expression counts tokens on '" + flow +
                                "', which is not an incoming flow");
          }
        }
        std::string issue;
        ExprType t = infer_type(*act.tree, c_.var_types, &issue);
        if (!issue.empty()) {
          add("E017", id, "activation expression " + issue);
        } else if (t == ExprType::integer) {
          add("E017", id, "activation expression has integer type, boolean required");
        }
      }
    }
    if (g.kind == GatewayKind::exclusive_event) {
      for (const SequenceFlow* f : out) {
        auto tgt = c_.nodes.find(f->target);
        if (tgt == c_.nodes.end()) continue;
        const FlowNode* n = tgt->second.node;
        bool catching = false;
        if (const EventNode* e = n->event()) {
          catching = e->kind == EventKind::intermediate && !e->attached_to &&
                     (e->trigger == EventTrigger::message ||
                      e->trigger == EventTrigger::timer);
        } else if (const ActivityNode* a = n->activity()) {
          catching = a->kind == ActivityKind::task &&
                     a->task_behavior == TaskBehavior::external;
        }
        if (!catching) {
          add("E011", id, "event gateway successor '" + f->target +
                              "' is not a catching event or receive task");
        }
      }
    }
  }

  void check_nodes() {
    for (const auto& [id, info] : c_.nodes) {
      if (const EventNode* e = info.node->event()) check_event(id, *e);
      else if (const ActivityNode* a = info.node->activity()) check_activity(id, *a);
      else if (const GatewayNode* g = info.node->gateway()) check_gateway(id, *g);
    }
  }

  void check_associations() {
    for (const Association& a : def_.associations) {
      bool src_ok = c_.nodes.count(a.source) || c_.artifact_ids.count(a.source);
      bool tgt_ok = c_.nodes.count(a.target) || c_.artifact_ids.count(a.target);
      if (!src_ok) add("E002", a.id, "association source '" + a.source + "' does not exist");
      if (!tgt_ok) add("E002", a.id, "association target '" + a.target + "' does not exist");
      if (a.role != AssociationRole::compensation_handler) continue;
      if (src_ok) {
        auto it = c_.nodes.find(a.source);
        if (it == c_.nodes.end() || !it->second.node->activity()) {
          add("E019", a.id, "compensation association source must be an activity");
        }
      }
      if (tgt_ok) {
        auto it = c_.nodes.find(a.target);
        const ActivityNode* h =
            it == c_.nodes.end() ? nullptr : it->second.node->activity();
        if (!h || !h->markers.compensation) {
          add("E019", a.id,
              "compensation association target must be a compensation-marked activity");
        }
      }
    }
  }

  void check_reachability() {
    std::set<std::string> reached;
    std::vector<std::string> frontier;
    for (const auto& [id, info] : c_.nodes) {
      const EventNode* e = info.node->event();
      if (e && e->kind == EventKind::start && info.scope_id == kTopScope) {
        frontier.push_back(id);
      }
    }
    auto visit = [&](const std::string& id) {
      if (reached.insert(id).second) frontier.push_back(id);
    };
    std::vector<std::string> pending = frontier;
    frontier.clear();
    for (const std::string& id : pending) visit(id);
    while (!frontier.empty()) {
      std::string id = frontier.back();
      frontier.pop_back();
      for (const SequenceFlow* f : c_.outgoing[id]) visit(f->target);
      auto info = c_.nodes.find(id);
      if (info == c_.nodes.end()) continue;
      if (const ActivityNode* a = info->second.node->activity()) {
        if (a->body) {
          for (const FlowNode& n : a->body->nodes) {
            const EventNode* e = n.event();
            if (e && e->kind == EventKind::start) visit(n.id);
          }
        }
      }
      // Boundary events ride on their host's reachability.
      for (const auto& [nid, ninfo] : c_.nodes) {
        const EventNode* e = ninfo.node->event();
        if (e && e->attached_to && *e->attached_to == id) visit(nid);
      }
    }
    for (const auto& [id, info] : c_.nodes) {
      if (reached.count(id)) continue;
      if (const ActivityNode* a = info.node->activity()) {
        if (a->markers.compensation) continue;  // outside normal flow
      }
      add("W001", id, "node is unreachable from any start event", Severity::warning);
    }
  }

  void finish() {
    std::sort(diags_.begin(), diags_.end(),
              [](const Diagnostic& a, const Diagnostic& b) {
                if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
                if (a.code != b.code) return a.code < b.code;
                return a.message < b.message;
              });
    diags_.erase(std::unique(diags_.begin(), diags_.end(),
                             [](const Diagnostic& a, const Diagnostic& b) {
                               return a.code == b.code &&
                                      a.subject_id == b.subject_id &&
                                      a.message == b.message;
                             }),
                 diags_.end());
  }

  const ProcessDefinition& def_;
  Collected c_;
  std::vector<Diagnostic> diags_;
};

}  // namespace

std::vector<Diagnostic> validate(const ProcessDefinition& def) {
  return Validator(def).run();
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
    return d.severity == Severity::error;
  });
}

std::string_view to_text(ModelType t) {
  switch (t) {
    case ModelType::private_process: return "private";
    case ModelType::abstract_process: return "abstract";
    case ModelType::collaboration: return "collaboration";
  }
  return "?";
}

namespace {

bool scope_has_activity(const std::vector<FlowNode>& nodes) {
  for (const FlowNode& n : nodes) {
    if (n.activity()) return true;
  }
  return false;
}

}  // namespace

ModelType classify_model_type(const ProcessDefinition& def) {
  int pools_with_activities = 0;
  for (const Pool& p : def.pools) {
    bool any = false;
    for (const Lane& l : p.lanes) any = any || scope_has_activity(l.nodes);
    if (any) ++pools_with_activities;
  }
  // A single working pool among several hollow ones reads as an abstract
  // (public) process; otherwise message exchange across pools is a
  // collaboration.
  if (def.pools.size() >= 2 && pools_with_activities == 1) {
    return ModelType::abstract_process;
  }
  if (def.pools.size() >= 2 && !def.message_flows.empty()) {
    return ModelType::collaboration;
  }
  return ModelType::private_process;
}

}  // namespace bpd
