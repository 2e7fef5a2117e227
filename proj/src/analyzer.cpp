#include "bpd/analyzer.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <tuple>

#include <json.hpp>

#include "bpd/validate.hpp"

namespace bpd {

using Json = nlohmann::ordered_json;

std::string_view to_text(Tristate t) {
  switch (t) {
    case Tristate::yes: return "true";
    case Tristate::no: return "false";
    case Tristate::unknown: return "unknown";
  }
  return "?";
}

namespace {

void collect_node_ids(const std::vector<FlowNode>& nodes, std::vector<std::string>& out) {
  for (const FlowNode& n : nodes) {
    out.push_back(n.id);
    if (const ActivityNode* a = n.activity(); a && a->body) {
      collect_node_ids(a->body->nodes, out);
    }
  }
}

// A top-level plain end event firing while tokens remain elsewhere is the
// classic improper-completion shape.
bool is_plain_top_end(const NodeIndex& ix, const Transition& t) {
  if (t.kind != TransitionKind::process_end) return false;
  auto it = ix.nodes.find(t.subject);
  if (it == ix.nodes.end() || it->second.scope_id != kTopScope) return false;
  const EventNode* e = it->second.node->event();
  return e && e->trigger == EventTrigger::none;
}

}  // namespace

StateGraph explore(const ProcessDefinition& def, const ExploreOptions& options) {
  auto shared = std::make_shared<const ProcessDefinition>(def);
  ProcessInstance initial =
      ProcessInstance::instantiate(shared, options.initial_data);
  const NodeIndex& ix = initial.index();

  StateGraph graph;
  graph.definition_id = def.id;
  for (const Pool& p : def.pools) {
    for (const Lane& l : p.lanes) collect_node_ids(l.nodes, graph.all_nodes);
  }

  std::map<std::string, std::size_t> seen;
  std::vector<ProcessInstance> instances;
  std::set<std::string> touched;
  std::deque<std::size_t> frontier;
  std::vector<bool> expanded;
  std::set<std::tuple<std::size_t, std::string, std::size_t>> edge_seen;

  auto intern = [&](ProcessInstance inst) -> std::size_t {
    std::string canon = inst.canonical_state();
    auto it = seen.find(canon);
    if (it != seen.end()) return it->second;
    std::size_t id = instances.size();
    graph.states.push_back(canon);
    seen.emplace(std::move(canon), id);
    graph.markings.push_back(inst.marking());
    StateGraph::Flags flags;
    flags.final_state = inst.status() == InstanceStatus::completed ||
                        inst.status() == InstanceStatus::terminated;
    graph.flags.push_back(flags);
    for (const auto& [pos, count] : inst.marking()) {
      if (count > 0 && ix.nodes.count(pos)) touched.insert(pos);
    }
    instances.push_back(std::move(inst));
    expanded.push_back(false);
    frontier.push_back(id);
    return id;
  };

  intern(std::move(initial));

  while (!frontier.empty()) {
    if (instances.size() > options.max_states) {
      graph.bounded = true;
      break;
    }
    std::size_t cur = frontier.front();
    frontier.pop_front();
    expanded[cur] = true;
    auto branches = instances[cur].successor_branches(options.free_conditions);
    for (SuccessorBranch& b : branches) {
      if (!b.is_fault) touched.insert(b.transition.subject);
      std::size_t to = intern(std::move(b.next));
      if (edge_seen.emplace(cur, b.key, to).second) {
        graph.edges.push_back(StateGraph::Edge{cur, b.key, to});
        if (!b.is_fault && is_plain_top_end(ix, b.transition) &&
            !instances[to].marking().empty()) {
          graph.flags[to].improper = true;
        }
      }
      if (instances.size() > options.max_states) {
        graph.bounded = true;
        break;
      }
    }
    if (graph.bounded) break;
  }

  graph.out_edges.assign(graph.states.size(), {});
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    graph.out_edges[graph.edges[i].from].push_back(i);
  }
  // Deadlock: an expanded, non-final state with no way out (events are
  // already treated as available during expansion).
  for (std::size_t i = 0; i < graph.states.size(); ++i) {
    if (i < expanded.size() && expanded[i] && !graph.flags[i].final_state &&
        graph.out_edges[i].empty()) {
      graph.flags[i].deadlock = true;
    }
  }
  graph.touched_nodes.assign(touched.begin(), touched.end());
  return graph;
}

SoundnessReport check_soundness(const StateGraph& graph) {
  SoundnessReport report;
  report.bounded = graph.bounded;
  for (std::size_t i = 0; i < graph.states.size(); ++i) {
    if (graph.flags[i].deadlock) report.deadlocks.push_back(i);
  }
  if (graph.bounded) {
    // Everything beyond the budget is unknown; only deadlocks found so far
    // are reported.
    return report;
  }

  // Option to complete: backward reachability from final states.
  std::vector<std::vector<std::size_t>> rev(graph.states.size());
  for (const StateGraph::Edge& e : graph.edges) rev[e.to].push_back(e.from);
  std::vector<bool> co_reaches(graph.states.size(), false);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < graph.states.size(); ++i) {
    if (graph.flags[i].final_state) {
      co_reaches[i] = true;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    std::size_t cur = queue.front();
    queue.pop_front();
    for (std::size_t p : rev[cur]) {
      if (!co_reaches[p]) {
        co_reaches[p] = true;
        queue.push_back(p);
      }
    }
  }
  bool option = std::all_of(co_reaches.begin(), co_reaches.end(),
                            [](bool b) { return b; });
  report.option_to_complete = option ? Tristate::yes : Tristate::no;

  bool improper = std::any_of(graph.flags.begin(), graph.flags.end(),
                              [](const StateGraph::Flags& f) { return f.improper; });
  report.proper_completion = improper ? Tristate::no : Tristate::yes;

  std::set<std::string> touched(graph.touched_nodes.begin(),
                                graph.touched_nodes.end());
  for (const std::string& id : graph.all_nodes) {
    if (!touched.count(id)) report.unreachable_nodes.push_back(id);
  }
  return report;
}

bool conformance(const ProcessDefinition& def, const Trace& trace,
                 const StateGraph& graph) {
  if (graph.definition_id != def.id) {
    throw ModelError("state graph belongs to definition '" + graph.definition_id +
                     "', not '" + def.id + "'");
  }
  if (!trace.definition_id.empty() && trace.definition_id != def.id) {
    throw ModelError("trace belongs to definition '" + trace.definition_id +
                     "', not '" + def.id + "'");
  }
  std::size_t cur = graph.initial;
  for (const TraceStep& step : trace.steps) {
    bool advanced = false;
    for (std::size_t ei : graph.out_edges[cur]) {
      if (graph.edges[ei].key == step.transition.id) {
        cur = graph.edges[ei].to;
        advanced = true;
        break;
      }
    }
    if (!advanced) return false;
  }
  return true;
}

std::string report_to_json(const SoundnessReport& report) {
  Json j;
  auto flag = [](Tristate t) -> Json {
    switch (t) {
      case Tristate::yes: return true;
      case Tristate::no: return false;
      case Tristate::unknown: return "unknown";
    }
    return "unknown";
  };
  j["optionToComplete"] = flag(report.option_to_complete);
  j["properCompletion"] = flag(report.proper_completion);
  j["deadlocks"] = report.deadlocks;
  j["unreachableNodes"] = report.unreachable_nodes;
  j["bounded"] = report.bounded;
  return j.dump(2) + "\n";
}

}  // namespace bpd
