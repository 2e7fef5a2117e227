#include "bpd/model.hpp"

#include <algorithm>

namespace bpd {

const FlowNode& NodeIndex::node_at(const std::string& id) const {
  auto it = nodes.find(id);
  if (it == nodes.end()) throw ModelError("unknown node '" + id + "'");
  return *it->second.node;
}

const SequenceFlow& NodeIndex::flow_at(const std::string& id) const {
  auto it = flows.find(id);
  if (it == flows.end()) throw ModelError("unknown sequence flow '" + id + "'");
  return *it->second;
}

namespace {
const std::vector<const SequenceFlow*> kNoFlows;
}

const std::vector<const SequenceFlow*>& NodeIndex::outgoing_of(
    const std::string& id) const {
  auto it = outgoing.find(id);
  return it == outgoing.end() ? kNoFlows : it->second;
}

const std::vector<const SequenceFlow*>& NodeIndex::incoming_of(
    const std::string& id) const {
  auto it = incoming.find(id);
  return it == incoming.end() ? kNoFlows : it->second;
}

std::vector<std::string> NodeIndex::scope_chain(const std::string& node_id) const {
  std::vector<std::string> chain;
  auto it = nodes.find(node_id);
  if (it == nodes.end()) return chain;
  std::string scope = it->second.scope_id;
  while (true) {
    chain.push_back(scope);
    if (scope == kTopScope) break;
    auto owner = nodes.find(scope);
    if (owner == nodes.end()) break;
    scope = owner->second.scope_id;
  }
  return chain;
}

bool NodeIndex::is_composite(const std::string& node_id) const {
  auto it = nodes.find(node_id);
  if (it == nodes.end()) return false;
  const ActivityNode* a = it->second.node->activity();
  return a != nullptr && a->kind != ActivityKind::task;
}

namespace {

void index_scope(NodeIndex& ix, const std::vector<FlowNode>& nodes,
                 const std::vector<SequenceFlow>& flows,
                 const std::string& scope_id, const std::string& pool_id,
                 const std::string& lane_id) {
  for (const FlowNode& n : nodes) {
    ix.nodes[n.id] = NodeIndex::Entry{&n, pool_id, lane_id, scope_id};
    ix.scope_nodes[scope_id].push_back(n.id);
    if (const ActivityNode* a = n.activity(); a && a->body) {
      index_scope(ix, a->body->nodes, a->body->flows, n.id, pool_id, lane_id);
    }
  }
  for (const SequenceFlow& f : flows) {
    ix.flows[f.id] = &f;
    ix.flow_scope[f.id] = scope_id;
  }
}

}  // namespace

NodeIndex node_index(const ProcessDefinition& def) {
  NodeIndex ix;
  ix.def = &def;
  for (const Pool& pool : def.pools) {
    for (const Lane& lane : pool.lanes) {
      index_scope(ix, lane.nodes, {}, kTopScope, pool.id, lane.id);
    }
  }
  // Top-level flows live on the definition, nested flows inside bodies.
  for (const SequenceFlow& f : def.sequence_flows) {
    ix.flows[f.id] = &f;
    ix.flow_scope[f.id] = kTopScope;
  }

  for (const auto& [id, flow] : ix.flows) {
    if (!ix.nodes.count(flow->source)) {
      throw ModelError("sequence flow '" + id + "' references unknown node '" +
                       flow->source + "'");
    }
    if (!ix.nodes.count(flow->target)) {
      throw ModelError("sequence flow '" + id + "' references unknown node '" +
                       flow->target + "'");
    }
  }

  // Adjacency follows flow declaration order: top-level list first, then each
  // body's flow list in node declaration order.
  auto add_adjacency = [&ix](const std::vector<SequenceFlow>& flows) {
    for (const SequenceFlow& f : flows) {
      ix.outgoing[f.source].push_back(&f);
      ix.incoming[f.target].push_back(&f);
    }
  };
  add_adjacency(def.sequence_flows);
  for (const auto& [id, entry] : ix.nodes) {
    if (const ActivityNode* a = entry.node->activity(); a && a->body) {
      add_adjacency(a->body->flows);
    }
  }

  for (const auto& [id, entry] : ix.nodes) {
    const EventNode* e = entry.node->event();
    if (e && e->attached_to) {
      if (!ix.nodes.count(*e->attached_to)) {
        throw ModelError("boundary event '" + id + "' references unknown node '" +
                         *e->attached_to + "'");
      }
      ix.boundary_events[*e->attached_to].push_back(id);
    }
  }

  for (const Association& a : def.associations) {
    if (a.role == AssociationRole::compensation_handler) {
      ix.compensation_handler[a.source] = a.target;
      auto it = ix.nodes.find(a.source);
      if (it != ix.nodes.end()) {
        ix.compensable_scopes.insert(it->second.scope_id);
      }
    }
  }
  return ix;
}

// --------------------------------------------------------------------------
// Enum text
// --------------------------------------------------------------------------

std::string_view to_text(EventKind k) {
  switch (k) {
    case EventKind::start: return "start";
    case EventKind::intermediate: return "intermediate";
    case EventKind::end: return "end";
  }
  return "?";
}

std::string_view to_text(EventTrigger t) {
  switch (t) {
    case EventTrigger::none: return "none";
    case EventTrigger::message: return "message";
    case EventTrigger::timer: return "timer";
    case EventTrigger::error: return "error";
    case EventTrigger::cancel: return "cancel";
    case EventTrigger::compensation: return "compensation";
    case EventTrigger::terminate: return "terminate";
  }
  return "?";
}

std::string_view to_text(ActivityKind k) {
  switch (k) {
    case ActivityKind::task: return "task";
    case ActivityKind::sub_process: return "subProcess";
    case ActivityKind::transaction: return "transaction";
  }
  return "?";
}

std::string_view to_text(TaskBehavior b) {
  return b == TaskBehavior::automatic ? "auto" : "external";
}

std::string_view to_text(GatewayKind k) {
  switch (k) {
    case GatewayKind::exclusive_data: return "exclusiveData";
    case GatewayKind::exclusive_event: return "exclusiveEvent";
    case GatewayKind::inclusive: return "inclusive";
    case GatewayKind::complex: return "complex";
    case GatewayKind::parallel: return "parallel";
  }
  return "?";
}

std::string_view to_text(AssociationRole r) {
  switch (r) {
    case AssociationRole::compensation_handler: return "compensationHandler";
    case AssociationRole::data_link: return "dataLink";
    case AssociationRole::annotation_link: return "annotationLink";
  }
  return "?";
}

std::string_view to_text(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::data_object: return "dataObject";
    case ArtifactKind::text_annotation: return "textAnnotation";
    case ArtifactKind::group: return "group";
  }
  return "?";
}

std::string_view to_text(VarType t) {
  return t == VarType::boolean ? "bool" : "int";
}

namespace {

template <typename T>
std::optional<T> lookup(std::string_view s,
                        std::initializer_list<std::pair<std::string_view, T>> table) {
  for (const auto& [text, value] : table) {
    if (text == s) return value;
  }
  return std::nullopt;
}

}  // namespace

std::optional<EventKind> event_kind_from(std::string_view s) {
  return lookup<EventKind>(s, {{"start", EventKind::start},
                               {"intermediate", EventKind::intermediate},
                               {"end", EventKind::end}});
}

std::optional<EventTrigger> event_trigger_from(std::string_view s) {
  return lookup<EventTrigger>(s, {{"none", EventTrigger::none},
                                  {"message", EventTrigger::message},
                                  {"timer", EventTrigger::timer},
                                  {"error", EventTrigger::error},
                                  {"cancel", EventTrigger::cancel},
                                  {"compensation", EventTrigger::compensation},
                                  {"terminate", EventTrigger::terminate}});
}

std::optional<ActivityKind> activity_kind_from(std::string_view s) {
  return lookup<ActivityKind>(s, {{"task", ActivityKind::task},
                                  {"subProcess", ActivityKind::sub_process},
                                  {"transaction", ActivityKind::transaction}});
}

std::optional<TaskBehavior> task_behavior_from(std::string_view s) {
  return lookup<TaskBehavior>(s, {{"auto", TaskBehavior::automatic},
                                  {"external", TaskBehavior::external}});
}

std::optional<GatewayKind> gateway_kind_from(std::string_view s) {
  return lookup<GatewayKind>(s, {{"exclusiveData", GatewayKind::exclusive_data},
                                 {"exclusiveEvent", GatewayKind::exclusive_event},
                                 {"inclusive", GatewayKind::inclusive},
                                 {"complex", GatewayKind::complex},
                                 {"parallel", GatewayKind::parallel}});
}

std::optional<AssociationRole> association_role_from(std::string_view s) {
  return lookup<AssociationRole>(
      s, {{"compensationHandler", AssociationRole::compensation_handler},
          {"dataLink", AssociationRole::data_link},
          {"annotationLink", AssociationRole::annotation_link}});
}

std::optional<ArtifactKind> artifact_kind_from(std::string_view s) {
  return lookup<ArtifactKind>(s, {{"dataObject", ArtifactKind::data_object},
                                  {"textAnnotation", ArtifactKind::text_annotation},
                                  {"group", ArtifactKind::group}});
}

std::optional<VarType> var_type_from(std::string_view s) {
  return lookup<VarType>(s, {{"bool", VarType::boolean}, {"int", VarType::integer}});
}

}  // namespace bpd
