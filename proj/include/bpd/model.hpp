// Business Process Diagram data model: pools/lanes, flow nodes, connecting
// objects, artifacts, and the indexed view the engine and analyzer work from.
// All values are immutable after construction and safe to share across
// threads.
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bpd/expression.hpp"

namespace bpd {

// --------------------------------------------------------------------------
// Flow nodes
// --------------------------------------------------------------------------

enum class EventKind { start, intermediate, end };
enum class EventTrigger { none, message, timer, error, cancel, compensation, terminate };

struct EventNode {
  EventKind kind = EventKind::start;
  EventTrigger trigger = EventTrigger::none;
  std::optional<std::string> attached_to;   // boundary events only
  std::optional<std::string> message_name;  // match key for message catches
  std::optional<std::int64_t> timer_ticks;  // delay for timer triggers
  std::optional<std::string> error_name;    // filter for error catches; absent = any
};

enum class ActivityKind { task, sub_process, transaction };
enum class TaskBehavior { automatic, external };

struct ActivityMarkers {
  bool loop = false;
  bool multi_instance = false;
  bool compensation = false;
  bool ad_hoc = false;
};

// A condition as written plus its parse result (null when unparseable; the
// validator reports that, and serialization keeps the original text).
struct ExprSource {
  std::string text;
  ExprPtr tree;
};

struct Body;

struct ActivityNode {
  ActivityKind kind = ActivityKind::task;
  ActivityMarkers markers;
  std::shared_ptr<const Body> body;  // present iff kind != task
  TaskBehavior task_behavior = TaskBehavior::automatic;
  std::optional<ExprSource> loop_condition;
  std::optional<std::int64_t> loop_max;
  std::optional<std::string> multi_instance_count;  // case variable name
};

enum class GatewayKind { exclusive_data, exclusive_event, inclusive, complex, parallel };

struct GatewayNode {
  GatewayKind kind = GatewayKind::exclusive_data;
  std::optional<std::string> default_flow;
  std::optional<ExprSource> activation_expression;  // complex merge only
};

struct FlowNode {
  std::string id;
  std::variant<EventNode, ActivityNode, GatewayNode> node;

  const EventNode* event() const { return std::get_if<EventNode>(&node); }
  const ActivityNode* activity() const { return std::get_if<ActivityNode>(&node); }
  const GatewayNode* gateway() const { return std::get_if<GatewayNode>(&node); }
};

struct SequenceFlow {
  std::string id;
  std::string source;
  std::string target;
  std::optional<ExprSource> condition;
  bool is_default = false;
};

// Nested scope of a sub-process or transaction.
struct Body {
  std::vector<FlowNode> nodes;
  std::vector<SequenceFlow> flows;
};

// --------------------------------------------------------------------------
// Containers and connecting objects
// --------------------------------------------------------------------------

struct Lane {
  std::string id;
  std::string name;
  std::vector<FlowNode> nodes;
};

struct Pool {
  std::string id;
  std::string name;
  std::vector<Lane> lanes;
};

struct MessageFlow {
  std::string id;
  std::string source;
  std::string target;
};

enum class AssociationRole { compensation_handler, data_link, annotation_link };

struct Association {
  std::string id;
  std::string source;
  std::string target;
  AssociationRole role = AssociationRole::data_link;
};

enum class ArtifactKind { data_object, text_annotation, group };

struct Artifact {
  std::string id;
  ArtifactKind kind = ArtifactKind::data_object;
  std::string payload;
};

enum class VarType { boolean, integer };

struct VariableDecl {
  std::string name;
  VarType type = VarType::integer;
  Value init = std::int64_t{0};
};

struct ProcessDefinition {
  std::string id;
  std::string name;
  std::vector<VariableDecl> variables;
  std::vector<Pool> pools;
  std::vector<SequenceFlow> sequence_flows;  // top-level scope
  std::vector<MessageFlow> message_flows;
  std::vector<Association> associations;
  std::vector<Artifact> artifacts;
};

// --------------------------------------------------------------------------
// Diagnostics
// --------------------------------------------------------------------------

enum class Severity { error, warning };

struct Diagnostic {
  std::string code;     // E###/W###
  std::string message;
  std::string subject_id;
  Severity severity = Severity::error;
};

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --------------------------------------------------------------------------
// NodeIndex: id-keyed view with adjacency, scope, and boundary information.
// Scope id "" is the top level; otherwise the owning composite activity's id.
// --------------------------------------------------------------------------

inline constexpr const char* kTopScope = "";

struct NodeIndex {
  struct Entry {
    const FlowNode* node = nullptr;
    std::string pool_id;
    std::string lane_id;
    std::string scope_id;
  };

  const ProcessDefinition* def = nullptr;
  std::map<std::string, Entry> nodes;
  std::map<std::string, const SequenceFlow*> flows;
  std::map<std::string, std::string> flow_scope;
  // Adjacency in flow declaration order within the owning scope.
  std::map<std::string, std::vector<const SequenceFlow*>> outgoing;
  std::map<std::string, std::vector<const SequenceFlow*>> incoming;
  // Boundary events attached to each activity, declaration order.
  std::map<std::string, std::vector<std::string>> boundary_events;
  // Activity id -> its compensation handler activity (via association).
  std::map<std::string, std::string> compensation_handler;
  // Scope id -> direct child node ids, declaration order.
  std::map<std::string, std::vector<std::string>> scope_nodes;
  // Scopes that own at least one direct child with a compensation handler.
  std::set<std::string> compensable_scopes;

  const FlowNode& node_at(const std::string& id) const;
  const SequenceFlow& flow_at(const std::string& id) const;
  const std::vector<const SequenceFlow*>& outgoing_of(const std::string& id) const;
  const std::vector<const SequenceFlow*>& incoming_of(const std::string& id) const;
  // Enclosing scope chain from the node's own scope up to the top level.
  std::vector<std::string> scope_chain(const std::string& node_id) const;
  bool is_composite(const std::string& node_id) const;
};

// Builds the index. Throws ModelError naming the offending id when a flow or
// attachment references a node that does not exist.
NodeIndex node_index(const ProcessDefinition& def);

// --------------------------------------------------------------------------
// Enum <-> text (the document format's exact spellings)
// --------------------------------------------------------------------------

std::string_view to_text(EventKind k);
std::string_view to_text(EventTrigger t);
std::string_view to_text(ActivityKind k);
std::string_view to_text(TaskBehavior b);
std::string_view to_text(GatewayKind k);
std::string_view to_text(AssociationRole r);
std::string_view to_text(ArtifactKind k);
std::string_view to_text(VarType t);

std::optional<EventKind> event_kind_from(std::string_view s);
std::optional<EventTrigger> event_trigger_from(std::string_view s);
std::optional<ActivityKind> activity_kind_from(std::string_view s);
std::optional<TaskBehavior> task_behavior_from(std::string_view s);
std::optional<GatewayKind> gateway_kind_from(std::string_view s);
std::optional<AssociationRole> association_role_from(std::string_view s);
std::optional<ArtifactKind> artifact_kind_from(std::string_view s);
std::optional<VarType> var_type_from(std::string_view s);

}  // namespace bpd
