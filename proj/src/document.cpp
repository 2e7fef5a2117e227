#include "bpd/document.hpp"

#include <json.hpp>

namespace bpd {

using Json = nlohmann::ordered_json;

namespace {

// Thrown internally and converted to the public ParseError at the boundary.
struct SchemaError {
  ParseError err;
};

[[noreturn]] void schema_fail(const std::string& expected, const std::string& found) {
  throw SchemaError{ParseError{1, 1, expected, found}};
}

std::string type_name(const Json& j) {
  return j.type_name();
}

void check_keys(const Json& obj, const char* what,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) { ok = true; break; }
    }
    if (!ok) {
      schema_fail(std::string("a known field of ") + what,
                  "unknown field '" + key + "'");
    }
  }
}

const Json& require(const Json& obj, const char* what, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    schema_fail(std::string("field '") + field + "' in " + what,
                "object without it");
  }
  return *it;
}

std::string require_string(const Json& obj, const char* what, const char* field) {
  const Json& v = require(obj, what, field);
  if (!v.is_string()) {
    schema_fail(std::string("string in field '") + field + "'", type_name(v));
  }
  return v.get<std::string>();
}

std::string optional_string(const Json& obj, const char* field,
                            const std::string& fallback = "") {
  auto it = obj.find(field);
  if (it == obj.end()) return fallback;
  if (!it->is_string()) {
    schema_fail(std::string("string in field '") + field + "'", type_name(*it));
  }
  return it->get<std::string>();
}

std::int64_t require_int(const Json& v, const char* field) {
  if (!v.is_number_integer()) {
    schema_fail(std::string("integer in field '") + field + "'", type_name(v));
  }
  return v.get<std::int64_t>();
}

ExprSource parse_expr_source(const std::string& text) {
  ExprSource src;
  src.text = text;
  auto result = parse_expression(text);
  if (auto* tree = std::get_if<ExprPtr>(&result)) src.tree = *tree;
  // Unparseable conditions survive parsing; the validator reports them.
  return src;
}

// ---- nodes ---------------------------------------------------------------

Body parse_body(const Json& j);

FlowNode parse_node(const Json& j) {
  if (!j.is_object()) schema_fail("node object", type_name(j));
  FlowNode node;
  node.id = require_string(j, "node", "id");
  std::string type = require_string(j, "node", "type");

  if (type == "event") {
    check_keys(j, "event node",
               {"id", "type", "kind", "trigger", "attachedTo", "messageName",
                "timerTicks", "errorName"});
    EventNode e;
    std::string kind = require_string(j, "event", "kind");
    auto k = event_kind_from(kind);
    if (!k) schema_fail("event kind in field 'kind'", "'" + kind + "'");
    e.kind = *k;
    std::string trigger = optional_string(j, "trigger", "none");
    auto t = event_trigger_from(trigger);
    if (!t) schema_fail("event trigger in field 'trigger'", "'" + trigger + "'");
    e.trigger = *t;
    if (j.contains("attachedTo")) e.attached_to = require_string(j, "event", "attachedTo");
    if (j.contains("messageName")) e.message_name = require_string(j, "event", "messageName");
    if (j.contains("timerTicks")) e.timer_ticks = require_int(j.at("timerTicks"), "timerTicks");
    if (j.contains("errorName")) e.error_name = require_string(j, "event", "errorName");
    node.node = e;
    return node;
  }

  if (type == "activity") {
    check_keys(j, "activity node",
               {"id", "type", "kind", "markers", "body", "taskBehavior",
                "loopCondition", "loopMax", "multiInstanceCount"});
    ActivityNode a;
    std::string kind = require_string(j, "activity", "kind");
    auto k = activity_kind_from(kind);
    if (!k) schema_fail("activity kind in field 'kind'", "'" + kind + "'");
    a.kind = *k;
    if (j.contains("markers")) {
      const Json& m = j.at("markers");
      if (!m.is_array()) schema_fail("array in field 'markers'", type_name(m));
      for (const Json& entry : m) {
        if (!entry.is_string()) schema_fail("marker string", type_name(entry));
        std::string s = entry.get<std::string>();
        if (s == "loop") a.markers.loop = true;
        else if (s == "multiInstance") a.markers.multi_instance = true;
        else if (s == "compensation") a.markers.compensation = true;
        else if (s == "adHoc") a.markers.ad_hoc = true;
        else schema_fail("activity marker in field 'markers'", "'" + s + "'");
      }
    }
    if (j.contains("body")) {
      const Json& b = j.at("body");
      if (!b.is_object()) schema_fail("object in field 'body'", type_name(b));
      check_keys(b, "body", {"nodes", "flows"});
      a.body = std::make_shared<const Body>(parse_body(b));
    }
    std::string behavior = optional_string(j, "taskBehavior", "auto");
    auto tb = task_behavior_from(behavior);
    if (!tb) schema_fail("task behavior in field 'taskBehavior'", "'" + behavior + "'");
    a.task_behavior = *tb;
    if (j.contains("loopCondition")) {
      a.loop_condition = parse_expr_source(require_string(j, "activity", "loopCondition"));
    }
    if (j.contains("loopMax")) a.loop_max = require_int(j.at("loopMax"), "loopMax");
    if (j.contains("multiInstanceCount")) {
      a.multi_instance_count = require_string(j, "activity", "multiInstanceCount");
    }
    node.node = a;
    return node;
  }

  if (type == "gateway") {
    check_keys(j, "gateway node",
               {"id", "type", "kind", "defaultFlow", "activationExpression"});
    GatewayNode g;
    std::string kind = require_string(j, "gateway", "kind");
    auto k = gateway_kind_from(kind);
    if (!k) schema_fail("gateway kind in field 'kind'", "'" + kind + "'");
    g.kind = *k;
    if (j.contains("defaultFlow")) g.default_flow = require_string(j, "gateway", "defaultFlow");
    if (j.contains("activationExpression")) {
      g.activation_expression =
          parse_expr_source(require_string(j, "gateway", "activationExpression"));
    }
    node.node = g;
    return node;
  }

  schema_fail("node type in field 'type'", "'" + type + "'");
}

SequenceFlow parse_flow(const Json& j) {
  if (!j.is_object()) schema_fail("flow object", type_name(j));
  check_keys(j, "flow", {"id", "source", "target", "condition", "isDefault"});
  SequenceFlow f;
  f.id = require_string(j, "flow", "id");
  f.source = require_string(j, "flow", "source");
  f.target = require_string(j, "flow", "target");
  if (j.contains("condition")) {
    f.condition = parse_expr_source(require_string(j, "flow", "condition"));
  }
  if (j.contains("isDefault")) {
    const Json& v = j.at("isDefault");
    if (!v.is_boolean()) schema_fail("boolean in field 'isDefault'", type_name(v));
    f.is_default = v.get<bool>();
  }
  return f;
}

Body parse_body(const Json& j) {
  Body body;
  if (j.contains("nodes")) {
    const Json& nodes = j.at("nodes");
    if (!nodes.is_array()) schema_fail("array in field 'nodes'", type_name(nodes));
    for (const Json& n : nodes) body.nodes.push_back(parse_node(n));
  }
  if (j.contains("flows")) {
    const Json& flows = j.at("flows");
    if (!flows.is_array()) schema_fail("array in field 'flows'", type_name(flows));
    for (const Json& f : flows) body.flows.push_back(parse_flow(f));
  }
  return body;
}

ProcessDefinition parse_document(const Json& doc) {
  if (!doc.is_object()) schema_fail("top-level object", type_name(doc));
  check_keys(doc, "document", {"version", "process"});
  const Json& version = require(doc, "document", "version");
  if (!version.is_number_integer() || version.get<std::int64_t>() != 1) {
    schema_fail("version 1 in field 'version'", version.dump());
  }
  const Json& proc = require(doc, "document", "process");
  if (!proc.is_object()) schema_fail("object in field 'process'", type_name(proc));
  check_keys(proc, "process",
             {"id", "name", "variables", "pools", "flows", "messageFlows",
              "associations", "artifacts"});

  ProcessDefinition def;
  def.id = require_string(proc, "process", "id");
  def.name = optional_string(proc, "name");

  if (proc.contains("variables")) {
    const Json& vars = proc.at("variables");
    if (!vars.is_array()) schema_fail("array in field 'variables'", type_name(vars));
    for (const Json& v : vars) {
      if (!v.is_object()) schema_fail("variable object", type_name(v));
      check_keys(v, "variable", {"name", "type", "init"});
      VariableDecl decl;
      decl.name = require_string(v, "variable", "name");
      std::string type = require_string(v, "variable", "type");
      auto vt = var_type_from(type);
      if (!vt) schema_fail("variable type in field 'type'", "'" + type + "'");
      decl.type = *vt;
      const Json& init = require(v, "variable", "init");
      if (decl.type == VarType::boolean) {
        if (!init.is_boolean()) schema_fail("boolean in field 'init'", type_name(init));
        decl.init = init.get<bool>();
      } else {
        decl.init = require_int(init, "init");
      }
      def.variables.push_back(std::move(decl));
    }
  }

  const Json& pools = require(proc, "process", "pools");
  if (!pools.is_array()) schema_fail("array in field 'pools'", type_name(pools));
  for (const Json& p : pools) {
    if (!p.is_object()) schema_fail("pool object", type_name(p));
    check_keys(p, "pool", {"id", "name", "lanes"});
    Pool pool;
    pool.id = require_string(p, "pool", "id");
    pool.name = optional_string(p, "name");
    const Json& lanes = require(p, "pool", "lanes");
    if (!lanes.is_array()) schema_fail("array in field 'lanes'", type_name(lanes));
    for (const Json& l : lanes) {
      if (!l.is_object()) schema_fail("lane object", type_name(l));
      check_keys(l, "lane", {"id", "name", "nodes"});
      Lane lane;
      lane.id = require_string(l, "lane", "id");
      lane.name = optional_string(l, "name");
      if (l.contains("nodes")) {
        const Json& nodes = l.at("nodes");
        if (!nodes.is_array()) schema_fail("array in field 'nodes'", type_name(nodes));
        for (const Json& n : nodes) lane.nodes.push_back(parse_node(n));
      }
      pool.lanes.push_back(std::move(lane));
    }
    def.pools.push_back(std::move(pool));
  }

  if (proc.contains("flows")) {
    const Json& flows = proc.at("flows");
    if (!flows.is_array()) schema_fail("array in field 'flows'", type_name(flows));
    for (const Json& f : flows) def.sequence_flows.push_back(parse_flow(f));
  }

  if (proc.contains("messageFlows")) {
    const Json& mflows = proc.at("messageFlows");
    if (!mflows.is_array()) schema_fail("array in field 'messageFlows'", type_name(mflows));
    for (const Json& m : mflows) {
      if (!m.is_object()) schema_fail("message flow object", type_name(m));
      check_keys(m, "message flow", {"id", "source", "target"});
      MessageFlow mf;
      mf.id = require_string(m, "message flow", "id");
      mf.source = require_string(m, "message flow", "source");
      mf.target = require_string(m, "message flow", "target");
      def.message_flows.push_back(std::move(mf));
    }
  }

  if (proc.contains("associations")) {
    const Json& assocs = proc.at("associations");
    if (!assocs.is_array()) schema_fail("array in field 'associations'", type_name(assocs));
    for (const Json& a : assocs) {
      if (!a.is_object()) schema_fail("association object", type_name(a));
      check_keys(a, "association", {"id", "source", "target", "role"});
      Association assoc;
      assoc.id = require_string(a, "association", "id");
      assoc.source = require_string(a, "association", "source");
      assoc.target = require_string(a, "association", "target");
      std::string role = require_string(a, "association", "role");
      auto r = association_role_from(role);
      if (!r) schema_fail("association role in field 'role'", "'" + role + "'");
      assoc.role = *r;
      def.associations.push_back(std::move(assoc));
    }
  }

  if (proc.contains("artifacts")) {
    const Json& artifacts = proc.at("artifacts");
    if (!artifacts.is_array()) schema_fail("array in field 'artifacts'", type_name(artifacts));
    for (const Json& a : artifacts) {
      if (!a.is_object()) schema_fail("artifact object", type_name(a));
      check_keys(a, "artifact", {"id", "kind", "payload"});
      Artifact art;
      art.id = require_string(a, "artifact", "id");
      std::string kind = require_string(a, "artifact", "kind");
      auto k = artifact_kind_from(kind);
      if (!k) schema_fail("artifact kind in field 'kind'", "'" + kind + "'");
      art.kind = *k;
      art.payload = optional_string(a, "payload");
      def.artifacts.push_back(std::move(art));
    }
  }

  return def;
}

// Converts a byte offset from the json parser into line/column.
std::pair<int, int> offset_to_position(const std::string& text, std::size_t byte) {
  int line = 1, column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

}  // namespace

std::variant<ProcessDefinition, ParseError> parse_definition(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, column] = offset_to_position(text, e.byte > 0 ? e.byte - 1 : 0);
    return ParseError{line, column, "well-formed JSON", e.what()};
  }
  try {
    return parse_document(doc);
  } catch (const SchemaError& e) {
    return e.err;
  }
}

// --------------------------------------------------------------------------
// Serialization
// --------------------------------------------------------------------------

namespace {

Json value_json(const Value& v) {
  if (const bool* b = std::get_if<bool>(&v)) return *b;
  return std::get<std::int64_t>(v);
}

Json node_json(const FlowNode& node);

Json flow_json(const SequenceFlow& f) {
  Json j;
  j["id"] = f.id;
  j["source"] = f.source;
  j["target"] = f.target;
  if (f.condition) j["condition"] = f.condition->text;
  if (f.is_default) j["isDefault"] = true;
  return j;
}

Json body_json(const Body& b) {
  Json j;
  j["nodes"] = Json::array();
  for (const FlowNode& n : b.nodes) j["nodes"].push_back(node_json(n));
  j["flows"] = Json::array();
  for (const SequenceFlow& f : b.flows) j["flows"].push_back(flow_json(f));
  return j;
}

Json node_json(const FlowNode& node) {
  Json j;
  j["id"] = node.id;
  if (const EventNode* e = node.event()) {
    j["type"] = "event";
    j["kind"] = std::string(to_text(e->kind));
    j["trigger"] = std::string(to_text(e->trigger));
    if (e->attached_to) j["attachedTo"] = *e->attached_to;
    if (e->message_name) j["messageName"] = *e->message_name;
    if (e->timer_ticks) j["timerTicks"] = *e->timer_ticks;
    if (e->error_name) j["errorName"] = *e->error_name;
  } else if (const ActivityNode* a = node.activity()) {
    j["type"] = "activity";
    j["kind"] = std::string(to_text(a->kind));
    Json markers = Json::array();
    if (a->markers.loop) markers.push_back("loop");
    if (a->markers.multi_instance) markers.push_back("multiInstance");
    if (a->markers.compensation) markers.push_back("compensation");
    if (a->markers.ad_hoc) markers.push_back("adHoc");
    j["markers"] = markers;
    if (a->body) j["body"] = body_json(*a->body);
    if (a->kind == ActivityKind::task) {
      j["taskBehavior"] = std::string(to_text(a->task_behavior));
    }
    if (a->loop_condition) j["loopCondition"] = a->loop_condition->text;
    if (a->loop_max) j["loopMax"] = *a->loop_max;
    if (a->multi_instance_count) j["multiInstanceCount"] = *a->multi_instance_count;
  } else {
    const GatewayNode* g = node.gateway();
    j["type"] = "gateway";
    j["kind"] = std::string(to_text(g->kind));
    if (g->default_flow) j["defaultFlow"] = *g->default_flow;
    if (g->activation_expression) {
      j["activationExpression"] = g->activation_expression->text;
    }
  }
  return j;
}

}  // namespace

std::string serialize_definition(const ProcessDefinition& def) {
  Json proc;
  proc["id"] = def.id;
  proc["name"] = def.name;
  proc["variables"] = Json::array();
  for (const VariableDecl& v : def.variables) {
    Json var;
    var["name"] = v.name;
    var["type"] = std::string(to_text(v.type));
    var["init"] = value_json(v.init);
    proc["variables"].push_back(var);
  }
  proc["pools"] = Json::array();
  for (const Pool& p : def.pools) {
    Json pool;
    pool["id"] = p.id;
    pool["name"] = p.name;
    pool["lanes"] = Json::array();
    for (const Lane& l : p.lanes) {
      Json lane;
      lane["id"] = l.id;
      lane["name"] = l.name;
      lane["nodes"] = Json::array();
      for (const FlowNode& n : l.nodes) lane["nodes"].push_back(node_json(n));
      pool["lanes"].push_back(lane);
    }
    proc["pools"].push_back(pool);
  }
  proc["flows"] = Json::array();
  for (const SequenceFlow& f : def.sequence_flows) proc["flows"].push_back(flow_json(f));
  proc["messageFlows"] = Json::array();
  for (const MessageFlow& m : def.message_flows) {
    Json mf;
    mf["id"] = m.id;
    mf["source"] = m.source;
    mf["target"] = m.target;
    proc["messageFlows"].push_back(mf);
  }
  proc["associations"] = Json::array();
  for (const Association& a : def.associations) {
    Json assoc;
    assoc["id"] = a.id;
    assoc["source"] = a.source;
    assoc["target"] = a.target;
    assoc["role"] = std::string(to_text(a.role));
    proc["associations"].push_back(assoc);
  }
  proc["artifacts"] = Json::array();
  for (const Artifact& a : def.artifacts) {
    Json art;
    art["id"] = a.id;
    art["kind"] = std::string(to_text(a.kind));
    art["payload"] = a.payload;
    proc["artifacts"].push_back(art);
  }

  Json doc;
  doc["version"] = 1;
  doc["process"] = proc;
  return doc.dump(2) + "\n";
}

bool definitions_equal(const ProcessDefinition& a, const ProcessDefinition& b) {
  return serialize_definition(a) == serialize_definition(b);
}

}  // namespace bpd
