#include "bpd/fixtures.hpp"

#include <algorithm>

#include "bpd/document.hpp"

namespace bpd::fixtures {

namespace {

ExprSource cond(const std::string& text) {
  ExprSource src;
  src.text = text;
  auto parsed = parse_expression(text);
  src.tree = std::get<ExprPtr>(parsed);
  return src;
}

FlowNode ev(std::string id, EventKind kind, EventTrigger trigger = EventTrigger::none) {
  FlowNode n;
  n.id = std::move(id);
  EventNode e;
  e.kind = kind;
  e.trigger = trigger;
  n.node = e;
  return n;
}

FlowNode message_catch(std::string id, std::string message_name) {
  FlowNode n = ev(std::move(id), EventKind::intermediate, EventTrigger::message);
  std::get<EventNode>(n.node).message_name = std::move(message_name);
  return n;
}

FlowNode boundary(std::string id, EventTrigger trigger, std::string host) {
  FlowNode n = ev(std::move(id), EventKind::intermediate, trigger);
  std::get<EventNode>(n.node).attached_to = std::move(host);
  return n;
}

FlowNode task(std::string id, TaskBehavior behavior = TaskBehavior::automatic) {
  FlowNode n;
  n.id = std::move(id);
  ActivityNode a;
  a.kind = ActivityKind::task;
  a.task_behavior = behavior;
  n.node = a;
  return n;
}

FlowNode comp_task(std::string id) {
  FlowNode n = task(std::move(id));
  std::get<ActivityNode>(n.node).markers.compensation = true;
  return n;
}

FlowNode composite(std::string id, ActivityKind kind, Body body) {
  FlowNode n;
  n.id = std::move(id);
  ActivityNode a;
  a.kind = kind;
  a.body = std::make_shared<const Body>(std::move(body));
  n.node = a;
  return n;
}

FlowNode gw(std::string id, GatewayKind kind) {
  FlowNode n;
  n.id = std::move(id);
  GatewayNode g;
  g.kind = kind;
  n.node = g;
  return n;
}

FlowNode gw_default(std::string id, GatewayKind kind, std::string default_flow) {
  FlowNode n = gw(std::move(id), kind);
  std::get<GatewayNode>(n.node).default_flow = std::move(default_flow);
  return n;
}

FlowNode gw_complex_merge(std::string id, const std::string& activation) {
  FlowNode n = gw(std::move(id), GatewayKind::complex);
  std::get<GatewayNode>(n.node).activation_expression = cond(activation);
  return n;
}

SequenceFlow fl(std::string id, std::string source, std::string target) {
  return SequenceFlow{std::move(id), std::move(source), std::move(target),
                      std::nullopt, false};
}

SequenceFlow flc(std::string id, std::string source, std::string target,
                 const std::string& condition) {
  return SequenceFlow{std::move(id), std::move(source), std::move(target),
                      cond(condition), false};
}

SequenceFlow fld(std::string id, std::string source, std::string target) {
  return SequenceFlow{std::move(id), std::move(source), std::move(target),
                      std::nullopt, true};
}

VariableDecl int_var(std::string name, std::int64_t init) {
  return VariableDecl{std::move(name), VarType::integer, init};
}

ProcessDefinition make_def(std::string id, std::vector<FlowNode> nodes,
                           std::vector<SequenceFlow> flows,
                           std::vector<VariableDecl> vars = {},
                           std::vector<Association> assocs = {}) {
  ProcessDefinition def;
  def.id = std::move(id);
  def.name = def.id;
  def.variables = std::move(vars);
  Pool pool{"P", "", {Lane{"L", "", std::move(nodes)}}};
  def.pools.push_back(std::move(pool));
  def.sequence_flows = std::move(flows);
  def.associations = std::move(assocs);
  return def;
}

Association handler_assoc(std::string id, std::string activity, std::string handler) {
  return Association{std::move(id), std::move(activity), std::move(handler),
                     AssociationRole::compensation_handler};
}

// ---- the corpus -----------------------------------------------------------

ProcessDefinition build_diamond() {
  return make_def(
      "diamond",
      {ev("start", EventKind::start), task("A"), task("B"),
       gw("join", GatewayKind::parallel), ev("end", EventKind::end)},
      {fl("f1", "start", "A"), fl("f2", "start", "B"), fl("f3", "A", "join"),
       fl("f4", "B", "join"), fl("f5", "join", "end")});
}

ProcessDefinition build_and_fork() {
  return make_def(
      "and-fork",
      {ev("start", EventKind::start), gw("fork", GatewayKind::parallel),
       task("A"), task("B"), task("C"), gw("join", GatewayKind::parallel),
       ev("end", EventKind::end)},
      {fl("f0", "start", "fork"), fl("f1", "fork", "A"), fl("f2", "fork", "B"),
       fl("f3", "fork", "C"), fl("f4", "A", "join"), fl("f5", "B", "join"),
       fl("f6", "C", "join"), fl("f7", "join", "end")});
}

ProcessDefinition build_and_join() {
  return make_def(
      "and-join",
      {ev("start", EventKind::start), gw("fork", GatewayKind::parallel),
       task("A"), task("B"), task("C"), gw("join", GatewayKind::parallel),
       ev("end", EventKind::end)},
      {fl("f0", "start", "fork"), fl("f1", "fork", "A"), fl("f2", "fork", "B"),
       fl("f3", "A", "join"), fl("f4", "B", "C"), fl("f5", "C", "join"),
       fl("f6", "join", "end")});
}

ProcessDefinition build_xor_data() {
  return make_def(
      "xor-data",
      {ev("start", EventKind::start),
       gw_default("choice", GatewayKind::exclusive_data, "fb"), task("A"),
       task("B"), gw("merge", GatewayKind::exclusive_data),
       ev("end", EventKind::end)},
      {fl("f0", "start", "choice"), flc("fa", "choice", "A", "x > 0"),
       fld("fb", "choice", "B"), fl("fa2", "A", "merge"),
       fl("fb2", "B", "merge"), fl("f1", "merge", "end")},
      {int_var("x", 1)});
}

ProcessDefinition build_xor_event() {
  return make_def(
      "xor-event",
      {ev("start", EventKind::start), gw("choice", GatewayKind::exclusive_event),
       message_catch("evA", "msgA"), message_catch("evB", "msgB"), task("A"),
       task("B"), gw("merge", GatewayKind::exclusive_data),
       ev("end", EventKind::end)},
      {fl("f0", "start", "choice"), fl("fa", "choice", "evA"),
       fl("fb", "choice", "evB"), fl("fa2", "evA", "A"), fl("fb2", "evB", "B"),
       fl("fa3", "A", "merge"), fl("fb3", "B", "merge"),
       fl("f1", "merge", "end")});
}

ProcessDefinition build_xor_merge() {
  return make_def(
      "xor-merge",
      {ev("start", EventKind::start),
       gw_default("choice", GatewayKind::exclusive_data, "fb"), task("A"),
       task("B"), gw("merge", GatewayKind::exclusive_data), task("C"),
       ev("end", EventKind::end)},
      {fl("f0", "start", "choice"), flc("fa", "choice", "A", "x > 0"),
       fld("fb", "choice", "B"), fl("fa2", "A", "merge"),
       fl("fb2", "B", "merge"), fl("f1", "merge", "C"), fl("f2", "C", "end")},
      {int_var("x", 1)});
}

ProcessDefinition build_or_split() {
  return make_def(
      "or-split",
      {ev("start", EventKind::start),
       gw_default("split", GatewayKind::inclusive, "fc"), task("A"), task("B"),
       task("C"), gw("join", GatewayKind::inclusive), ev("end", EventKind::end)},
      {fl("f0", "start", "split"), flc("fa", "split", "A", "x > 0"),
       flc("fb", "split", "B", "y > 0"), fld("fc", "split", "C"),
       fl("fa2", "A", "join"), fl("fb2", "B", "join"), fl("fc2", "C", "join"),
       fl("f1", "join", "end")},
      {int_var("x", 1), int_var("y", 0)});
}

ProcessDefinition build_or_merge() {
  return make_def(
      "or-merge",
      {ev("start", EventKind::start), gw("fork", GatewayKind::parallel),
       task("A"), task("B"), task("C"), gw("join", GatewayKind::inclusive),
       ev("end", EventKind::end)},
      {fl("f0", "start", "fork"), fl("f1", "fork", "A"), fl("f3", "fork", "B"),
       fl("f2", "A", "join"), fl("f4", "B", "C"), fl("f5", "C", "join"),
       fl("f6", "join", "end")});
}

ProcessDefinition build_complex_split() {
  return make_def(
      "complex-split",
      {ev("start", EventKind::start), gw("split", GatewayKind::complex),
       task("A"), task("B"), gw("join", GatewayKind::inclusive),
       ev("end", EventKind::end)},
      {fl("f0", "start", "split"), flc("fa", "split", "A", "x > 0"),
       flc("fb", "split", "B", "x > 1"), fl("fa2", "A", "join"),
       fl("fb2", "B", "join"), fl("f1", "join", "end")},
      {int_var("x", 2)});
}

ProcessDefinition build_complex_merge() {
  return make_def(
      "complex-merge",
      {ev("start", EventKind::start), gw("fork", GatewayKind::parallel),
       task("A"), task("B"),
       gw_complex_merge("join", "tokens(fa) >= 1 and tokens(fb) >= 1"),
       task("C"), ev("end", EventKind::end)},
      {fl("f0", "start", "fork"), fl("f1", "fork", "A"), fl("f2", "fork", "B"),
       fl("fa", "A", "join"), fl("fb", "B", "join"), fl("f3", "join", "C"),
       fl("f4", "C", "end")});
}

ProcessDefinition build_exception() {
  Body body;
  body.nodes = {ev("bs", EventKind::start),
                task("W", TaskBehavior::external), ev("be", EventKind::end)};
  body.flows = {fl("b0", "bs", "W"), fl("b1", "W", "be")};
  return make_def(
      "exception",
      {ev("start", EventKind::start),
       composite("S", ActivityKind::sub_process, std::move(body)),
       boundary("EB", EventTrigger::error, "S"), task("H"),
       ev("end", EventKind::end), ev("endE", EventKind::end)},
      {fl("f0", "start", "S"), fl("f1", "S", "end"), fl("fe", "EB", "H"),
       fl("fh", "H", "endE")});
}

ProcessDefinition build_transaction() {
  Body body;
  body.nodes = {ev("T0s", EventKind::start), task("TA"), task("TB"),
                ev("T0e", EventKind::end)};
  body.flows = {fl("t1", "T0s", "TA"), fl("t2", "TA", "TB"),
                fl("t3", "TB", "T0e")};
  return make_def(
      "transaction",
      {ev("start", EventKind::start),
       composite("T0", ActivityKind::transaction, std::move(body)),
       boundary("CBE", EventTrigger::cancel, "T0"), comp_task("HA"),
       comp_task("HB"), ev("end", EventKind::end), ev("endC", EventKind::end)},
      {fl("f0", "start", "T0"), fl("f1", "T0", "end"), fl("fc", "CBE", "endC")},
      {},
      {handler_assoc("cA", "TA", "HA"), handler_assoc("cB", "TB", "HB")});
}

ProcessDefinition build_compensation() {
  Body body;
  body.nodes = {ev("Sb", EventKind::start), task("A"), task("B"),
                gw_default("G", GatewayKind::exclusive_data, "bd"),
                ev("cend", EventKind::end, EventTrigger::compensation),
                ev("be", EventKind::end)};
  body.flows = {fl("b0", "Sb", "A"), fl("b1", "A", "B"), fl("b2", "B", "G"),
                flc("bx", "G", "cend", "x > 0"), fld("bd", "G", "be")};
  return make_def(
      "compensation",
      {ev("start", EventKind::start),
       composite("S", ActivityKind::sub_process, std::move(body)),
       comp_task("HA"), comp_task("HB"), ev("end", EventKind::end)},
      {fl("f0", "start", "S"), fl("f1", "S", "end")},
      {int_var("x", 1)},
      {handler_assoc("cA", "A", "HA"), handler_assoc("cB", "B", "HB")});
}

ProcessDefinition build_bad_join() {
  return make_def(
      "bad-join",
      {ev("start", EventKind::start), gw("fork", GatewayKind::parallel),
       gw("split", GatewayKind::inclusive), task("D"), task("A"), task("B"),
       gw("merge", GatewayKind::exclusive_data), gw("join", GatewayKind::parallel),
       ev("end", EventKind::end)},
      {fl("f0", "start", "fork"), fl("p1", "fork", "split"),
       fl("p2", "fork", "D"), flc("oa", "split", "A", "x > 0"),
       flc("ob", "split", "B", "y > 0"), fl("ma", "A", "merge"),
       fl("mb", "B", "merge"), fl("mj", "merge", "join"), fl("dj", "D", "join"),
       fl("f1", "join", "end")},
      {int_var("x", 1), int_var("y", 1)});
}

struct Fixture {
  const char* name;
  ProcessDefinition (*build)();
  std::vector<ScriptEntry> (*script)();
};

std::vector<ScriptEntry> no_script() { return {}; }

std::vector<ScriptEntry> xor_event_script() {
  return {ScriptEntry{2, message_event("msgB", "evB")}};
}

std::vector<ScriptEntry> exception_script() {
  return {ScriptEntry{4, raise_error_event("W", "boom")}};
}

std::vector<ScriptEntry> transaction_script() {
  return {ScriptEntry{5, cancel_transaction_event("T0")}};
}

const Fixture kFixtures[] = {
    {"xor-data", build_xor_data, no_script},
    {"xor-event", build_xor_event, xor_event_script},
    {"xor-merge", build_xor_merge, no_script},
    {"or-split", build_or_split, no_script},
    {"or-merge", build_or_merge, no_script},
    {"complex-split", build_complex_split, no_script},
    {"complex-merge", build_complex_merge, no_script},
    {"and-fork", build_and_fork, no_script},
    {"and-join", build_and_join, no_script},
    {"exception", build_exception, exception_script},
    {"transaction", build_transaction, transaction_script},
    {"compensation", build_compensation, no_script},
    {"diamond", build_diamond, no_script},
    {"bad-join", build_bad_join, no_script},
};

const Fixture* find(const std::string& name) {
  for (const Fixture& f : kFixtures) {
    if (name == f.name) return &f;
  }
  return nullptr;
}

}  // namespace

std::vector<std::string> pattern_names() {
  std::vector<std::string> names;
  for (const Fixture& f : kFixtures) names.emplace_back(f.name);
  return names;
}

bool has_pattern(const std::string& name) { return find(name) != nullptr; }

std::shared_ptr<const ProcessDefinition> pattern_definition(const std::string& name) {
  const Fixture* f = find(name);
  if (!f) throw ModelError("unknown fixture '" + name + "'");
  return std::make_shared<const ProcessDefinition>(f->build());
}

std::string pattern_document(const std::string& name) {
  return serialize_definition(*pattern_definition(name));
}

std::vector<ScriptEntry> pattern_script(const std::string& name) {
  const Fixture* f = find(name);
  if (!f) throw ModelError("unknown fixture '" + name + "'");
  return f->script();
}

std::string pattern_script_jsonl(const std::string& name) {
  return script_to_jsonl(pattern_script(name));
}

}  // namespace bpd::fixtures
