// Shared builders for test definitions.
#pragma once

#include <string>
#include <vector>

#include "bpd/model.hpp"

namespace testutil {

using namespace bpd;

inline ExprSource cond(const std::string& text) {
  ExprSource src;
  src.text = text;
  auto parsed = parse_expression(text);
  if (auto* tree = std::get_if<ExprPtr>(&parsed)) src.tree = *tree;
  return src;
}

inline FlowNode ev(std::string id, EventKind kind,
                   EventTrigger trigger = EventTrigger::none) {
  FlowNode n;
  n.id = std::move(id);
  EventNode e;
  e.kind = kind;
  e.trigger = trigger;
  n.node = e;
  return n;
}

inline FlowNode task(std::string id, TaskBehavior behavior = TaskBehavior::automatic) {
  FlowNode n;
  n.id = std::move(id);
  ActivityNode a;
  a.kind = ActivityKind::task;
  a.task_behavior = behavior;
  n.node = a;
  return n;
}

inline FlowNode gw(std::string id, GatewayKind kind) {
  FlowNode n;
  n.id = std::move(id);
  GatewayNode g;
  g.kind = kind;
  n.node = g;
  return n;
}

inline SequenceFlow fl(std::string id, std::string source, std::string target) {
  return SequenceFlow{std::move(id), std::move(source), std::move(target),
                      std::nullopt, false};
}

inline SequenceFlow flc(std::string id, std::string source, std::string target,
                        const std::string& condition) {
  return SequenceFlow{std::move(id), std::move(source), std::move(target),
                      cond(condition), false};
}

inline ProcessDefinition make_def(std::string id, std::vector<FlowNode> nodes,
                                  std::vector<SequenceFlow> flows,
                                  std::vector<VariableDecl> vars = {}) {
  ProcessDefinition def;
  def.id = std::move(id);
  def.name = def.id;
  def.variables = std::move(vars);
  def.pools.push_back(Pool{"P", "", {Lane{"L", "", std::move(nodes)}}});
  def.sequence_flows = std::move(flows);
  return def;
}

// start -> A -> end; the smallest well-formed process.
inline ProcessDefinition linear_def(std::string id = "linear") {
  return make_def(std::move(id),
                  {ev("start", EventKind::start), task("A"), ev("end", EventKind::end)},
                  {fl("f1", "start", "A"), fl("f2", "A", "end")});
}

}  // namespace testutil
