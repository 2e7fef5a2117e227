#include "bpd/engine.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "bpd/validate.hpp"

namespace bpd {

using Json = nlohmann::ordered_json;

// --------------------------------------------------------------------------
// Text helpers
// --------------------------------------------------------------------------

std::string_view to_text(TransitionKind k) {
  switch (k) {
    case TransitionKind::fire_start: return "fireStart";
    case TransitionKind::complete_task: return "completeTask";
    case TransitionKind::gateway_split: return "gatewaySplit";
    case TransitionKind::gateway_join: return "gatewayJoin";
    case TransitionKind::event_catch: return "eventCatch";
    case TransitionKind::boundary_interrupt: return "boundaryInterrupt";
    case TransitionKind::transaction_outcome: return "transactionOutcome";
    case TransitionKind::compensation_run: return "compensationRun";
    case TransitionKind::process_end: return "processEnd";
  }
  return "?";
}

std::optional<TransitionKind> transition_kind_from(std::string_view s) {
  static constexpr TransitionKind kinds[] = {
      TransitionKind::fire_start,        TransitionKind::complete_task,
      TransitionKind::gateway_split,     TransitionKind::gateway_join,
      TransitionKind::event_catch,       TransitionKind::boundary_interrupt,
      TransitionKind::transaction_outcome, TransitionKind::compensation_run,
      TransitionKind::process_end};
  for (TransitionKind k : kinds) {
    if (to_text(k) == s) return k;
  }
  return std::nullopt;
}

std::string_view to_text(InstanceStatus s) {
  switch (s) {
    case InstanceStatus::running: return "running";
    case InstanceStatus::completed: return "completed";
    case InstanceStatus::terminated: return "terminated";
    case InstanceStatus::failed: return "failed";
  }
  return "?";
}

std::string_view to_text(ActivityState s) {
  switch (s) {
    case ActivityState::running: return "running";
    case ActivityState::waiting_external: return "waitingExternal";
    case ActivityState::completed: return "completed";
    case ActivityState::compensated: return "compensated";
  }
  return "?";
}

std::string make_transition_id(TransitionKind kind, const std::string& subject,
                               const std::vector<std::string>& consumed,
                               const std::vector<std::string>& produced) {
  std::string id(to_text(kind));
  id += ':';
  id += subject;
  id += ':';
  for (std::size_t i = 0; i < consumed.size(); ++i) {
    if (i) id += '+';
    id += consumed[i];
  }
  id += '>';
  for (std::size_t i = 0; i < produced.size(); ++i) {
    if (i) id += '+';
    id += produced[i];
  }
  return id;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

namespace {

std::string hex16(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

std::string escape_minimal(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string canonical_case_data(const VarMap& data) {
  std::string out = "{";
  bool first = true;
  for (const auto& [name, value] : data) {
    if (!first) out += ',';
    first = false;
    out += '"';
    out += escape_minimal(name);
    out += "\":";
    if (const bool* b = std::get_if<bool>(&value)) {
      out += *b ? "true" : "false";
    } else {
      out += std::to_string(std::get<std::int64_t>(value));
    }
  }
  out += '}';
  return out;
}

ExternalEvent message_event(std::string name, std::string target, VarMap payload) {
  ExternalEvent e;
  e.kind = ExternalEvent::Kind::message;
  e.name = std::move(name);
  e.target = std::move(target);
  e.payload = std::move(payload);
  return e;
}

ExternalEvent advance_time_event(std::int64_t ticks) {
  ExternalEvent e;
  e.kind = ExternalEvent::Kind::advance_time;
  e.ticks = ticks;
  return e;
}

ExternalEvent raise_error_event(std::string activity, std::string error_name) {
  ExternalEvent e;
  e.kind = ExternalEvent::Kind::raise_error;
  e.activity = std::move(activity);
  e.error_name = std::move(error_name);
  return e;
}

ExternalEvent cancel_transaction_event(std::string transaction) {
  ExternalEvent e;
  e.kind = ExternalEvent::Kind::cancel_transaction;
  e.transaction = std::move(transaction);
  return e;
}

ExternalEvent complete_task_event(std::string task, VarMap assignments) {
  ExternalEvent e;
  e.kind = ExternalEvent::Kind::complete_task;
  e.task = std::move(task);
  e.assignments = std::move(assignments);
  return e;
}

// --------------------------------------------------------------------------
// Internal transition description
// --------------------------------------------------------------------------

struct ProcessInstance::Enabled {
  Transition t;
  int pending_index = -1;   // external event consumed when fired
  int signal_index = -1;    // internal signal consumed when fired
  VarMap data_update;       // payload / completion assignments

  bool is_start_event = false;
  bool is_activation = false;
  ActivityState activation_state = ActivityState::running;
  std::int64_t mi_spawn = 0;
  bool mi_decrement = false;
  bool is_completion = false;
  bool loop_again = false;
  bool terminate_all = false;
  bool tx_cancel_begin = false;
  bool tx_cancel_finish = false;
  std::string tx_of;
  bool comp_pop = false;
  std::optional<Signal> raises;
  std::vector<CompItem> comp_enqueue;
  std::string interrupt_host;
};

struct ProcessInstance::EnabledSet {
  std::vector<Enabled> transitions;
  struct Fault {
    std::string key;
    std::string subject;
    std::string reason;
  };
  std::vector<Fault> faults;
};

namespace {

std::vector<std::string> flow_ids(const std::vector<const SequenceFlow*>& flows) {
  std::vector<std::string> out;
  out.reserve(flows.size());
  for (const SequenceFlow* f : flows) out.push_back(f->id);
  return out;
}

std::vector<std::string> sorted_tokens(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

// --------------------------------------------------------------------------
// Instantiation
// --------------------------------------------------------------------------

ProcessInstance ProcessInstance::instantiate(
    std::shared_ptr<const ProcessDefinition> def, const VarMap& initial_data) {
  if (!def) throw ModelError("null definition");
  auto diags = validate(*def);
  for (const Diagnostic& d : diags) {
    if (d.severity == Severity::error) {
      throw ModelError("definition rejected: " + d.code + " " + d.subject_id +
                       " " + d.message);
    }
  }

  ProcessInstance inst;
  inst.def_ = std::move(def);
  inst.index_ = std::make_shared<const NodeIndex>(node_index(*inst.def_));

  for (const VariableDecl& v : inst.def_->variables) {
    inst.case_data_[v.name] = v.init;
  }
  for (const auto& [name, value] : initial_data) {
    auto it = inst.case_data_.find(name);
    if (it == inst.case_data_.end()) {
      throw ModelError("initial data sets undeclared variable '" + name + "'");
    }
    if (it->second.index() != value.index()) {
      throw ModelError("initial data type mismatch for variable '" + name + "'");
    }
    it->second = value;
  }

  for (const auto& [id, entry] : inst.index_->nodes) {
    if (entry.scope_id != kTopScope) continue;
    const EventNode* e = entry.node->event();
    if (!e || e->kind != EventKind::start) continue;
    if (e->trigger == EventTrigger::none) {
      inst.marking_[id] = 1;
    } else if (e->trigger == EventTrigger::timer) {
      inst.timer_arm_[id] = e->timer_ticks.value_or(1);
    }
  }
  return inst;
}

// --------------------------------------------------------------------------
// Small state queries
// --------------------------------------------------------------------------

namespace {

bool is_flow_position(const NodeIndex& ix, const std::string& pos) {
  return ix.flows.count(pos) > 0;
}

}  // namespace

std::string ProcessInstance::data_hash() const {
  return hex16(fnv1a64(canonical_case_data(case_data_)));
}

// One canonical line; excludes clock, case data, timers, and undelivered
// external events so that data-/time-abstracted states deduplicate.
std::string ProcessInstance::canonical_state() const {
  std::ostringstream os;
  os << "s=" << to_text(status_) << ";m=";
  bool first = true;
  for (const auto& [pos, count] : marking_) {
    if (!first) os << ',';
    first = false;
    os << pos;
    if (count != 1) os << '*' << count;
  }
  os << ";a=";
  first = true;
  for (const auto& [id, rt] : activity_states_) {
    if (!first) os << ',';
    first = false;
    os << id << ':' << to_text(rt.state) << ':' << rt.loop_count << ':'
       << rt.mi_remaining;
  }
  os << ";fs=";
  first = true;
  for (const std::string& id : fired_starts_) {
    if (!first) os << ',';
    first = false;
    os << id;
  }
  os << ";sg=";
  first = true;
  for (const Signal& s : signals_) {
    if (!first) os << ',';
    first = false;
    os << (s.kind == Signal::Kind::error ? "err" : "cancel") << ':' << s.scope
       << ':' << s.name;
  }
  os << ";cq=";
  first = true;
  for (const CompItem& c : comp_queue_) {
    if (!first) os << ',';
    first = false;
    os << c.scope << '/' << c.handler << '/' << c.child;
  }
  os << ";tx=";
  first = true;
  for (const auto& [id, draining] : tx_draining_) {
    if (!draining) continue;
    if (!first) os << ',';
    first = false;
    os << id;
  }
  // Completion order only matters where compensation can observe it.
  os << ";lg=";
  first = true;
  for (const auto& [scope, log] : scope_logs_) {
    if (!index_->compensable_scopes.count(scope)) continue;
    if (!first) os << ';';
    first = false;
    os << scope << ":[";
    for (std::size_t i = 0; i < log.size(); ++i) {
      if (i) os << ',';
      os << log[i];
    }
    os << ']';
  }
  return os.str();
}

// --------------------------------------------------------------------------
// Scope helpers
// --------------------------------------------------------------------------

namespace {

// Scope of a marking position: owning scope of a flow, or a node's scope.
std::string position_scope(const NodeIndex& ix, const std::string& pos) {
  auto f = ix.flow_scope.find(pos);
  if (f != ix.flow_scope.end()) return f->second;
  auto n = ix.nodes.find(pos);
  if (n != ix.nodes.end()) return n->second.scope_id;
  return kTopScope;
}

// True when `scope` equals `host` or lies anywhere inside it.
bool scope_within(const NodeIndex& ix, std::string scope, const std::string& host) {
  while (true) {
    if (scope == host) return true;
    if (scope == kTopScope) return false;
    auto it = ix.nodes.find(scope);
    if (it == ix.nodes.end()) return false;
    scope = it->second.scope_id;
  }
}

bool position_within(const NodeIndex& ix, const std::string& pos,
                     const std::string& host) {
  return scope_within(ix, position_scope(ix, pos), host);
}

}  // namespace

// --------------------------------------------------------------------------
// Enumeration
// --------------------------------------------------------------------------

namespace {

// First enclosing transaction (including the node itself), or empty.
std::string enclosing_transaction(const NodeIndex& ix, const std::string& node_id) {
  std::string cur = node_id;
  while (true) {
    auto it = ix.nodes.find(cur);
    if (it == ix.nodes.end()) return "";
    const ActivityNode* a = it->second.node->activity();
    if (a && a->kind == ActivityKind::transaction) return cur;
    if (it->second.scope_id == kTopScope) return "";
    cur = it->second.scope_id;
  }
}

const EventNode* boundary_event_of(const NodeIndex& ix, const std::string& id) {
  auto it = ix.nodes.find(id);
  return it == ix.nodes.end() ? nullptr : it->second.node->event();
}

}  // namespace

ProcessInstance::EnabledSet ProcessInstance::enumerate(bool free_mode) const {
  EnabledSet out;
  if (status_ != InstanceStatus::running) return out;
  const NodeIndex& ix = *index_;

  auto push = [&out](Enabled e) {
    e.t.consumed = sorted_tokens(std::move(e.t.consumed));
    e.t.produced = sorted_tokens(std::move(e.t.produced));
    e.t.id = make_transition_id(e.t.kind, e.t.subject, e.t.consumed, e.t.produced);
    out.transitions.push_back(std::move(e));
  };
  auto fault = [&out](const std::string& slug, const std::string& subject,
                      const std::string& reason) {
    out.faults.push_back({"fault:" + slug + ":" + subject, subject, reason});
  };

  auto activity_active = [this](const std::string& id) {
    auto it = activity_states_.find(id);
    return it != activity_states_.end() &&
           (it->second.state == ActivityState::running ||
            it->second.state == ActivityState::waiting_external);
  };

  // Interior token positions of a host activity, host token included.
  auto interrupt_consumed = [&](const std::string& host) {
    std::vector<std::string> consumed;
    for (const auto& [pos, count] : marking_) {
      bool inside = pos == host || position_within(ix, pos, host);
      if (!inside) continue;
      for (std::int64_t i = 0; i < count; ++i) consumed.push_back(pos);
    }
    return consumed;
  };

  // Nearest active activity (starting at `origin`, walking outward) with a
  // matching error boundary.
  auto find_error_catcher =
      [&](const std::string& origin, const std::string& name)
      -> std::optional<std::pair<std::string, std::string>> {
    std::string cur = origin;
    while (!cur.empty()) {
      if (activity_active(cur)) {
        auto b = ix.boundary_events.find(cur);
        if (b != ix.boundary_events.end()) {
          for (const std::string& bid : b->second) {
            const EventNode* e = boundary_event_of(ix, bid);
            if (!e || e->trigger != EventTrigger::error) continue;
            if (e->error_name && *e->error_name != name) continue;
            return std::make_pair(bid, cur);
          }
        }
      }
      auto it = ix.nodes.find(cur);
      if (it == ix.nodes.end()) break;
      cur = it->second.scope_id;
    }
    return std::nullopt;
  };

  auto make_interrupt = [&](const std::string& boundary_id, const std::string& host) {
    Enabled e;
    e.t.kind = TransitionKind::boundary_interrupt;
    e.t.subject = boundary_id;
    e.t.consumed = interrupt_consumed(host);
    e.t.produced = flow_ids(ix.outgoing_of(boundary_id));
    e.interrupt_host = host;
    return e;
  };

  // Reverse-completion-order compensation items for a scope's direct
  // children; each handler at most once.
  auto compensations_of = [&](const std::string& scope) {
    std::vector<CompItem> items;
    auto log = scope_logs_.find(scope);
    if (log == scope_logs_.end()) return items;
    std::set<std::string> seen;
    for (auto it = log->second.rbegin(); it != log->second.rend(); ++it) {
      const std::string& child = *it;
      if (!seen.insert(child).second) continue;
      auto rt = activity_states_.find(child);
      if (rt == activity_states_.end() || rt->second.state != ActivityState::completed)
        continue;
      auto h = ix.compensation_handler.find(child);
      if (h == ix.compensation_handler.end()) continue;
      items.push_back(CompItem{scope, h->second, child});
    }
    return items;
  };

  auto make_tx_cancel_begin = [&](const std::string& tx) -> std::optional<Enabled> {
    std::string boundary;
    auto b = ix.boundary_events.find(tx);
    if (b != ix.boundary_events.end()) {
      for (const std::string& bid : b->second) {
        const EventNode* e = boundary_event_of(ix, bid);
        if (e && e->trigger == EventTrigger::cancel) {
          boundary = bid;
          break;
        }
      }
    }
    if (boundary.empty()) return std::nullopt;
    Enabled e;
    e.t.kind = TransitionKind::transaction_outcome;
    e.t.subject = tx;
    e.t.consumed = interrupt_consumed(tx);
    e.tx_cancel_begin = true;
    e.comp_enqueue = compensations_of(tx);
    return e;
  };

  // ---- compensation protocol preempts everything else -------------------
  if (!comp_queue_.empty()) {
    const CompItem& item = comp_queue_.front();
    Enabled e;
    e.t.kind = TransitionKind::compensation_run;
    e.t.subject = item.handler;
    e.comp_pop = true;
    push(std::move(e));
    return out;
  }

  // ---- internal signals ---------------------------------------------------
  for (std::size_t i = 0; i < signals_.size(); ++i) {
    const Signal& sig = signals_[i];
    if (sig.kind == Signal::Kind::error) {
      auto catcher = find_error_catcher(sig.scope, sig.name);
      if (!catcher) {
        fault("uncaughtError", sig.scope.empty() ? def_->id : sig.scope,
              "uncaught error '" + sig.name + "'");
        continue;
      }
      Enabled e = make_interrupt(catcher->first, catcher->second);
      e.signal_index = static_cast<int>(i);
      push(std::move(e));
    } else {
      if (sig.scope.empty()) {
        fault("cancelOutsideTransaction", def_->id, "cancel thrown outside a transaction");
        continue;
      }
      if (tx_draining_.count(sig.scope)) continue;  // already cancelling
      auto begin = make_tx_cancel_begin(sig.scope);
      if (!begin) {
        fault("noCancelBoundary", sig.scope,
              "transaction '" + sig.scope + "' cancelled without a cancel boundary event");
        continue;
      }
      begin->signal_index = static_cast<int>(i);
      push(std::move(*begin));
    }
  }

  // ---- external interrupts / boundary availability ------------------------
  if (free_mode) {
    for (const auto& [id, rt] : activity_states_) {
      if (rt.state != ActivityState::running &&
          rt.state != ActivityState::waiting_external)
        continue;
      auto b = ix.boundary_events.find(id);
      if (b == ix.boundary_events.end()) continue;
      for (const std::string& bid : b->second) {
        const EventNode* e = boundary_event_of(ix, bid);
        if (!e) continue;
        switch (e->trigger) {
          case EventTrigger::error:
          case EventTrigger::message:
          case EventTrigger::timer:
            push(make_interrupt(bid, id));
            break;
          case EventTrigger::cancel:
            if (ix.is_composite(id) && !tx_draining_.count(id)) {
              if (auto begin = make_tx_cancel_begin(id)) push(std::move(*begin));
            }
            break;
          default:
            break;
        }
      }
    }
  } else {
    for (std::size_t i = 0; i < pending_.size(); ++i) {
      const ExternalEvent& ev = pending_[i];
      if (ev.kind == ExternalEvent::Kind::raise_error) {
        if (!activity_active(ev.activity)) continue;
        auto catcher = find_error_catcher(ev.activity, ev.error_name);
        if (!catcher) {
          fault("uncaughtError", ev.activity,
                "uncaught error '" + ev.error_name + "' raised on '" + ev.activity + "'");
          continue;
        }
        Enabled e = make_interrupt(catcher->first, catcher->second);
        e.pending_index = static_cast<int>(i);
        push(std::move(e));
      } else if (ev.kind == ExternalEvent::Kind::cancel_transaction) {
        if (!activity_active(ev.transaction) || tx_draining_.count(ev.transaction))
          continue;
        auto begin = make_tx_cancel_begin(ev.transaction);
        if (!begin) {
          fault("noCancelBoundary", ev.transaction,
                "transaction '" + ev.transaction +
                    "' cancelled without a cancel boundary event");
          continue;
        }
        begin->pending_index = static_cast<int>(i);
        push(std::move(*begin));
      }
    }
    // message/timer boundary events on active activities
    for (const auto& [id, rt] : activity_states_) {
      if (rt.state != ActivityState::running &&
          rt.state != ActivityState::waiting_external)
        continue;
      auto b = ix.boundary_events.find(id);
      if (b == ix.boundary_events.end()) continue;
      for (const std::string& bid : b->second) {
        const EventNode* e = boundary_event_of(ix, bid);
        if (!e) continue;
        if (e->trigger == EventTrigger::message) {
          int idx = match_message_index(bid, *e);
          if (idx >= 0) {
            Enabled en = make_interrupt(bid, id);
            en.pending_index = idx;
            push(std::move(en));
          }
        } else if (e->trigger == EventTrigger::timer) {
          auto arm = timer_arm_.find(bid);
          if (arm != timer_arm_.end() && clock_ >= arm->second) {
            push(make_interrupt(bid, id));
          }
        }
      }
    }
  }

  // ---- draining transactions: emit the cancel path ------------------------
  for (const auto& [tx, draining] : tx_draining_) {
    if (!draining) continue;
    auto b = ix.boundary_events.find(tx);
    if (b == ix.boundary_events.end()) continue;
    for (const std::string& bid : b->second) {
      const EventNode* e = boundary_event_of(ix, bid);
      if (!e || e->trigger != EventTrigger::cancel) continue;
      Enabled en;
      en.t.kind = TransitionKind::event_catch;
      en.t.subject = bid;
      en.t.produced = flow_ids(ix.outgoing_of(bid));
      en.tx_cancel_finish = true;
      en.tx_of = tx;
      push(std::move(en));
      break;
    }
  }

  // ---- dormant start events ------------------------------------------------
  for (const auto& [id, entry] : ix.nodes) {
    if (entry.scope_id != kTopScope) continue;
    const EventNode* e = entry.node->event();
    if (!e || e->kind != EventKind::start || e->trigger == EventTrigger::none)
      continue;
    if (fired_starts_.count(id)) continue;
    Enabled en;
    en.t.kind = TransitionKind::fire_start;
    en.t.subject = id;
    en.t.produced = flow_ids(ix.outgoing_of(id));
    en.is_start_event = true;
    if (free_mode) {
      push(std::move(en));
      continue;
    }
    if (e->trigger == EventTrigger::message) {
      int idx = match_message_index(id, *e);
      if (idx >= 0) {
        en.pending_index = idx;
        en.data_update = pending_[idx].payload;
        push(std::move(en));
      }
    } else if (e->trigger == EventTrigger::timer) {
      auto arm = timer_arm_.find(id);
      if (arm != timer_arm_.end() && clock_ >= arm->second) push(std::move(en));
    }
  }

  // ---- marking scan ---------------------------------------------------------
  std::set<std::string> joins_done;

  auto split_production = [&](const std::string& gid, const GatewayNode& g,
                              bool* faulted) -> std::vector<std::vector<std::string>> {
    // Outgoing-flow selections for a gateway firing. Concrete mode yields one
    // selection; free mode yields every condition valuation's selection.
    std::vector<std::vector<std::string>> selections;
    const auto& outs = ix.outgoing_of(gid);
    *faulted = false;
    std::vector<const SequenceFlow*> conditional, always;
    const SequenceFlow* def_flow = nullptr;
    for (const SequenceFlow* f : outs) {
      if (g.default_flow && *g.default_flow == f->id) { def_flow = f; continue; }
      if (f->condition) conditional.push_back(f);
      else always.push_back(f);
    }
    auto eval_cond = [&](const SequenceFlow* f) {
      if (!f->condition || !f->condition->tree) return true;
      return value_as_bool(eval_expression(*f->condition->tree, case_data_),
                           "flow condition");
    };

    switch (g.kind) {
      case GatewayKind::exclusive_data: {
        if (!free_mode) {
          const SequenceFlow* chosen = nullptr;
          for (const SequenceFlow* f : outs) {
            if (def_flow == f) continue;
            if (eval_cond(f)) { chosen = f; break; }
          }
          if (!chosen) chosen = def_flow;
          if (!chosen) { *faulted = true; return selections; }
          selections.push_back({chosen->id});
        } else {
          // Each flow is selectable while every earlier flow carries a
          // condition that could have been false.
          bool blocked = false;
          for (const SequenceFlow* f : outs) {
            if (def_flow == f) continue;
            if (blocked) break;
            selections.push_back({f->id});
            if (!f->condition) blocked = true;
          }
          if (!blocked) {
            if (def_flow) selections.push_back({def_flow->id});
            else *faulted = true;  // fault outcome also reachable
          }
        }
        break;
      }
      case GatewayKind::inclusive:
      case GatewayKind::complex: {
        const bool has_default = g.kind == GatewayKind::inclusive && def_flow;
        if (!free_mode) {
          std::vector<std::string> sel;
          for (const SequenceFlow* f : always) sel.push_back(f->id);
          for (const SequenceFlow* f : conditional) {
            if (eval_cond(f)) sel.push_back(f->id);
          }
          if (sel.empty()) {
            if (has_default) sel.push_back(def_flow->id);
            else { *faulted = true; return selections; }
          }
          selections.push_back(std::move(sel));
        } else {
          const std::size_t n = conditional.size();
          for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
            std::vector<std::string> sel;
            for (const SequenceFlow* f : always) sel.push_back(f->id);
            for (std::size_t b = 0; b < n; ++b) {
              if (mask & (std::size_t{1} << b)) sel.push_back(conditional[b]->id);
            }
            if (sel.empty()) {
              if (has_default) sel.push_back(def_flow->id);
              else { *faulted = true; continue; }
            }
            selections.push_back(std::move(sel));
          }
        }
        break;
      }
      case GatewayKind::parallel: {
        selections.push_back(flow_ids(outs));
        break;
      }
      case GatewayKind::exclusive_event:
        break;  // handled by its own arming/catch machinery
    }
    // Keep flow declaration order inside each selection.
    return selections;
  };

  auto push_gateway = [&](const std::string& gid, const GatewayNode& g,
                          std::vector<std::string> consumed) {
    bool faulted = false;
    auto selections = split_production(gid, g, &faulted);
    TransitionKind kind = ix.incoming_of(gid).size() >= 2
                              ? TransitionKind::gateway_join
                              : TransitionKind::gateway_split;
    if (faulted) {
      fault("noBranch", gid, "no enabled branch at gateway '" + gid + "'");
    }
    for (auto& sel : selections) {
      Enabled e;
      e.t.kind = kind;
      e.t.subject = gid;
      e.t.consumed = consumed;
      e.t.produced = std::move(sel);
      push(std::move(e));
    }
  };

  for (const auto& [pos, count] : marking_) {
    (void)count;
    if (is_flow_position(ix, pos)) {
      const SequenceFlow& f = ix.flow_at(pos);
      const FlowNode& target = ix.node_at(f.target);

      if (const EventNode* e = target.event()) {
        if (e->kind == EventKind::intermediate && !e->attached_to) {
          bool ready = true;
          int pending_index = -1;
          VarMap payload;
          if (!free_mode && e->trigger == EventTrigger::message) {
            pending_index = match_message_index(target.id, *e);
            ready = pending_index >= 0;
            if (ready) payload = pending_[pending_index].payload;
          } else if (!free_mode && e->trigger == EventTrigger::timer) {
            auto arm = timer_arm_.find(target.id);
            ready = arm != timer_arm_.end() && clock_ >= arm->second;
          }
          if (ready) {
            Enabled en;
            en.t.kind = TransitionKind::event_catch;
            en.t.subject = target.id;
            en.t.consumed = {pos};
            en.t.produced = flow_ids(ix.outgoing_of(target.id));
            en.pending_index = pending_index;
            en.data_update = std::move(payload);
            push(std::move(en));
          }
        } else if (e->kind == EventKind::end) {
          Enabled en;
          en.t.kind = TransitionKind::process_end;
          en.t.subject = target.id;
          en.t.consumed = {pos};
          const std::string scope = ix.nodes.at(target.id).scope_id;
          switch (e->trigger) {
            case EventTrigger::terminate: {
              en.t.consumed.clear();
              for (const auto& [p, c] : marking_) {
                for (std::int64_t i = 0; i < c; ++i) en.t.consumed.push_back(p);
              }
              en.terminate_all = true;
              break;
            }
            case EventTrigger::error:
              en.raises = Signal{Signal::Kind::error, scope,
                                 e->error_name.value_or("")};
              break;
            case EventTrigger::cancel:
              en.raises = Signal{Signal::Kind::cancel,
                                 enclosing_transaction(ix, target.id), ""};
              break;
            case EventTrigger::compensation:
              en.comp_enqueue = compensations_of(scope);
              break;
            default:
              break;
          }
          push(std::move(en));
        }
        continue;
      }

      if (const ActivityNode* a = target.activity()) {
        if (a->markers.compensation) continue;  // handlers sit outside normal flow
        const std::string& aid = target.id;
        const auto& outs = flow_ids(ix.outgoing_of(aid));

        if (a->kind == ActivityKind::task && a->markers.multi_instance) {
          std::int64_t n = 0;
          if (free_mode) {
            for (const VariableDecl& v : def_->variables) {
              if (v.name == *a->multi_instance_count) {
                n = std::get<std::int64_t>(v.init);
              }
            }
          } else {
            auto it = case_data_.find(*a->multi_instance_count);
            if (it != case_data_.end()) {
              if (const std::int64_t* iv = std::get_if<std::int64_t>(&it->second))
                n = *iv;
            }
          }
          if (n <= 0) {
            fault("multiInstanceCount", aid,
                  "multi-instance count for '" + aid + "' is not positive");
            continue;
          }
          Enabled en;
          en.t.kind = TransitionKind::fire_start;
          en.t.subject = aid;
          en.t.consumed = {pos};
          en.t.produced.assign(static_cast<std::size_t>(n), aid);
          en.is_activation = true;
          en.activation_state = a->task_behavior == TaskBehavior::external
                                    ? ActivityState::waiting_external
                                    : ActivityState::running;
          en.mi_spawn = n;
          push(std::move(en));
          continue;
        }

        if (a->kind == ActivityKind::task &&
            a->task_behavior == TaskBehavior::automatic) {
          // One-transition completion; loops park the token on the node.
          enumerate_task_completion(out, free_mode, aid, *a, pos, -1, push);
          continue;
        }

        // External tasks and composites activate first.
        Enabled en;
        en.t.kind = TransitionKind::fire_start;
        en.t.subject = aid;
        en.t.consumed = {pos};
        en.t.produced = {aid};
        en.is_activation = true;
        if (a->kind == ActivityKind::task) {
          en.activation_state = ActivityState::waiting_external;
        } else {
          en.activation_state = ActivityState::running;
          if (a->body) {
            for (const FlowNode& n : a->body->nodes) {
              const EventNode* be = n.event();
              if (be && be->kind == EventKind::start &&
                  be->trigger == EventTrigger::none) {
                en.t.produced.push_back(n.id);
              }
            }
          }
        }
        push(std::move(en));
        continue;
      }

      const GatewayNode* g = target.gateway();
      if (g->kind == GatewayKind::exclusive_event) {
        Enabled en;
        en.t.kind = TransitionKind::gateway_split;
        en.t.subject = target.id;
        en.t.consumed = {pos};
        en.t.produced = {target.id};
        push(std::move(en));
        continue;
      }
      const bool join_like =
          ix.incoming_of(target.id).size() >= 2 &&
          (g->kind == GatewayKind::parallel || g->kind == GatewayKind::inclusive ||
           (g->kind == GatewayKind::complex && g->activation_expression));
      if (!join_like) {
        push_gateway(target.id, *g, {pos});
        continue;
      }
      if (!joins_done.insert(target.id).second) continue;
      const auto& ins = ix.incoming_of(target.id);
      if (g->kind == GatewayKind::parallel) {
        bool all = std::all_of(ins.begin(), ins.end(), [&](const SequenceFlow* in) {
          auto it = marking_.find(in->id);
          return it != marking_.end() && it->second > 0;
        });
        if (!all) continue;
        std::vector<std::string> consumed;
        for (const SequenceFlow* in : ins) consumed.push_back(in->id);
        push_gateway(target.id, *g, std::move(consumed));
      } else if (g->kind == GatewayKind::inclusive) {
        if (!or_join_ready(target.id)) continue;
        std::vector<std::string> consumed;
        for (const SequenceFlow* in : ins) {
          auto it = marking_.find(in->id);
          if (it != marking_.end() && it->second > 0) consumed.push_back(in->id);
        }
        push_gateway(target.id, *g, std::move(consumed));
      } else {
        // complex merge: activation expression over per-edge token counts;
        // fires by draining every incoming token.
        TokenCounts counts;
        for (const SequenceFlow* in : ins) {
          auto it = marking_.find(in->id);
          counts[in->id] = it == marking_.end() ? 0 : it->second;
        }
        bool enabled = false;
        const ExprSource& act = *g->activation_expression;
        if (act.tree) {
          try {
            enabled = value_as_bool(
                eval_expression(*act.tree, case_data_, &counts),
                "activation expression");
          } catch (const EvalError&) {
            // Data-dependent activation: explored as available.
            enabled = free_mode;
          }
        }
        if (!enabled) continue;
        std::vector<std::string> consumed;
        for (const SequenceFlow* in : ins) {
          auto it = marking_.find(in->id);
          if (it == marking_.end()) continue;
          for (std::int64_t i = 0; i < it->second; ++i) consumed.push_back(in->id);
        }
        push_gateway(target.id, *g, std::move(consumed));
      }
      continue;
    }

    // ---- node-resident tokens ----
    const FlowNode& node = ix.node_at(pos);
    if (const EventNode* e = node.event()) {
      if (e->kind == EventKind::start) {
        Enabled en;
        en.t.kind = TransitionKind::fire_start;
        en.t.subject = pos;
        en.t.consumed = {pos};
        en.t.produced = flow_ids(ix.outgoing_of(pos));
        en.is_start_event = true;
        push(std::move(en));
      }
      continue;
    }
    if (const GatewayNode* g = node.gateway();
        g && g->kind == GatewayKind::exclusive_event) {
      // Token parked at the event gateway: one catch per ready successor;
      // the shared token makes the catches mutually exclusive.
      for (const SequenceFlow* f : ix.outgoing_of(pos)) {
        const FlowNode& succ = ix.node_at(f->target);
        Enabled en;
        en.t.kind = TransitionKind::event_catch;
        en.t.subject = succ.id;
        en.t.consumed = {pos};
        en.t.produced = flow_ids(ix.outgoing_of(succ.id));
        if (const EventNode* se = succ.event()) {
          if (!free_mode && se->trigger == EventTrigger::message) {
            int idx = match_message_index(succ.id, *se);
            if (idx < 0) continue;
            en.pending_index = idx;
            en.data_update = pending_[idx].payload;
          } else if (!free_mode && se->trigger == EventTrigger::timer) {
            auto arm = timer_arm_.find(succ.id);
            if (arm == timer_arm_.end() || clock_ < arm->second) continue;
          }
          push(std::move(en));
        } else if (const ActivityNode* sa = succ.activity()) {
          // receive task: completes directly off the gateway token
          if (!free_mode) {
            int idx = match_complete_task_index(succ.id);
            if (idx < 0) continue;
            en.pending_index = idx;
            en.data_update = pending_[idx].assignments;
          }
          en.is_completion = true;
          (void)sa;
          push(std::move(en));
        }
      }
      continue;
    }
    if (const ActivityNode* a = node.activity()) {
      auto rt = activity_states_.find(pos);
      if (rt == activity_states_.end()) continue;
      if (a->kind == ActivityKind::task) {
        if (rt->second.state == ActivityState::waiting_external || free_mode ||
            a->task_behavior == TaskBehavior::automatic) {
          int idx = -1;
          VarMap update;
          if (!free_mode && a->task_behavior == TaskBehavior::external) {
            idx = match_complete_task_index(pos);
            if (idx < 0) continue;
            update = pending_[idx].assignments;
          }
          if (rt->second.mi_remaining > 0) {
            Enabled en;
            en.t.kind = TransitionKind::complete_task;
            en.t.subject = pos;
            en.t.consumed = {pos};
            en.pending_index = idx;
            en.data_update = std::move(update);
            en.mi_decrement = true;
            if (rt->second.mi_remaining == 1) {
              en.t.produced = flow_ids(ix.outgoing_of(pos));
              en.is_completion = true;
            }
            push(std::move(en));
          } else {
            enumerate_task_completion(out, free_mode, pos, *a, pos, idx, push);
            if (idx >= 0) {
              // attach the consumed event/assignments to the branches just made
              for (auto it = out.transitions.rbegin(); it != out.transitions.rend();
                   ++it) {
                if (it->t.subject != pos ||
                    it->t.kind != TransitionKind::complete_task)
                  break;
                it->pending_index = idx;
                it->data_update = update;
              }
            }
          }
        }
        continue;
      }
      // composite completion: interior fully drained and nothing pending
      if (rt->second.state != ActivityState::running) continue;
      bool interior_empty = true;
      for (const auto& [p, c] : marking_) {
        if (p != pos && c > 0 && position_within(ix, p, pos)) {
          interior_empty = false;
          break;
        }
      }
      if (!interior_empty) continue;
      bool blocked = false;
      for (const Signal& s : signals_) {
        if (!s.scope.empty() && scope_within(ix, s.scope, pos)) blocked = true;
      }
      for (const auto& [tx, d] : tx_draining_) {
        if (d && tx != pos && scope_within(ix, tx, pos)) blocked = true;
      }
      if (tx_draining_.count(pos)) blocked = true;
      if (blocked) continue;
      enumerate_composite_completion(out, free_mode, pos, *a, push);
    }
  }

  // Deterministic order: subject, kind ordinal, then full id.
  std::sort(out.transitions.begin(), out.transitions.end(),
            [](const Enabled& a, const Enabled& b) {
              if (a.t.subject != b.t.subject) return a.t.subject < b.t.subject;
              if (a.t.kind != b.t.kind) return a.t.kind < b.t.kind;
              return a.t.id < b.t.id;
            });
  out.transitions.erase(
      std::unique(out.transitions.begin(), out.transitions.end(),
                  [](const Enabled& a, const Enabled& b) { return a.t.id == b.t.id; }),
      out.transitions.end());
  std::sort(out.faults.begin(), out.faults.end(),
            [](const EnabledSet::Fault& a, const EnabledSet::Fault& b) {
              return a.key < b.key;
            });
  out.faults.erase(std::unique(out.faults.begin(), out.faults.end(),
                               [](const EnabledSet::Fault& a,
                                  const EnabledSet::Fault& b) {
                                 return a.key == b.key;
                               }),
                   out.faults.end());
  return out;
}

// --------------------------------------------------------------------------
// Completion helpers (loop semantics shared by tasks and composites)
// --------------------------------------------------------------------------

// Post-test loop: run at least once; re-enter while the condition holds and
// fewer than loopMax iterations have completed.
static constexpr std::int64_t kDefaultLoopMax = 1000;

void ProcessInstance::enumerate_task_completion(
    EnabledSet& out, bool free_mode, const std::string& aid,
    const ActivityNode& a, const std::string& consumed_pos, int pending_index,
    const std::function<void(Enabled)>& push) const {
  (void)out;
  const NodeIndex& ix = *index_;
  auto outs = flow_ids(ix.outgoing_of(aid));
  std::int64_t done = 0;
  if (auto it = activity_states_.find(aid); it != activity_states_.end()) {
    done = it->second.loop_count;
  }
  const std::int64_t max = a.loop_max.value_or(kDefaultLoopMax);

  auto make = [&](bool again) {
    Enabled en;
    en.t.kind = TransitionKind::complete_task;
    en.t.subject = aid;
    en.t.consumed = {consumed_pos};
    en.pending_index = pending_index;
    if (again) {
      en.t.produced = {aid};
      en.loop_again = true;
    } else {
      en.t.produced = outs;
      en.is_completion = true;
    }
    return en;
  };

  if (!a.markers.loop) {
    push(make(false));
    return;
  }
  const bool can_repeat = done + 1 < max;
  if (free_mode && a.loop_condition) {
    if (can_repeat) push(make(true));
    push(make(false));
    return;
  }
  bool repeat = can_repeat;
  if (repeat && a.loop_condition && a.loop_condition->tree) {
    repeat = value_as_bool(eval_expression(*a.loop_condition->tree, case_data_),
                           "loop condition");
  }
  push(make(repeat));
}

void ProcessInstance::enumerate_composite_completion(
    EnabledSet& out, bool free_mode, const std::string& aid,
    const ActivityNode& a, const std::function<void(Enabled)>& push) const {
  (void)out;
  const NodeIndex& ix = *index_;
  const TransitionKind kind = a.kind == ActivityKind::transaction
                                  ? TransitionKind::transaction_outcome
                                  : TransitionKind::complete_task;
  std::int64_t done = 0;
  if (auto it = activity_states_.find(aid); it != activity_states_.end()) {
    done = it->second.loop_count;
  }
  const std::int64_t max = a.loop_max.value_or(kDefaultLoopMax);

  auto body_starts = [&] {
    std::vector<std::string> starts;
    if (a.body) {
      for (const FlowNode& n : a.body->nodes) {
        const EventNode* e = n.event();
        if (e && e->kind == EventKind::start && e->trigger == EventTrigger::none) {
          starts.push_back(n.id);
        }
      }
    }
    return starts;
  };

  auto make = [&](bool again) {
    Enabled en;
    en.t.kind = kind;
    en.t.subject = aid;
    if (again) {
      en.t.produced = body_starts();
      en.loop_again = true;
    } else {
      en.t.consumed = {aid};
      en.t.produced = flow_ids(ix.outgoing_of(aid));
      en.is_completion = true;
    }
    return en;
  };

  if (!a.markers.loop) {
    push(make(false));
    return;
  }
  const bool can_repeat = done + 1 < max;
  if (free_mode && a.loop_condition) {
    if (can_repeat) push(make(true));
    push(make(false));
    return;
  }
  bool repeat = can_repeat;
  if (repeat && a.loop_condition && a.loop_condition->tree) {
    repeat = value_as_bool(eval_expression(*a.loop_condition->tree, case_data_),
                           "loop condition");
  }
  push(make(repeat));
}

// --------------------------------------------------------------------------
// Pending-event matching
// --------------------------------------------------------------------------

int ProcessInstance::match_message_index(const std::string& node_id,
                                         const EventNode& e) const {
  auto entry = index_->nodes.find(node_id);
  const std::string pool =
      entry == index_->nodes.end() ? "" : entry->second.pool_id;
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    const ExternalEvent& ev = pending_[i];
    if (ev.kind != ExternalEvent::Kind::message) continue;
    if (ev.target == node_id) return static_cast<int>(i);
    if (ev.target == pool && (!e.message_name || *e.message_name == ev.name)) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

int ProcessInstance::match_complete_task_index(const std::string& task_id) const {
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    if (pending_[i].kind == ExternalEvent::Kind::complete_task &&
        pending_[i].task == task_id) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

// --------------------------------------------------------------------------
// OR-join enabling rule
// --------------------------------------------------------------------------

bool ProcessInstance::or_join_ready(const std::string& gateway_id) const {
  const NodeIndex& ix = *index_;
  const auto& ins = ix.incoming_of(gateway_id);
  std::set<std::string> incoming_ids, marked, unmarked;
  for (const SequenceFlow* f : ins) {
    incoming_ids.insert(f->id);
    auto it = marking_.find(f->id);
    if (it != marking_.end() && it->second > 0) marked.insert(f->id);
    else unmarked.insert(f->id);
  }
  if (marked.empty()) return false;
  if (unmarked.empty()) return true;

  // Backward-reachability over-approximation: can any token outside this
  // join's incoming flows still deliver a token to an unmarked input? The
  // walk ignores conditions, may enter activity bodies, may leave through
  // boundary events, and never passes through the join itself.
  std::vector<std::string> frontier;
  std::set<std::string> visited;
  auto enqueue = [&](const std::string& pos) {
    if (visited.insert(pos).second) frontier.push_back(pos);
  };
  for (const auto& [pos, count] : marking_) {
    if (count > 0 && !incoming_ids.count(pos)) enqueue(pos);
  }
  for (const auto& [id, entry] : ix.nodes) {
    if (entry.scope_id != kTopScope) continue;
    const EventNode* e = entry.node->event();
    if (e && e->kind == EventKind::start && e->trigger != EventTrigger::none &&
        !fired_starts_.count(id)) {
      enqueue(id);  // dormant start: may still produce tokens
    }
  }

  while (!frontier.empty()) {
    std::string pos = frontier.back();
    frontier.pop_back();
    if (unmarked.count(pos)) return false;
    const std::string scope = position_scope(ix, pos);
    if (scope != kTopScope) enqueue(scope);  // interior progress resumes the owner
    if (is_flow_position(ix, pos)) {
      const SequenceFlow& f = ix.flow_at(pos);
      if (f.target != gateway_id) enqueue(f.target);
      continue;
    }
    auto entry = ix.nodes.find(pos);
    if (entry == ix.nodes.end()) continue;
    for (const SequenceFlow* f : ix.outgoing_of(pos)) enqueue(f->id);
    if (const ActivityNode* a = entry->second.node->activity()) {
      auto b = ix.boundary_events.find(pos);
      if (b != ix.boundary_events.end()) {
        for (const std::string& bid : b->second) enqueue(bid);
      }
      if (a->body) {
        for (const FlowNode& n : a->body->nodes) {
          const EventNode* e = n.event();
          if (e && e->kind == EventKind::start) enqueue(n.id);
        }
      }
    }
  }
  return true;
}

bool ProcessInstance::or_join_enabled(const std::string& gateway_id) const {
  const FlowNode& node = index_->node_at(gateway_id);
  const GatewayNode* g = node.gateway();
  if (!g || g->kind != GatewayKind::inclusive ||
      index_->incoming_of(gateway_id).size() < 2) {
    throw ModelError("'" + gateway_id + "' is not an inclusive join gateway");
  }
  return or_join_ready(gateway_id);
}

// --------------------------------------------------------------------------
// Applying a transition
// --------------------------------------------------------------------------

void ProcessInstance::apply(const Enabled& e) {
  const NodeIndex& ix = *index_;

  for (const std::string& pos : e.t.consumed) {
    auto it = marking_.find(pos);
    if (it == marking_.end() || it->second <= 0) {
      throw ModelError("token conservation violated: consuming absent token at '" +
                       pos + "'");
    }
    if (--it->second == 0) marking_.erase(it);
  }
  for (const std::string& pos : e.t.produced) {
    ++marking_[pos];
    // Arm timers on token arrival.
    if (is_flow_position(ix, pos)) {
      const SequenceFlow& f = ix.flow_at(pos);
      const FlowNode& target = ix.node_at(f.target);
      if (const EventNode* te = target.event();
          te && te->trigger == EventTrigger::timer && !te->attached_to) {
        timer_arm_[f.target] = clock_ + te->timer_ticks.value_or(1);
      }
      if (const GatewayNode* tg = target.gateway();
          tg && tg->kind == GatewayKind::exclusive_event) {
        for (const SequenceFlow* sf : ix.outgoing_of(f.target)) {
          const FlowNode& succ = ix.node_at(sf->target);
          const EventNode* se = succ.event();
          if (se && se->trigger == EventTrigger::timer) {
            timer_arm_[succ.id] = clock_ + se->timer_ticks.value_or(1);
          }
        }
      }
    }
  }

  if (e.pending_index >= 0) {
    pending_.erase(pending_.begin() + e.pending_index);
  }
  if (e.signal_index >= 0) {
    signals_.erase(signals_.begin() + e.signal_index);
  }
  for (const auto& [name, value] : e.data_update) {
    case_data_[name] = value;
  }

  if (e.is_start_event) fired_starts_.insert(e.t.subject);

  if (e.is_activation) {
    ActivityRuntime rt;
    rt.state = e.activation_state;
    rt.mi_remaining = e.mi_spawn;
    activity_states_[e.t.subject] = rt;
    auto b = ix.boundary_events.find(e.t.subject);
    if (b != ix.boundary_events.end()) {
      for (const std::string& bid : b->second) {
        const EventNode* be = boundary_event_of(ix, bid);
        if (be && be->trigger == EventTrigger::timer) {
          timer_arm_[bid] = clock_ + be->timer_ticks.value_or(1);
        }
      }
    }
  }

  if (e.loop_again) {
    auto& rt = activity_states_[e.t.subject];
    ++rt.loop_count;
  }
  if (e.mi_decrement) {
    auto& rt = activity_states_[e.t.subject];
    if (rt.mi_remaining > 0) --rt.mi_remaining;
  }

  if (e.is_completion) {
    auto& rt = activity_states_[e.t.subject];
    ++rt.loop_count;
    rt.state = ActivityState::completed;
    completion_log_.emplace_back(e.t.subject, next_seq_++);
    const std::string scope = ix.nodes.at(e.t.subject).scope_id;
    scope_logs_[scope].push_back(e.t.subject);
    auto b = ix.boundary_events.find(e.t.subject);
    if (b != ix.boundary_events.end()) {
      for (const std::string& bid : b->second) timer_arm_.erase(bid);
    }
  }

  if (e.comp_pop) {
    CompItem item = comp_queue_.front();
    comp_queue_.pop_front();
    activity_states_[item.child].state = ActivityState::compensated;
    auto& hrt = activity_states_[item.handler];
    hrt.state = ActivityState::completed;
  }
  for (const CompItem& item : e.comp_enqueue) comp_queue_.push_back(item);

  auto erase_under = [&](const std::string& host) {
    for (auto it = activity_states_.begin(); it != activity_states_.end();) {
      const bool inside =
          it->first == host || position_within(ix, it->first, host);
      const bool live = it->second.state == ActivityState::running ||
                        it->second.state == ActivityState::waiting_external;
      if (inside && live) it = activity_states_.erase(it);
      else ++it;
    }
    for (auto it = signals_.begin(); it != signals_.end();) {
      if (!it->scope.empty() && scope_within(ix, it->scope, host)) {
        it = signals_.erase(it);
      } else {
        ++it;
      }
    }
    for (auto it = tx_draining_.begin(); it != tx_draining_.end();) {
      if (it->first != host && scope_within(ix, it->first, host)) {
        it = tx_draining_.erase(it);
      } else {
        ++it;
      }
    }
    auto b = ix.boundary_events.find(host);
    if (b != ix.boundary_events.end()) {
      for (const std::string& bid : b->second) timer_arm_.erase(bid);
    }
  };

  if (!e.interrupt_host.empty()) erase_under(e.interrupt_host);

  if (e.tx_cancel_begin) {
    erase_under(e.t.subject);
    tx_draining_[e.t.subject] = true;
    // Further cancels of the same transaction are moot.
    for (auto it = signals_.begin(); it != signals_.end();) {
      if (it->kind == Signal::Kind::cancel && it->scope == e.t.subject) {
        it = signals_.erase(it);
      } else {
        ++it;
      }
    }
  }
  if (e.tx_cancel_finish) {
    tx_draining_.erase(e.tx_of);
    activity_states_[e.tx_of].state = ActivityState::compensated;
  }

  if (e.raises) signals_.push_back(*e.raises);

  if (e.terminate_all) {
    marking_.clear();
    pending_.clear();
    signals_.clear();
    comp_queue_.clear();
    tx_draining_.clear();
    timer_arm_.clear();
    status_ = InstanceStatus::terminated;
    return;
  }
  settle_status();
}

void ProcessInstance::settle_status() {
  if (status_ != InstanceStatus::running) return;
  if (marking_.empty() && comp_queue_.empty() && signals_.empty() &&
      tx_draining_.empty()) {
    status_ = InstanceStatus::completed;
  }
}

// --------------------------------------------------------------------------
// Public stepping API
// --------------------------------------------------------------------------

std::vector<Transition> ProcessInstance::enabled_transitions() const {
  EnabledSet es = enumerate(false);
  std::vector<Transition> out;
  out.reserve(es.transitions.size());
  for (const Enabled& e : es.transitions) out.push_back(e.t);
  return out;
}

StepResult ProcessInstance::step(const std::optional<std::string>& choice) {
  StepResult result;
  if (status_ != InstanceStatus::running) {
    result.outcome = StepResult::Outcome::quiescent;
    result.reason = "instance is " + std::string(to_text(status_));
    return result;
  }
  EnabledSet es;
  try {
    es = enumerate(false);
  } catch (const EvalError& e) {
    status_ = InstanceStatus::failed;
    result.outcome = StepResult::Outcome::faulted;
    result.reason = e.what();
    return result;
  }
  if (!es.faults.empty()) {
    status_ = InstanceStatus::failed;
    result.outcome = StepResult::Outcome::faulted;
    result.reason = es.faults.front().reason;
    return result;
  }
  const Enabled* chosen = nullptr;
  if (choice) {
    for (const Enabled& e : es.transitions) {
      if (e.t.id == *choice) {
        chosen = &e;
        break;
      }
    }
    if (!chosen) throw ModelError("transition '" + *choice + "' is not enabled");
  } else if (!es.transitions.empty()) {
    chosen = &es.transitions.front();
  }
  if (!chosen) {
    result.outcome = StepResult::Outcome::quiescent;
    return result;
  }
  Transition fired = chosen->t;
  apply(*chosen);
  result.outcome = StepResult::Outcome::fired;
  result.fired = std::move(fired);
  return result;
}

void ProcessInstance::inject_event(const ExternalEvent& event) {
  if (status_ != InstanceStatus::running) {
    throw ModelError("cannot inject into an instance that is " +
                     std::string(to_text(status_)));
  }
  const NodeIndex& ix = *index_;
  auto require_var = [&](const VarMap& values, const char* what) {
    for (const auto& [name, value] : values) {
      auto it = case_data_.find(name);
      if (it == case_data_.end()) {
        throw ModelError(std::string(what) + " sets undeclared variable '" + name + "'");
      }
      if (it->second.index() != value.index()) {
        throw ModelError(std::string(what) + " type mismatch for variable '" + name + "'");
      }
    }
  };
  switch (event.kind) {
    case ExternalEvent::Kind::message: {
      bool pool = std::any_of(def_->pools.begin(), def_->pools.end(),
                              [&](const Pool& p) { return p.id == event.target; });
      if (!pool && !ix.nodes.count(event.target)) {
        throw ModelError("unknown message target '" + event.target + "'");
      }
      require_var(event.payload, "message payload");
      pending_.push_back(event);
      break;
    }
    case ExternalEvent::Kind::advance_time:
      if (event.ticks < 1) throw ModelError("advanceTime ticks must be >= 1");
      clock_ += event.ticks;
      break;
    case ExternalEvent::Kind::raise_error: {
      auto it = ix.nodes.find(event.activity);
      if (it == ix.nodes.end() || !it->second.node->activity()) {
        throw ModelError("unknown activity '" + event.activity + "'");
      }
      pending_.push_back(event);
      break;
    }
    case ExternalEvent::Kind::cancel_transaction: {
      auto it = ix.nodes.find(event.transaction);
      const ActivityNode* a =
          it == ix.nodes.end() ? nullptr : it->second.node->activity();
      if (!a || a->kind != ActivityKind::transaction) {
        throw ModelError("unknown transaction '" + event.transaction + "'");
      }
      pending_.push_back(event);
      break;
    }
    case ExternalEvent::Kind::complete_task: {
      auto it = ix.nodes.find(event.task);
      const ActivityNode* a =
          it == ix.nodes.end() ? nullptr : it->second.node->activity();
      if (!a || a->kind != ActivityKind::task) {
        throw ModelError("unknown task '" + event.task + "'");
      }
      require_var(event.assignments, "completion assignment");
      pending_.push_back(event);
      break;
    }
  }
}

std::vector<std::string> ProcessInstance::compensate_scope(const std::string& scope_id) {
  if (!index_->is_composite(scope_id)) {
    throw ModelError("'" + scope_id + "' is not a sub-process or transaction");
  }
  // Same construction the cancel path uses.
  std::vector<std::string> handlers;
  auto log = scope_logs_.find(scope_id);
  if (log == scope_logs_.end()) return handlers;
  std::set<std::string> seen;
  for (auto it = log->second.rbegin(); it != log->second.rend(); ++it) {
    if (!seen.insert(*it).second) continue;
    auto rt = activity_states_.find(*it);
    if (rt == activity_states_.end() || rt->second.state != ActivityState::completed)
      continue;
    auto h = index_->compensation_handler.find(*it);
    if (h == index_->compensation_handler.end()) continue;
    comp_queue_.push_back(CompItem{scope_id, h->second, *it});
    handlers.push_back(h->second);
  }
  return handlers;
}

std::vector<SuccessorBranch> ProcessInstance::successor_branches(
    bool free_conditions) const {
  std::vector<SuccessorBranch> out;
  if (status_ != InstanceStatus::running) return out;
  EnabledSet es = enumerate(free_conditions);
  out.reserve(es.transitions.size() + es.faults.size());
  for (const Enabled& e : es.transitions) {
    SuccessorBranch b;
    b.key = e.t.id;
    b.transition = e.t;
    b.next = *this;
    b.next.apply(e);
    out.push_back(std::move(b));
  }
  for (const EnabledSet::Fault& f : es.faults) {
    SuccessorBranch b;
    b.is_fault = true;
    b.key = f.key;
    b.next = *this;
    b.next.status_ = InstanceStatus::failed;
    out.push_back(std::move(b));
  }
  return out;
}

// --------------------------------------------------------------------------
// Scripted runs
// --------------------------------------------------------------------------

Trace run(std::shared_ptr<const ProcessDefinition> def, const VarMap& initial_data,
          const std::vector<ScriptEntry>& script, const RunLimits& limits) {
  Trace trace;
  trace.definition_id = def->id;
  ProcessInstance inst = ProcessInstance::instantiate(std::move(def), initial_data);

  std::size_t cursor = 0;
  std::size_t steps = 0;
  while (true) {
    while (cursor < script.size() && script[cursor].after <= steps) {
      inst.inject_event(script[cursor].event);
      ++cursor;
    }
    if (steps >= limits.max_steps) {
      trace.verdict = "budget exceeded";
      break;
    }
    StepResult r = inst.step();
    if (r.outcome == StepResult::Outcome::fired) {
      trace.steps.push_back(
          TraceStep{steps, *r.fired, inst.clock(), inst.data_hash()});
      ++steps;
      if (inst.status() == InstanceStatus::completed) {
        trace.verdict = "completed";
        break;
      }
      if (inst.status() == InstanceStatus::terminated) {
        trace.verdict = "terminated";
        break;
      }
      continue;
    }
    if (r.outcome == StepResult::Outcome::faulted) {
      trace.verdict = "faulted: " + r.reason;
      break;
    }
    trace.verdict = "quiescent";
    break;
  }
  return trace;
}

// --------------------------------------------------------------------------
// JSON-lines wire formats
// --------------------------------------------------------------------------

namespace {

Json var_map_json(const VarMap& m) {
  Json j = Json::object();
  for (const auto& [name, value] : m) {
    if (const bool* b = std::get_if<bool>(&value)) j[name] = *b;
    else j[name] = std::get<std::int64_t>(value);
  }
  return j;
}

VarMap var_map_from_json(const Json& j, int line) {
  VarMap out;
  if (!j.is_object()) {
    throw ParseError{line, 1, "object of variable assignments", std::string(j.type_name())};
  }
  for (const auto& [name, value] : j.items()) {
    if (value.is_boolean()) out[name] = value.get<bool>();
    else if (value.is_number_integer()) out[name] = value.get<std::int64_t>();
    else throw ParseError{line, 1, "bool or int value for '" + name + "'",
                          std::string(value.type_name())};
  }
  return out;
}

Json event_json(const ExternalEvent& e) {
  Json j;
  switch (e.kind) {
    case ExternalEvent::Kind::message:
      j["kind"] = "message";
      j["name"] = e.name;
      j["target"] = e.target;
      j["payload"] = var_map_json(e.payload);
      break;
    case ExternalEvent::Kind::advance_time:
      j["kind"] = "advanceTime";
      j["ticks"] = e.ticks;
      break;
    case ExternalEvent::Kind::raise_error:
      j["kind"] = "raiseError";
      j["activity"] = e.activity;
      j["error"] = e.error_name;
      break;
    case ExternalEvent::Kind::cancel_transaction:
      j["kind"] = "cancelTransaction";
      j["transaction"] = e.transaction;
      break;
    case ExternalEvent::Kind::complete_task:
      j["kind"] = "completeTask";
      j["task"] = e.task;
      j["assign"] = var_map_json(e.assignments);
      break;
  }
  return j;
}

ExternalEvent event_from_json(const Json& j, int line) {
  if (!j.is_object()) {
    throw ParseError{line, 1, "event object", std::string(j.type_name())};
  }
  auto text = [&](const char* field) -> std::string {
    auto it = j.find(field);
    if (it == j.end() || !it->is_string()) {
      throw ParseError{line, 1, std::string("string field '") + field + "'",
                       it == j.end() ? "missing field" : std::string(it->type_name())};
    }
    return it->get<std::string>();
  };
  const std::string kind = text("kind");
  if (kind == "message") {
    ExternalEvent e = message_event(text("name"), text("target"));
    if (j.contains("payload")) e.payload = var_map_from_json(j.at("payload"), line);
    return e;
  }
  if (kind == "advanceTime") {
    auto it = j.find("ticks");
    if (it == j.end() || !it->is_number_integer()) {
      throw ParseError{line, 1, "integer field 'ticks'", "missing or non-integer"};
    }
    return advance_time_event(it->get<std::int64_t>());
  }
  if (kind == "raiseError") return raise_error_event(text("activity"), text("error"));
  if (kind == "cancelTransaction") return cancel_transaction_event(text("transaction"));
  if (kind == "completeTask") {
    ExternalEvent e = complete_task_event(text("task"));
    if (j.contains("assign")) e.assignments = var_map_from_json(j.at("assign"), line);
    return e;
  }
  throw ParseError{line, 1, "event kind", "'" + kind + "'"};
}

}  // namespace

std::string trace_to_jsonl(const Trace& trace) {
  std::string out;
  for (const TraceStep& s : trace.steps) {
    Json j;
    j["step"] = s.step;
    j["kind"] = std::string(to_text(s.transition.kind));
    j["subject"] = s.transition.subject;
    j["consumed"] = s.transition.consumed;
    j["produced"] = s.transition.produced;
    j["clock"] = s.clock;
    j["dataHash"] = s.data_hash;
    out += j.dump();
    out += '\n';
  }
  Json tail;
  tail["verdict"] = trace.verdict;
  tail["steps"] = trace.steps.size();
  tail["definition"] = trace.definition_id;
  out += tail.dump();
  out += '\n';
  return out;
}

namespace {

std::vector<std::string> string_list(const Json& j, int line, const char* field) {
  if (!j.is_array()) {
    throw ParseError{line, 1, std::string("array field '") + field + "'",
                     std::string(j.type_name())};
  }
  std::vector<std::string> out;
  for (const Json& v : j) {
    if (!v.is_string()) {
      throw ParseError{line, 1, std::string("strings in '") + field + "'",
                       std::string(v.type_name())};
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

std::variant<Trace, ParseError> trace_from_jsonl(const std::string& text) {
  Trace trace;
  std::istringstream in(text);
  std::string linebuf;
  int lineno = 0;
  try {
    while (std::getline(in, linebuf)) {
      ++lineno;
      if (linebuf.empty()) continue;
      Json j;
      try {
        j = Json::parse(linebuf);
      } catch (const nlohmann::json::parse_error& err) {
        return ParseError{lineno, 1, "well-formed JSON line", err.what()};
      }
      if (j.contains("verdict")) {
        trace.verdict = j.at("verdict").get<std::string>();
        if (j.contains("definition")) {
          trace.definition_id = j.at("definition").get<std::string>();
        }
        continue;
      }
      TraceStep s;
      if (!j.contains("step") || !j.at("step").is_number_integer()) {
        return ParseError{lineno, 1, "integer field 'step'", "missing"};
      }
      s.step = j.at("step").get<std::size_t>();
      auto kind = transition_kind_from(j.at("kind").get<std::string>());
      if (!kind) {
        return ParseError{lineno, 1, "transition kind", j.at("kind").dump()};
      }
      s.transition.kind = *kind;
      s.transition.subject = j.at("subject").get<std::string>();
      s.transition.consumed = string_list(j.at("consumed"), lineno, "consumed");
      s.transition.produced = string_list(j.at("produced"), lineno, "produced");
      s.clock = j.at("clock").get<std::int64_t>();
      s.data_hash = j.at("dataHash").get<std::string>();
      s.transition.id = make_transition_id(s.transition.kind, s.transition.subject,
                                           s.transition.consumed, s.transition.produced);
      trace.steps.push_back(std::move(s));
    }
  } catch (const ParseError& e) {
    return e;
  } catch (const nlohmann::json::exception& e) {
    return ParseError{lineno, 1, "trace record fields", e.what()};
  }
  return trace;
}

std::string script_to_jsonl(const std::vector<ScriptEntry>& script) {
  std::string out;
  for (const ScriptEntry& s : script) {
    Json j;
    j["after"] = s.after;
    j["event"] = event_json(s.event);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::variant<std::vector<ScriptEntry>, ParseError> script_from_jsonl(
    const std::string& text) {
  std::vector<ScriptEntry> script;
  std::istringstream in(text);
  std::string linebuf;
  int lineno = 0;
  try {
    while (std::getline(in, linebuf)) {
      ++lineno;
      if (linebuf.empty()) continue;
      Json j;
      try {
        j = Json::parse(linebuf);
      } catch (const nlohmann::json::parse_error& err) {
        return ParseError{lineno, 1, "well-formed JSON line", err.what()};
      }
      ScriptEntry entry;
      auto it = j.find("after");
      if (it == j.end() || !it->is_number_integer()) {
        return ParseError{lineno, 1, "integer field 'after'", "missing or non-integer"};
      }
      entry.after = it->get<std::size_t>();
      auto ev = j.find("event");
      if (ev == j.end()) {
        return ParseError{lineno, 1, "field 'event'", "missing"};
      }
      entry.event = event_from_json(*ev, lineno);
      script.push_back(std::move(entry));
    }
  } catch (const ParseError& e) {
    return e;
  }
  return script;
}

}  // namespace bpd
