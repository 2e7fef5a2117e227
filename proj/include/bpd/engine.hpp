// Deterministic token-game interpreter: gateway split/join semantics,
// event-driven routing, loops and multi-instance tasks, boundary-event
// interruption, and transaction/compensation handling over a process
// instance. A ProcessInstance is mutated by one caller at a time; distinct
// instances are independent.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <set>

#include "bpd/model.hpp"

namespace bpd {

// --------------------------------------------------------------------------
// Step records
// --------------------------------------------------------------------------

enum class TransitionKind {
  fire_start,
  complete_task,
  gateway_split,
  gateway_join,
  event_catch,
  boundary_interrupt,
  transaction_outcome,
  compensation_run,
  process_end,
};

std::string_view to_text(TransitionKind k);
std::optional<TransitionKind> transition_kind_from(std::string_view s);

struct Transition {
  std::string id;  // "<kind>:<subject>:<consumed...>><produced...>"
  TransitionKind kind = TransitionKind::fire_start;
  std::string subject;
  std::vector<std::string> consumed;  // sorted, one entry per token
  std::vector<std::string> produced;
};

std::string make_transition_id(TransitionKind kind, const std::string& subject,
                               const std::vector<std::string>& consumed,
                               const std::vector<std::string>& produced);

struct TraceStep {
  std::size_t step = 0;
  Transition transition;
  std::int64_t clock = 0;
  std::string data_hash;  // FNV-1a 64 over the canonical case-data form
};

struct Trace {
  std::string definition_id;
  std::vector<TraceStep> steps;
  std::string verdict;  // completed | terminated | quiescent | budget exceeded | faulted: <reason>
};

// --------------------------------------------------------------------------
// External stimuli
// --------------------------------------------------------------------------

struct ExternalEvent {
  enum class Kind { message, advance_time, raise_error, cancel_transaction, complete_task };
  Kind kind = Kind::message;

  std::string name;      // message name
  std::string target;    // message target: pool or node id
  VarMap payload;        // message payload (merged into case data on catch)

  std::int64_t ticks = 0;  // advance_time

  std::string activity;    // raise_error target
  std::string error_name;  // raise_error

  std::string transaction;  // cancel_transaction

  std::string task;    // complete_task target
  VarMap assignments;  // complete_task result assignments
};

ExternalEvent message_event(std::string name, std::string target, VarMap payload = {});
ExternalEvent advance_time_event(std::int64_t ticks);
ExternalEvent raise_error_event(std::string activity, std::string error_name);
ExternalEvent cancel_transaction_event(std::string transaction);
ExternalEvent complete_task_event(std::string task, VarMap assignments = {});

// --------------------------------------------------------------------------
// Instance
// --------------------------------------------------------------------------

enum class InstanceStatus { running, completed, terminated, failed };
enum class ActivityState { running, waiting_external, completed, compensated };

std::string_view to_text(InstanceStatus s);
std::string_view to_text(ActivityState s);

struct ActivityRuntime {
  ActivityState state = ActivityState::running;
  std::int64_t loop_count = 0;    // completed iterations
  std::int64_t mi_remaining = 0;  // outstanding multi-instance completions
};

struct StepResult {
  enum class Outcome { fired, quiescent, faulted };
  Outcome outcome = Outcome::quiescent;
  std::optional<Transition> fired;
  std::string reason;  // set when faulted
};

struct SuccessorBranch;

using Marking = std::map<std::string, std::int64_t>;  // position -> token count

class ProcessInstance {
 public:
  // Refuses (ModelError citing the first diagnostic) when validation reports
  // any error. Tokens land on every none-triggered top-level start event;
  // message/timer starts stay dormant until their event.
  static ProcessInstance instantiate(std::shared_ptr<const ProcessDefinition> def,
                                     const VarMap& initial_data = {});

  // Enabled transitions in deterministic order (subject, kind, id). Faults
  // such as "no enabled branch" surface through step(), not here.
  std::vector<Transition> enabled_transitions() const;

  // Fires `choice` if given (ModelError when not enabled), else the first
  // enabled transition. Quiescent when nothing is enabled.
  StepResult step(const std::optional<std::string>& choice = std::nullopt);

  // Queues the event; advance_time applies immediately to the logical clock.
  // Throws ModelError on unknown target ids.
  void inject_event(const ExternalEvent& event);

  // The inclusive-join rule, exposed for direct testing: at least one marked
  // incoming flow and no other token able to reach an unmarked one.
  bool or_join_enabled(const std::string& gateway_id) const;

  // Queues compensation of the scope's completed children in reverse
  // completion order; children without handlers are skipped. Returns the
  // handler activations queued.
  std::vector<std::string> compensate_scope(const std::string& scope_id);

  // All successor branches from this state. With free_conditions every flow
  // condition branches both ways and every awaited event counts as available
  // (the analyzer's view); otherwise branches are the concretely enabled
  // transitions. Fault outcomes appear as is_fault branches.
  std::vector<SuccessorBranch> successor_branches(bool free_conditions) const;

  // Canonical digest of marking, activity states, pending machinery, and
  // status; excludes clock, case data, and undelivered external events.
  std::string canonical_state() const;

  InstanceStatus status() const { return status_; }
  const Marking& marking() const { return marking_; }
  std::int64_t clock() const { return clock_; }
  const VarMap& case_data() const { return case_data_; }
  const std::map<std::string, ActivityRuntime>& activity_states() const {
    return activity_states_;
  }
  // Per-scope completion order (transaction/sub-process scopes and top level).
  const std::map<std::string, std::vector<std::string>>& scope_logs() const {
    return scope_logs_;
  }
  const std::vector<std::pair<std::string, std::uint64_t>>& completion_log() const {
    return completion_log_;
  }
  std::string data_hash() const;
  const ProcessDefinition& definition() const { return *def_; }
  const NodeIndex& index() const { return *index_; }

 private:
  struct Enabled;
  struct EnabledSet;
  friend struct SuccessorBranch;

  ProcessInstance() = default;

  EnabledSet enumerate(bool free_conditions) const;
  void apply(const Enabled& e);
  void settle_status();
  void enumerate_task_completion(EnabledSet& out, bool free_mode,
                                 const std::string& aid, const ActivityNode& a,
                                 const std::string& consumed_pos, int pending_index,
                                 const std::function<void(Enabled)>& push) const;
  void enumerate_composite_completion(EnabledSet& out, bool free_mode,
                                      const std::string& aid, const ActivityNode& a,
                                      const std::function<void(Enabled)>& push) const;
  int match_message_index(const std::string& node_id, const EventNode& e) const;
  int match_complete_task_index(const std::string& task_id) const;
  bool or_join_ready(const std::string& gateway_id) const;

  std::shared_ptr<const ProcessDefinition> def_;
  std::shared_ptr<const NodeIndex> index_;

  Marking marking_;
  std::map<std::string, ActivityRuntime> activity_states_;
  std::map<std::string, std::vector<std::string>> scope_logs_;
  std::vector<std::pair<std::string, std::uint64_t>> completion_log_;
  VarMap case_data_;
  std::int64_t clock_ = 0;
  InstanceStatus status_ = InstanceStatus::running;
  std::uint64_t next_seq_ = 0;

  struct Signal {
    enum class Kind { error, cancel };
    Kind kind = Kind::error;
    std::string scope;  // error: scope it was raised at; cancel: transaction
    std::string name;   // error name
  };
  struct CompItem {
    std::string scope;
    std::string handler;
    std::string child;
  };

  std::vector<ExternalEvent> pending_;
  std::vector<Signal> signals_;
  std::deque<CompItem> comp_queue_;
  std::map<std::string, bool> tx_draining_;       // transaction id -> draining
  std::set<std::string> fired_starts_;            // dormant starts already fired
  std::map<std::string, std::int64_t> timer_arm_; // event node -> absolute deadline
};

struct SuccessorBranch {
  bool is_fault = false;
  std::string key;  // transition id, or "fault:<reason-slug>:<subject>"
  Transition transition;
  ProcessInstance next;
};

// --------------------------------------------------------------------------
// Scripted execution
// --------------------------------------------------------------------------

struct ScriptEntry {
  std::size_t after = 0;  // inject once this many steps have fired
  ExternalEvent event;
};

struct RunLimits {
  std::size_t max_steps = 10000;
};

// Deterministic scripted run: steps to a halt, injecting each scripted event
// once `after` steps have fired. The resulting trace is byte-stable for
// fixed inputs.
Trace run(std::shared_ptr<const ProcessDefinition> def, const VarMap& initial_data,
          const std::vector<ScriptEntry>& script, const RunLimits& limits = {});

// --------------------------------------------------------------------------
// Wire formats (JSON lines) and hashing
// --------------------------------------------------------------------------

std::string trace_to_jsonl(const Trace& trace);
std::variant<Trace, ParseError> trace_from_jsonl(const std::string& text);

std::string script_to_jsonl(const std::vector<ScriptEntry>& script);
std::variant<std::vector<ScriptEntry>, ParseError> script_from_jsonl(const std::string& text);

std::uint64_t fnv1a64(std::string_view bytes);
std::string canonical_case_data(const VarMap& data);

}  // namespace bpd
