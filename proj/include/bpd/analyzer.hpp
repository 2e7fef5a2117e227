// Bounded exhaustive state-space exploration: breadth-first over every
// nondeterministic choice (free-boolean conditions, all awaited events
// available), with canonical-state deduplication. Serves as the brute-force
// oracle for the engine and as a soundness checker.
#pragma once

#include <cstdint>

#include "bpd/engine.hpp"

namespace bpd {

struct StateGraph {
  struct Edge {
    std::size_t from = 0;
    std::string key;  // transition id or fault key
    std::size_t to = 0;
  };
  struct Flags {
    bool final_state = false;
    bool deadlock = false;
    bool improper = false;
  };

  std::string definition_id;
  std::vector<std::string> states;  // canonical encodings, discovery order
  std::vector<Marking> markings;    // marking per state, for reporting
  std::vector<Flags> flags;
  std::vector<Edge> edges;          // discovery order
  std::size_t initial = 0;
  bool bounded = false;             // exploration hit the state budget
  std::vector<std::string> all_nodes;      // every flow-node id in the definition
  std::vector<std::string> touched_nodes;  // nodes seen as subjects or token holders

  // Adjacency prepared once at the end of exploration.
  std::vector<std::vector<std::size_t>> out_edges;  // edge indices per state
};

enum class Tristate { yes, no, unknown };
std::string_view to_text(Tristate t);

struct SoundnessReport {
  Tristate option_to_complete = Tristate::unknown;
  Tristate proper_completion = Tristate::unknown;
  std::vector<std::size_t> deadlocks;  // state numbers
  std::vector<std::string> unreachable_nodes;
  bool bounded = false;
};

struct ExploreOptions {
  std::size_t max_states = 100000;
  // Free-boolean conditions and always-available events (the oracle view).
  // With false, conditions evaluate over initial_data: the resulting graph is
  // a subgraph of the free-condition graph.
  bool free_conditions = true;
  VarMap initial_data;
};

// Requires an error-free definition (ModelError otherwise). Deterministic:
// identical definition and bounds give identical numbering and edges.
StateGraph explore(const ProcessDefinition& def, const ExploreOptions& options = {});

SoundnessReport check_soundness(const StateGraph& graph);

// True iff the trace's transitions walk existing edges from the initial
// state. Throws ModelError when the trace or graph belong to a different
// definition.
bool conformance(const ProcessDefinition& def, const Trace& trace,
                 const StateGraph& graph);

// Canonical JSON form of the report (fixed key order).
std::string report_to_json(const SoundnessReport& report);

}  // namespace bpd
