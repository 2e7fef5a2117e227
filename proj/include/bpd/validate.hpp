// Structural validation and model-type classification.
//
// Diagnostic catalog:
//   E001 duplicate identifier
//   E002 dangling reference
//   E003 sequence flow crosses pools
//   E004 message flow within one pool
//   E005 start event with incoming flow
//   E006 end event with outgoing flow
//   E007 boundary event without host / with incoming flow / without exactly
//        one outgoing flow
//   E008 default flow not owned by its gateway (or default on a gateway kind
//        that takes none)
//   E009 compensation activity wired into normal sequence flow
//   E010 condition on a flow leaving a parallel gateway
//   E011 event gateway successor is not a catching event or receive task
//   E012 non-boolean (or ill-formed) flow/loop condition
//   E013 definition has no pools
//   E014 invalid event configuration (attachment or trigger)
//   E015 activity body present/absent contrary to its kind
//   E016 conflicting or incomplete activity markers
//   E017 invalid activation expression usage
//   E018 condition and isDefault both set on a flow
//   E019 invalid compensation association endpoints
//   E020 tokens() used outside an activation expression
//   E021 multiInstance marker on a non-task activity
//   W001 node unreachable from any start event
#pragma once

#include <vector>

#include "bpd/model.hpp"

namespace bpd {

// Returns every violation, ordered by (subjectId, code). Never throws on a
// broken definition; brokenness is the output.
std::vector<Diagnostic> validate(const ProcessDefinition& def);

bool has_errors(const std::vector<Diagnostic>& diags);

enum class ModelType { private_process, abstract_process, collaboration };

std::string_view to_text(ModelType t);

// Precondition: validate(def) reported no error-severity diagnostics.
ModelType classify_model_type(const ProcessDefinition& def);

}  // namespace bpd
