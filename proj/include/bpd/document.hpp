// Textual definition format: a JSON document with a fixed schema. Parsing
// preserves declaration order; serialization is canonical (fixed key order,
// 2-space indent, LF newlines), so serialize(parse(doc)) == doc for any
// canonical document.
#pragma once

#include <string>
#include <variant>

#include "bpd/model.hpp"

namespace bpd {

std::variant<ProcessDefinition, ParseError> parse_definition(const std::string& text);

std::string serialize_definition(const ProcessDefinition& def);

// Structural equality via the canonical form.
bool definitions_equal(const ProcessDefinition& a, const ProcessDefinition& b);

}  // namespace bpd
