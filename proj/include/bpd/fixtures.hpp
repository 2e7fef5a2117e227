// Built-in pattern fixtures: one per gateway pattern plus exception,
// transaction, compensation, diamond, and a deliberately broken join. Each
// ships with its canonical event script (possibly empty).
#pragma once

#include "bpd/engine.hpp"

namespace bpd::fixtures {

std::vector<std::string> pattern_names();
bool has_pattern(const std::string& name);

// Throws ModelError for unknown names.
std::shared_ptr<const ProcessDefinition> pattern_definition(const std::string& name);
std::string pattern_document(const std::string& name);  // canonical text form
std::vector<ScriptEntry> pattern_script(const std::string& name);
std::string pattern_script_jsonl(const std::string& name);

}  // namespace bpd::fixtures
