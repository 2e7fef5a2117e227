// bpd: validate, execute, and explore Business Process Diagram definitions.
//
// Exit codes
//   validate: 0 clean (warnings allowed), 1 errors found
//   run:      0 completed/terminated, 2 faulted or budget exceeded,
//             3 quiescent deadlock
//   explore:  0 sound, 2 state budget exceeded, 3 deadlock or improper
//             completion found
//   usage errors: 64
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bpd/analyzer.hpp"
#include "bpd/document.hpp"
#include "bpd/fixtures.hpp"
#include "bpd/validate.hpp"

namespace {

constexpr int kExitUsage = 64;

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;
  out << content;
  return bool(out);
}

std::shared_ptr<const bpd::ProcessDefinition> load_definition(
    const std::string& path, int* exit_code) {
  auto text = read_file(path);
  if (!text) {
    std::cerr << "cannot read '" << path << "'\n";
    *exit_code = kExitUsage;
    return nullptr;
  }
  auto parsed = bpd::parse_definition(*text);
  if (auto* err = std::get_if<bpd::ParseError>(&parsed)) {
    std::cerr << path << ": " << err->to_string() << "\n";
    *exit_code = 1;
    return nullptr;
  }
  return std::make_shared<const bpd::ProcessDefinition>(
      std::move(std::get<bpd::ProcessDefinition>(parsed)));
}

int cmd_validate(const std::string& path) {
  int ec = 0;
  auto def = load_definition(path, &ec);
  if (!def) return ec;
  auto diags = bpd::validate(*def);
  for (const bpd::Diagnostic& d : diags) {
    std::cout << d.code << " " << d.subject_id << " " << d.message << "\n";
  }
  return bpd::has_errors(diags) ? 1 : 0;
}

int cmd_run(const std::string& path, const std::string& events_path,
            std::size_t max_steps, const std::string& trace_path) {
  int ec = 0;
  auto def = load_definition(path, &ec);
  if (!def) return ec;

  std::vector<bpd::ScriptEntry> script;
  if (!events_path.empty()) {
    auto text = read_file(events_path);
    if (!text) {
      std::cerr << "cannot read '" << events_path << "'\n";
      return kExitUsage;
    }
    auto parsed = bpd::script_from_jsonl(*text);
    if (auto* err = std::get_if<bpd::ParseError>(&parsed)) {
      std::cerr << events_path << ": " << err->to_string() << "\n";
      return kExitUsage;
    }
    script = std::move(std::get<std::vector<bpd::ScriptEntry>>(parsed));
  }

  bpd::Trace trace;
  try {
    trace = bpd::run(def, {}, script, bpd::RunLimits{max_steps});
  } catch (const bpd::ModelError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  const std::string jsonl = bpd::trace_to_jsonl(trace);
  if (!trace_path.empty()) {
    if (!write_file(trace_path, jsonl)) {
      std::cerr << "cannot write '" << trace_path << "'\n";
      return kExitUsage;
    }
  } else {
    std::cout << jsonl;
  }
  if (trace.verdict == "completed" || trace.verdict == "terminated") return 0;
  if (trace.verdict == "quiescent") return 3;
  return 2;  // faulted or budget exceeded
}

int cmd_explore(const std::string& path, std::size_t max_states,
                const std::string& report_path) {
  int ec = 0;
  auto def = load_definition(path, &ec);
  if (!def) return ec;
  bpd::ExploreOptions options;
  options.max_states = max_states;
  bpd::StateGraph graph;
  try {
    graph = bpd::explore(*def, options);
  } catch (const bpd::ModelError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  bpd::SoundnessReport report = bpd::check_soundness(graph);
  const std::string json = bpd::report_to_json(report);
  std::cout << json;
  if (!report_path.empty() && !write_file(report_path, json)) {
    std::cerr << "cannot write '" << report_path << "'\n";
    return kExitUsage;
  }
  if (report.bounded) return 2;
  if (!report.deadlocks.empty() || report.proper_completion == bpd::Tristate::no) {
    return 3;
  }
  return 0;
}

int cmd_patterns(const std::string& emit, const std::string& emit_script) {
  if (!emit.empty()) {
    if (!bpd::fixtures::has_pattern(emit)) {
      std::cerr << "unknown fixture '" << emit << "'\n";
      return kExitUsage;
    }
    std::cout << bpd::fixtures::pattern_document(emit);
    return 0;
  }
  if (!emit_script.empty()) {
    if (!bpd::fixtures::has_pattern(emit_script)) {
      std::cerr << "unknown fixture '" << emit_script << "'\n";
      return kExitUsage;
    }
    std::cout << bpd::fixtures::pattern_script_jsonl(emit_script);
    return 0;
  }
  for (const std::string& name : bpd::fixtures::pattern_names()) {
    std::cout << name << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Business Process Diagram toolkit"};
  app.require_subcommand(1);

  std::string val_path;
  CLI::App* validate = app.add_subcommand("validate", "check a definition file");
  validate->add_option("file", val_path, "definition document")->required();

  std::string run_path, run_events, run_trace;
  std::size_t run_max_steps = 10000;
  CLI::App* run = app.add_subcommand("run", "execute a definition to a halt");
  run->add_option("file", run_path, "definition document")->required();
  run->add_option("--events", run_events, "event script (JSON lines)");
  run->add_option("--max-steps", run_max_steps, "step budget");
  run->add_option("--trace", run_trace, "write the trace here instead of stdout");

  std::string exp_path, exp_report;
  std::size_t exp_max_states = 100000;
  CLI::App* explore = app.add_subcommand("explore", "exhaustive state-space check");
  explore->add_option("file", exp_path, "definition document")->required();
  explore->add_option("--max-states", exp_max_states, "state budget");
  explore->add_option("--report", exp_report, "also write the report here");

  std::string pat_emit, pat_emit_script;
  CLI::App* patterns = app.add_subcommand("patterns", "list or emit built-in fixtures");
  patterns->add_option("--emit", pat_emit, "print the named fixture document");
  patterns->add_option("--emit-script", pat_emit_script,
                       "print the named fixture's canonical event script");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help and friends
      return app.exit(e);
    }
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (validate->parsed()) return cmd_validate(val_path);
    if (run->parsed()) return cmd_run(run_path, run_events, run_max_steps, run_trace);
    if (explore->parsed()) return cmd_explore(exp_path, exp_max_states, exp_report);
    if (patterns->parsed()) return cmd_patterns(pat_emit, pat_emit_script);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return kExitUsage;
}
