#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "bpd/fixtures.hpp"

namespace {

struct CommandResult {
  int exit_code = -1;
  std::string out;
};

// Runs the tool capturing stdout; stderr goes to a scratch file per call so
// asserts can look at both streams.
CommandResult run_cli(const std::string& args, std::string* err_out = nullptr) {
  const std::string err_path = "/tmp/bpd_cli_err.txt";
  std::string cmd = std::string(BPD_CLI_PATH) + " " + args + " 2>" + err_path;
  CommandResult result;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) {
    result.out.append(buf.data(), n);
  }
  int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (err_out) {
    std::ifstream err(err_path);
    err_out->assign(std::istreambuf_iterator<char>(err),
                    std::istreambuf_iterator<char>());
  }
  return result;
}

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = "/tmp/" + name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

std::string emit_fixture(const std::string& name) {
  return write_temp("cli_" + name + ".bpd", bpd::fixtures::pattern_document(name));
}

}  // namespace

TEST_CASE("validate: clean fixture exits 0 with no output") {
  std::string path = emit_fixture("and-fork");
  CommandResult r = run_cli("validate " + path);
  CHECK(r.exit_code == 0);
  CHECK(r.out.empty());
}

TEST_CASE("validate: errors print one diagnostic per line and exit 1") {
  std::string doc = bpd::fixtures::pattern_document("diamond");
  // break it: retarget a flow at a ghost node
  auto pos = doc.find("\"target\": \"join\"");
  REQUIRE(pos != std::string::npos);
  doc.replace(pos, 16, "\"target\": \"ghost\"");
  std::string path = write_temp("cli_broken.bpd", doc);
  CommandResult r = run_cli("validate " + path);
  CHECK(r.exit_code == 1);
  CHECK(r.out.find("E002 f3 ") == 0);
}

TEST_CASE("validate: warnings alone still exit 0") {
  std::string doc = bpd::fixtures::pattern_document("diamond");
  auto pos = doc.find("\"nodes\": [");
  REQUIRE(pos != std::string::npos);
  doc.insert(pos + 10,
             "\n              {\"id\": \"orphan\", \"type\": \"activity\", "
             "\"kind\": \"task\"},");
  std::string path = write_temp("cli_warn.bpd", doc);
  CommandResult r = run_cli("validate " + path);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("W001 orphan") == 0);
}

TEST_CASE("run: event script routes the event gateway") {
  std::string path = emit_fixture("xor-event");
  std::string script = write_temp("cli_msgb.jsonl",
                                  bpd::fixtures::pattern_script_jsonl("xor-event"));
  CommandResult r = run_cli("run " + path + " --events " + script);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("\"subject\":\"evB\"") != std::string::npos);
  CHECK(r.out.find("\"subject\":\"evA\"") == std::string::npos);
  CHECK(r.out.find("\"subject\":\"B\"") != std::string::npos);
  CHECK(r.out.find("\"verdict\":\"completed\"") != std::string::npos);
}

TEST_CASE("run: quiescent deadlock exits 3") {
  std::string path = emit_fixture("xor-event");
  CommandResult r = run_cli("run " + path);  // no events: waits forever
  CHECK(r.exit_code == 3);
  CHECK(r.out.find("\"verdict\":\"quiescent\"") != std::string::npos);
}

TEST_CASE("run: --trace writes the file and prints nothing") {
  std::string path = emit_fixture("diamond");
  std::string trace_path = "/tmp/cli_diamond.trace";
  CommandResult r = run_cli("run " + path + " --trace " + trace_path);
  CHECK(r.exit_code == 0);
  CHECK(r.out.empty());
  std::ifstream in(trace_path);
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  CHECK(contents.find("\"verdict\":\"completed\"") != std::string::npos);

  // byte-determinism across invocations
  std::string trace2 = "/tmp/cli_diamond2.trace";
  run_cli("run " + path + " --trace " + trace2);
  std::ifstream in2(trace2);
  std::string contents2((std::istreambuf_iterator<char>(in2)),
                        std::istreambuf_iterator<char>());
  CHECK(contents == contents2);
}

TEST_CASE("run: fault exits 2") {
  std::string doc = R"({
  "version": 1,
  "process": {
    "id": "stuck",
    "variables": [{"name": "x", "type": "int", "init": 0}],
    "pools": [{"id": "P", "lanes": [{"id": "L", "nodes": [
      {"id": "s", "type": "event", "kind": "start"},
      {"id": "G", "type": "gateway", "kind": "exclusiveData"},
      {"id": "A", "type": "activity", "kind": "task"},
      {"id": "e", "type": "event", "kind": "end"}
    ]}]}],
    "flows": [
      {"id": "f0", "source": "s", "target": "G"},
      {"id": "fa", "source": "G", "target": "A", "condition": "x > 0"},
      {"id": "fe", "source": "A", "target": "e"}
    ]
  }
})";
  std::string path = write_temp("cli_stuck.bpd", doc);
  CommandResult r = run_cli("run " + path);
  CHECK(r.exit_code == 2);
  CHECK(r.out.find("faulted") != std::string::npos);
}

TEST_CASE("explore: sound fixture exits 0, broken join exits 3") {
  CommandResult ok = run_cli("explore " + emit_fixture("diamond"));
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("\"optionToComplete\": true") != std::string::npos);

  CommandResult bad = run_cli("explore " + emit_fixture("bad-join"));
  CHECK(bad.exit_code == 3);
  CHECK(bad.out.find("\"deadlocks\": [") != std::string::npos);
  CHECK(bad.out.find("\"deadlocks\": []") == std::string::npos);
}

TEST_CASE("explore: bound exhaustion exits 2 and writes the report file") {
  std::string report_path = "/tmp/cli_bounded.json";
  CommandResult r = run_cli("explore " + emit_fixture("and-fork") +
                            " --max-states 2 --report " + report_path);
  CHECK(r.exit_code == 2);
  std::ifstream in(report_path);
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  CHECK(contents == r.out);
  CHECK(contents.find("\"bounded\": true") != std::string::npos);
}

TEST_CASE("patterns: lists the fixture corpus") {
  CommandResult r = run_cli("patterns");
  CHECK(r.exit_code == 0);
  for (const char* name :
       {"xor-data", "xor-event", "xor-merge", "or-split", "or-merge",
        "complex-split", "complex-merge", "and-fork", "and-join", "exception",
        "transaction", "compensation"}) {
    CHECK(r.out.find(name) != std::string::npos);
  }
}

TEST_CASE("patterns: --emit output is directly consumable") {
  CommandResult emit = run_cli("patterns --emit or-merge");
  CHECK(emit.exit_code == 0);
  std::string path = write_temp("cli_emitted.bpd", emit.out);
  CommandResult v = run_cli("validate " + path);
  CHECK(v.exit_code == 0);
}

TEST_CASE("usage errors exit 64 with help on stderr") {
  std::string err;
  CommandResult r = run_cli("frobnicate", &err);
  CHECK(r.exit_code == 64);
  CHECK(err.find("Usage") != std::string::npos);

  CommandResult missing = run_cli("validate", &err);
  CHECK(missing.exit_code == 64);

  CommandResult unknown = run_cli("patterns --emit nope", &err);
  CHECK(unknown.exit_code == 64);
  CHECK(err.find("nope") != std::string::npos);
}

TEST_CASE("machine output goes to stdout, commentary to stderr") {
  std::string err;
  std::string missing_file = "/tmp/does_not_exist.bpd";
  CommandResult r = run_cli("validate " + missing_file, &err);
  CHECK(r.exit_code == 64);
  CHECK(r.out.empty());
  CHECK(err.find(missing_file) != std::string::npos);
}
