#include <doctest.h>

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "agents/config.hpp"
#include "agents/service.hpp"
#include "support.hpp"

extern char** environ;

using namespace agents;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI through the shell from inside dir; stdin_spec is a shell
// redirection.
Run cli(const std::string& args, const testing::TempDir& dir, const std::string& stdin_spec = "< /dev/null") {
  fs::path out = dir.path / "stdout.txt", err = dir.path / "stderr.txt";
  std::string cmd = "cd " + quote(dir.str()) + " && " + quote(AGENTS_CLI) + " " + args + " " + stdin_spec + " > " + quote(out.string()) + " 2> " + quote(err.string());
  int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out.string());
  r.err = read_file(err.string());
  return r;
}

std::string fx(const std::string& rel) { return quote(testing::fixture(rel)); }

// A child process with a pipe on stdin and stdout captured to a file.
struct Child {
  pid_t pid = -1;
  int stdin_fd = -1;
  fs::path out;

  Child(const std::vector<std::string>& args, const fs::path& out_file) : out(out_file) {
    int fds[2];
    REQUIRE(pipe(fds) == 0);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, fds[0], 0);
    posix_spawn_file_actions_addclose(&fa, fds[1]);
    posix_spawn_file_actions_addopen(&fa, 1, out.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_addopen(&fa, 2, "/dev/null", O_WRONLY, 0);
    std::vector<char*> argv;
    std::string bin = AGENTS_CLI;
    argv.push_back(bin.data());
    std::vector<std::string> copy = args;
    for (auto& a : copy) argv.push_back(a.data());
    argv.push_back(nullptr);
    REQUIRE(posix_spawn(&pid, bin.c_str(), &fa, nullptr, argv.data(), environ) == 0);
    posix_spawn_file_actions_destroy(&fa);
    close(fds[0]);
    stdin_fd = fds[1];
  }
  ~Child() {
    if (stdin_fd >= 0) close(stdin_fd);
    if (pid > 0) {
      kill(pid, SIGKILL);
      waitpid(pid, nullptr, 0);
    }
  }
  bool wait_output(const std::string& needle) {
    for (int i = 0; i < 500; ++i) {
      if (fs::exists(out) && read_file(out.string()).find(needle) != std::string::npos) return true;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return false;
  }
  int join() {
    int status = 0;
    waitpid(pid, &status, 0);
    pid = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

}  // namespace

TEST_CASE("run: debate with the golden script reproduces the golden transcript") {
  testing::TempDir dir("cli");
  Run r = cli("run " + fx("debate.json") + " --mock " + fx("golden/debate.ndjson") + " --session-id golden --out " +
                  quote(dir.str()),
              dir);
  CHECK(r.code == 0);
  CHECK(r.out.find("session finished (terminal_state)") != std::string::npos);
  CHECK(read_file((dir.path / "transcripts/golden.md").string()) ==
        read_file(testing::fixture("golden/debate.transcript.md")));
  CHECK(fs::exists(dir.path / "sessions/golden/events.ndjson"));
}

TEST_CASE("run: failures exit 2") {
  testing::TempDir dir("cli");
  std::ofstream((dir.path / "bad.json").string()) << "{\"version\": 1, \"agents\": {}}";
  Run bad = cli("run " + quote((dir.path / "bad.json").string()), dir);
  CHECK(bad.code == 2);
  CHECK(bad.err.find("error") != std::string::npos);
  CHECK(cli("run " + quote((dir.path / "missing.json").string()), dir).code == 2);
  // the loop fixture's script runs out before max_steps 7
  CHECK(cli("run " + fx("loop.json") + " --max-steps 7", dir).code == 2);
  CHECK(cli("run " + fx("loop.json") + " --max-steps 3", dir).code == 0);
}

TEST_CASE("run: human turns from stdin and from an inputs file") {
  testing::TempDir dir("cli");
  fs::path typed = dir.path / "typed.txt";
  std::ofstream(typed.string()) << "Ban them on weekends.\n";
  Run piped = cli("run " + fx("human_debate.json") + " --session-id h1 --out " + quote(dir.str()), dir,
                  "< " + quote(typed.string()));
  CHECK(piped.code == 0);
  CHECK(piped.out.find("your turn as citizen") != std::string::npos);
  CHECK(read_file((dir.path / "transcripts/h1.md").string()).find("Ban them on weekends.") != std::string::npos);

  fs::path inputs = dir.path / "inputs.txt";
  std::ofstream(inputs.string()) << "From the file.\n";
  Run queued = cli("run " + fx("human_debate.json") + " --inputs " + quote(inputs.string()), dir);
  CHECK(queued.code == 0);
  CHECK(queued.out.find("From the file.") != std::string::npos);

  // end of input while waiting counts as an interrupt
  CHECK(cli("run " + fx("human_debate.json"), dir).code == 3);
}

TEST_CASE("run: Ctrl-C during a human wait exits 3") {
  testing::TempDir dir("cli");
  Child child({"run", testing::fixture("human_debate.json"), "--out", dir.str()}, dir.path / "child.txt");
  REQUIRE(child.wait_output("citizen> "));
  kill(child.pid, SIGINT);
  CHECK(child.join() == 3);
}

TEST_CASE("validate") {
  testing::TempDir dir("cli");
  Run ok = cli("validate " + fx("debate.json"), dir);
  CHECK(ok.code == 0);
  CHECK(ok.out.find("ok (0 errors") != std::string::npos);
  std::ofstream((dir.path / "bad.json").string())
      << "{\"version\": 1, \"agents\": {\"a\": {\"role\": \"r\"}}, \"sop\": {\"initial_state\": \"x\", \"states\": {}}}";
  Run bad = cli("validate " + quote((dir.path / "bad.json").string()), dir);
  CHECK(bad.code == 1);
  CHECK(bad.out.find("REFERENCE_ERROR at sop.initial_state") != std::string::npos);
  CHECK(cli("validate " + quote((dir.path / "none.json").string()), dir).code == 1);
}

TEST_CASE("new") {
  testing::TempDir dir("cli");
  std::string out = (dir.path / "gen.json").string();
  std::string common = "new 'Hold a debate on whether cities should ban cars from their centres' --exemplars " +
                       quote(testing::fixture("../exemplars")) + " --out " + quote(out);
  Run r = cli(common + " --mock " + fx("golden/meta_stages.ndjson"), dir);
  CHECK(r.code == 0);
  CHECK(canonicalize(load_config_file(out)) == canonicalize(testing::load_fixture("golden/meta_target.json")));
  CHECK(cli(common + " --mock " + fx("golden/meta_stages.ndjson"), dir).code == 1);
  CHECK(cli(common + " --force --mock " + fx("golden/meta_stages.ndjson"), dir).code == 0);

  std::string failed = (dir.path / "failed.json").string();
  Run f = cli("new 'Hold a debate' --out " + quote(failed) + " --mock " + fx("golden/meta_fail.ndjson"), dir);
  CHECK(f.code == 1);
  CHECK(f.err.find("trace: ") != std::string::npos);
  CHECK(fs::exists(failed + ".trace.json"));
  CHECK_FALSE(fs::exists(failed));
}

TEST_CASE("export") {
  testing::TempDir dir("cli");
  fs::path session = dir.path / "golden";
  fs::create_directories(session);
  std::ofstream((session / "events.ndjson").string()) << read_file(testing::fixture("golden/debate.events.ndjson"));
  CHECK(cli("export " + quote(session.string()), dir).code == 0);
  CHECK(read_file((session / "transcript.md").string()) == read_file(testing::fixture("golden/debate.transcript.md")));

  fs::path empty = dir.path / "empty";
  fs::create_directories(empty);
  std::ofstream((empty / "events.ndjson").string());
  CHECK(cli("export " + quote(empty.string()) + " --out " + quote((dir.path / "e.md").string()), dir).code == 0);
  std::string md = read_file((dir.path / "e.md").string());
  CHECK(md.starts_with("# Transcript empty"));
  CHECK(md.find("### turn") == std::string::npos);

  CHECK(cli("export " + quote((dir.path / "nowhere").string()), dir).code == 1);
  CHECK(cli("export " + quote(session.string()) + " --format html", dir).code == 1);
}

TEST_CASE("serve") {
  testing::TempDir dir("cli");
  SUBCASE("a busy port exits 1") {
    ServiceOptions o;
    o.port = 0;
    Service holder(o);
    REQUIRE(holder.start());
    CHECK(cli("serve --port " + std::to_string(holder.port()), dir).code == 1);
  }
  SUBCASE("answers requests") {
    int port;
    {
      ServiceOptions o;
      o.port = 0;
      Service probe(o);
      REQUIRE(probe.bind());
      port = probe.port();
    }
    setenv("AGENTS_SESSIONS_DIR", dir.str().c_str(), 1);
    Child child({"serve", "--port", std::to_string(port), "--base-dir", testing::fixture("")}, dir.path / "serve.txt");
    unsetenv("AGENTS_SESSIONS_DIR");
    REQUIRE(child.wait_output("listening on"));
    httplib::Client c("127.0.0.1", port);
    auto res = c.Get("/v1/sessions/unknown");
    REQUIRE(res);
    CHECK(res->status == 404);
    auto created = c.Post("/v1/sessions", read_file(testing::fixture("echo.json")), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
  }
}
