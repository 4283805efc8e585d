// SPDX-License-Identifier: Apache-2.0
#include "test_images.hpp"

#include "urba/abstraction.hpp"

#include <doctest.h>
#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include <sys/wait.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

using urba::testing::TempDir;
using Json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int exit_code = -1;
    std::string output;
};

Run run(const std::string& args) {
    const std::string cmd = fmt::format("env -u UR_BACKENDS '{}' {} 2>&1", URBA_CLI_PATH, args);
    Run r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

const char* kPlantSpec = R"({"jitter":0,"plant_size":512,"plants":[
  {"id":7,"at":[1000,1000],"label":"red pagoda","caption":"a red pagoda with a curved tiled roof",
   "facts":[{"prompt":"what is beside the pagoda?","answer":"a stone lantern"}],
   "qa":{"question":"what is beside the pagoda?","options":["a fountain","a stone lantern","a bicycle","a bus stop"],"answer":"B"}},
  {"id":12,"at":[3000,3000],"label":"blue tram"}]})";

std::string tool(const std::string& name, const Json& args) {
    return "```tool\n" + Json{{"tool", name}, {"args", args}}.dump() + "\n```";
}

Json agent_script() {
    return Json::array({tool("crop", {{"image", "img_0"}, {"bbox", {0, 0, 2048, 2048}}}),
                        tool("vlm", {{"image", "img_1"}, {"prompt", "what is beside the pagoda?"}}), "FINAL ANSWER: B"});
}

struct Workspace {
    TempDir dir;
    fs::path image, plants, questions;

    Workspace() {
        write(dir / "spec.json", kPlantSpec);
        const auto r = run(fmt::format("fixture --seed 42 --size 4096x4096 --plants {} --out {}", q(dir / "spec.json"),
                                       q(dir / "fx")));
        REQUIRE(r.exit_code == 0);
        image = dir / "fx" / "image.ursy";
        plants = dir / "fx" / "plants.json";
        questions = dir / "fx" / "questions.jsonl";
        std::ifstream in(questions);
        std::string first;
        std::getline(in, first);
        write(dir / "q.json", first);
        write(dir / "script.json", agent_script().dump());
    }
};

} // namespace

TEST_CASE("cli: fixture is deterministic") {
    Workspace ws;
    CHECK(fs::exists(ws.image));
    CHECK(fs::exists(ws.plants));
    CHECK(fs::exists(ws.questions));
    const auto again = run(fmt::format("fixture --seed 42 --size 4096x4096 --plants {} --out {}",
                                       q(ws.dir / "spec.json"), q(ws.dir / "fx2")));
    REQUIRE(again.exit_code == 0);
    CHECK(slurp(ws.image) == slurp(ws.dir / "fx2" / "image.ursy"));
    CHECK(slurp(ws.plants) == slurp(ws.dir / "fx2" / "plants.json"));
    CHECK(slurp(ws.questions) == slurp(ws.dir / "fx2" / "questions.jsonl"));

    write(ws.dir / "bad.json", R"({"plants":[{"id":1}]})");
    const auto bad = run(fmt::format("fixture --plants {} --out {}", q(ws.dir / "bad.json"), q(ws.dir / "fx3")));
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("error[invalid-spec]") != std::string::npos);
}

TEST_CASE("cli: abstract then retrieve") {
    Workspace ws;
    const auto a = run(fmt::format("abstract {} --mock {} --chunks 16 --out {}", q(ws.image), q(ws.plants),
                                   q(ws.dir / "idx.json")));
    REQUIRE(a.exit_code == 0);
    CHECK(a.output.find("16 chunks") != std::string::npos);
    const auto index = urba::load_index(ws.dir / "idx.json");
    CHECK(index.chunks.size() == 16);
    CHECK(index.chunks[0].caption.find("marker 7") != std::string::npos);

    const auto r = run(fmt::format("retrieve {} --mock {} --query 'red pagoda' --topk 2", q(ws.dir / "idx.json"),
                                   q(ws.plants)));
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.rfind("1. [chunk ", 0) == 0);
    CHECK(r.output.find("red pagoda") != std::string::npos);
    CHECK(r.output.find("\n3. ") == std::string::npos);
    CHECK(r.output.find("enclosing region:") != std::string::npos);

    const auto missing = run(fmt::format("retrieve {} --mock {} --query x", q(ws.dir / "nope.json"), q(ws.plants)));
    CHECK(missing.exit_code == 1);
    CHECK(missing.output.find("error[") != std::string::npos);
}

TEST_CASE("cli: ask in agent and e2e modes") {
    Workspace ws;
    const auto e2e = run(fmt::format("ask {} --mock {} --question-file {} --mode e2e", q(ws.image), q(ws.plants),
                                     q(ws.dir / "q.json")));
    CHECK(e2e.exit_code == 0);
    CHECK(e2e.output.find("answer: B") != std::string::npos);

    const auto agent = run(fmt::format("ask {} --mock {} --question-file {} --script {} --transcript {}", q(ws.image),
                                       q(ws.plants), q(ws.dir / "q.json"), q(ws.dir / "script.json"),
                                       q(ws.dir / "t.jsonl")));
    CHECK(agent.exit_code == 0);
    CHECK(agent.output.find("status: answered") != std::string::npos);
    CHECK(agent.output.find("answer: B") != std::string::npos);
    CHECK(agent.output.find("crop: 1") != std::string::npos);
    CHECK(agent.output.find("vlm: 1") != std::string::npos);
    std::ifstream t(ws.dir / "t.jsonl");
    int lines = 0;
    bool saw_vlm_result = false;
    for (std::string line; std::getline(t, line); ++lines) {
        if (line.find("a stone lantern") != std::string::npos) saw_vlm_result = true;
        CHECK(Json::parse(line).is_object());
    }
    CHECK(lines > 0);
    CHECK(saw_vlm_result);

    write(ws.dir / "empty.json", "[]");
    const auto dry = run(fmt::format("ask {} --mock {} --question-file {} --script {}", q(ws.image), q(ws.plants),
                                     q(ws.dir / "q.json"), q(ws.dir / "empty.json")));
    CHECK(dry.exit_code == 2);
    CHECK(dry.output.find("backend_failure") != std::string::npos);
}

TEST_CASE("cli: eval writes report and episodes") {
    Workspace ws;
    Json scripts = Json::object();
    std::ifstream in(ws.questions);
    int n = 0;
    for (std::string line; std::getline(in, line); ++n) scripts[Json::parse(line).at("id").get<std::string>()] = agent_script();
    write(ws.dir / "scripts.json", scripts.dump());
    const auto r = run(fmt::format("eval {} --mock {} --scripts {} --out {} --episodes-dir {}", q(ws.questions),
                                   q(ws.plants), q(ws.dir / "scripts.json"), q(ws.dir / "report.json"),
                                   q(ws.dir / "eps")));
    REQUIRE(r.exit_code == 0);
    const auto report = Json::parse(slurp(ws.dir / "report.json"));
    CHECK(report.at("mode") == "agent");
    CHECK(report.at("counts").at("total") == n);
    CHECK(report.at("counts").at("valid") == n);
    std::ifstream eps(ws.dir / "eps" / "episodes.jsonl");
    int episodes = 0;
    for (std::string line; std::getline(eps, line);) ++episodes;
    CHECK(episodes == n);
}

TEST_CASE("cli: usage errors") {
    TempDir dir;
    const auto none = run("ask nothing.ursy --question-file q.json");
    CHECK(none.exit_code == 1);
    CHECK(none.output.find("error[invalid-argument]") != std::string::npos);
    CHECK(run("frobnicate").exit_code == 1);
    CHECK(run("abstract").exit_code == 1);
    CHECK(run("--help").exit_code == 0);

    write(dir / "backends.json", R"({"chat":{"url":"http://127.0.0.1:9","retries":0}})");
    const auto cfg = run(fmt::format("ask x.ursy --backends {} --question-file q.json", q(dir / "backends.json")));
    CHECK(cfg.exit_code != 0);
}

TEST_CASE("cli: serve-mocks answers ask over HTTP") {
    Workspace ws;
    int port = 0;
    port = urba::testing::free_port();
    REQUIRE(port > 0);
    const std::string launch = fmt::format("'{}' serve-mocks --port {} --mock {} --script {} >{} 2>&1 & echo $!",
                                           URBA_CLI_PATH, port, q(ws.plants), q(ws.dir / "script.json"),
                                           q(ws.dir / "serve.log"));
    FILE* pipe = ::popen(launch.c_str(), "r");
    REQUIRE(pipe != nullptr);
    int pid = 0;
    REQUIRE(std::fscanf(pipe, "%d", &pid) == 1);
    ::pclose(pipe);

    httplib::Client client("127.0.0.1", port);
    bool up = false;
    for (int i = 0; i < 100 && !up; ++i) {
        if (auto res = client.Get("/healthz"); res && res->status == 200) up = true;
        else std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    if (up) {
        const auto url = fmt::format("http://127.0.0.1:{}", port);
        Json cfg = Json::object();
        for (auto role : {"chat", "caption", "vlm", "ground", "embed"}) cfg[role] = {{"url", url}, {"retries", 0}};
        write(ws.dir / "backends.json", cfg.dump());
        const auto r = run(fmt::format("ask {} --backends {} --question-file {} --transcript {}", q(ws.image),
                                       q(ws.dir / "backends.json"), q(ws.dir / "q.json"), q(ws.dir / "t.jsonl")));
        INFO(r.output);
        INFO(slurp(ws.dir / "t.jsonl"));
        INFO(slurp(ws.dir / "serve.log"));
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("answer: B") != std::string::npos);
        CHECK(r.output.find("vlm: 1") != std::string::npos);
    }
    ::kill(pid, SIGTERM);
    REQUIRE(up);
}
