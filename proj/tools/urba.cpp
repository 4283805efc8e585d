// SPDX-License-Identifier: Apache-2.0
// urba: command-line front end for abstraction, retrieval, agent episodes,
// evaluation, data generation, statistics, fixtures and mock servers.

#include "urba/abstraction.hpp"
#include "urba/agent.hpp"
#include "urba/data_engine.hpp"
#include "urba/error.hpp"
#include "urba/harness.hpp"
#include "urba/http_backends.hpp"
#include "urba/mock_backends.hpp"
#include "urba/mock_server.hpp"
#include "urba/retrieval.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

using namespace urba;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitBackend = 2;

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::backend_unavailable:
    case ErrorCode::script_exhausted:
    case ErrorCode::abstraction_failed:
    case ErrorCode::embed_inconsistent: return kExitBackend;
    default: return kExitInvalid;
    }
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open {}", path));
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::malformed_file, fmt::format("{}: {}", path, e.what()));
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorCode::io, fmt::format("cannot write {}", path));
}

struct BackendOptions {
    std::string config;  // --backends, else UR_BACKENDS
    std::string mock;    // --mock plants.json
};

struct Resolved {
    Backends perception;
    std::optional<EndpointConfig> endpoints;
};

Resolved resolve_backends(const BackendOptions& opts) {
    Resolved r;
    std::optional<std::filesystem::path> config_path;
    if (!opts.config.empty()) config_path = opts.config;
    else config_path = endpoint_config_from_env();
    if (!opts.mock.empty()) {
        auto manifest = std::make_shared<const FixtureManifest>(load_fixture_manifest(opts.mock));
        auto vision = std::make_shared<FixtureVision>(manifest);
        r.perception = {vision, vision, vision, std::make_shared<HashEmbedder>()};
    }
    if (config_path) {
        r.endpoints = load_endpoint_config(*config_path);
        auto http = make_http_backends(*r.endpoints);
        if (http.caption) r.perception.caption = http.caption;
        if (http.vlm) r.perception.vlm = http.vlm;
        if (http.ground) r.perception.ground = http.ground;
        if (http.embed) r.perception.embed = http.embed;
    }
    if (!config_path && opts.mock.empty()) {
        throw Error(ErrorCode::invalid_argument, "no backends: pass --backends <config.json>, set UR_BACKENDS, or use --mock <plants.json>");
    }
    return r;
}

template <typename T>
T& require_role(const std::shared_ptr<T>& backend, const char* role) {
    if (!backend) throw Error(ErrorCode::backend_unavailable, fmt::format("no {} backend configured", role));
    return *backend;
}

void add_backend_flags(CLI::App* cmd, BackendOptions& opts) {
    cmd->add_option("--backends", opts.config, "endpoint config JSON (default: $UR_BACKENDS)");
    cmd->add_option("--mock", opts.mock, "use marker-fixture mock perception driven by this plants.json");
}

std::vector<std::string> read_script(const std::string& path) {
    const auto j = read_json(path);
    if (!j.is_array()) throw Error(ErrorCode::schema_violation, fmt::format("{}: script must be a JSON array of replies", path));
    return j.get<std::vector<std::string>>();
}

std::pair<std::int64_t, std::int64_t> parse_size(const std::string& text) {
    const auto x = text.find_first_of("xX");
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        return {std::stoll(text.substr(0, x)), std::stoll(text.substr(x + 1))};
    } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, fmt::format("size '{}' is not WxH", text));
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Language-space reasoning tools for ultra-high-resolution images"};
    app.require_subcommand(1);

    BackendOptions backends;
    int status = kExitOk;

    // abstract
    std::string abs_image, abs_out;
    int abs_chunks = 10, abs_parallel = 4;
    std::int64_t abs_tmax = 256;
    auto* abstract_cmd = app.add_subcommand("abstract", "caption every chunk of an image into an index file");
    abstract_cmd->add_option("image", abs_image, "source image")->required();
    abstract_cmd->add_option("--chunks", abs_chunks, "approximate chunk count")->check(CLI::PositiveNumber);
    abstract_cmd->add_option("--out", abs_out, "index JSON to write")->required();
    abstract_cmd->add_option("--tmax", abs_tmax, "token cap per caption")->check(CLI::PositiveNumber);
    abstract_cmd->add_option("--parallel", abs_parallel, "concurrent caption requests")->check(CLI::PositiveNumber);
    add_backend_flags(abstract_cmd, backends);
    abstract_cmd->callback([&] {
        auto r = resolve_backends(backends);
        const auto ref = open_image(abs_image);
        AbstractionOptions options;
        options.parallelism = abs_parallel;
        const auto index = abstract_image(ref, abs_chunks, require_role(r.perception.caption, "caption"),
                                          TokenBudget{abs_tmax, 28}, options);
        save_index(index, abs_out);
        const auto failed = std::count_if(index.chunks.begin(), index.chunks.end(), [](const Chunk& c) { return c.failed; });
        fmt::print("{}: {} chunks ({}x{} grid), {} caption tokens vs {} raw image tokens, {} failed\n", abs_out,
                   index.chunks.size(), index.grid.rows, index.grid.cols, index.total_caption_tokens(),
                   estimate_raw_tokens(ref, TokenBudget{}), failed);
    });

    // retrieve
    std::string ret_index, ret_query;
    int ret_topk = 5;
    bool ret_include_failed = false;
    auto* retrieve_cmd = app.add_subcommand("retrieve", "rank an index's captions against a query");
    retrieve_cmd->add_option("index", ret_index, "index JSON from `abstract`")->required();
    retrieve_cmd->add_option("--query", ret_query, "query text")->required();
    retrieve_cmd->add_option("--topk", ret_topk, "results to return")->check(CLI::PositiveNumber);
    retrieve_cmd->add_flag("--include-failed", ret_include_failed, "also rank chunks whose caption failed");
    add_backend_flags(retrieve_cmd, backends);
    retrieve_cmd->callback([&] {
        auto r = resolve_backends(backends);
        auto& embedder = require_role(r.perception.embed, "embed");
        auto index = std::make_shared<const AbstractionIndex>(load_index(ret_index));
        const auto eidx = embed_corpus(index, embedder);
        const auto results = retrieve(eidx, ret_query, ret_topk, embedder, RetrieveOptions{ret_include_failed});
        fmt::print("{}", render_results(results));
        if (const auto regions = aggregate_regions(results); regions.enclosing) {
            fmt::print("enclosing region: {}\n", regions.enclosing->to_string());
        }
    });

    // ask
    std::string ask_image, ask_question, ask_mode = "agent", ask_script, ask_transcript;
    EpisodeConfig ask_config;
    auto* ask_cmd = app.add_subcommand("ask", "answer one question with the agent or the end-to-end baseline");
    ask_cmd->add_option("image", ask_image, "source image")->required();
    ask_cmd->add_option("--question-file", ask_question, "question JSON (id, question, options, answer, ...)")->required();
    ask_cmd->add_option("--mode", ask_mode, "agent or e2e")->check(CLI::IsMember({"agent", "e2e"}));
    ask_cmd->add_option("--script", ask_script, "JSON array of decision-model replies to replay");
    ask_cmd->add_option("--transcript", ask_transcript, "write the episode transcript (JSONL) here");
    ask_cmd->add_option("--max-tool-calls", ask_config.max_tool_calls)->check(CLI::PositiveNumber);
    ask_cmd->add_option("--max-model-turns", ask_config.max_model_turns)->check(CLI::PositiveNumber);
    ask_cmd->add_option("--chunk-num", ask_config.default_chunk_num)->check(CLI::PositiveNumber);
    add_backend_flags(ask_cmd, backends);
    ask_cmd->callback([&] {
        auto r = resolve_backends(backends);
        auto qj = read_json(ask_question);
        if (!qj.contains("image")) qj["image"] = ask_image;
        if (!qj.contains("subset")) qj["subset"] = "satellite";
        if (!qj.contains("level")) qj["level"] = "micro";
        if (!qj.contains("id")) qj["id"] = "q";
        auto q = question_from_json(qj);
        q.image = ask_image;
        EvalConfig config;
        config.mode = parse_eval_mode(ask_mode);
        config.episode = ask_config;
        config.parallelism = 1;
        const auto endpoints = r.endpoints;
        ChatFactory factory = [&](const QuestionRecord&) -> std::unique_ptr<ChatBackend> {
            if (!ask_script.empty()) return std::make_unique<ScriptedChat>(read_script(ask_script));
            if (endpoints) return make_http_chat(*endpoints);
            throw Error(ErrorCode::backend_unavailable, "agent mode needs a chat endpoint or --script");
        };
        const auto run = run_eval({q}, config, r.perception, factory);
        const auto& e = run.episodes.front();
        if (!ask_transcript.empty()) write_text(ask_transcript, transcript_jsonl(e));
        fmt::print("status: {}\nanswer: {}\n", to_string(e.status),
                   e.final_answer ? std::string(1, *e.final_answer) : std::string("none"));
        if (config.mode == EvalMode::agent) {
            for (auto name : kToolNames) fmt::print("  {}: {}\n", name, e.tool_counts.at(std::string(name)));
        }
        if (e.status == EpisodeStatus::backend_failure) status = kExitBackend;
    });

    // eval
    std::string eval_manifest, eval_mode = "agent", eval_out, eval_dir, eval_scripts;
    EvalConfig eval_config;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a question manifest and write an accuracy report");
    eval_cmd->add_option("manifest", eval_manifest, "question manifest (JSONL)")->required();
    eval_cmd->add_option("--mode", eval_mode, "agent or e2e")->check(CLI::IsMember({"agent", "e2e"}));
    eval_cmd->add_option("--out", eval_out, "report JSON to write")->required();
    eval_cmd->add_option("--episodes-dir", eval_dir, "directory for episodes.jsonl and transcripts");
    eval_cmd->add_option("--scripts", eval_scripts, "JSON object: question id -> array of scripted replies");
    eval_cmd->add_option("--parallel", eval_config.parallelism, "concurrent episodes")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--max-tool-calls", eval_config.episode.max_tool_calls)->check(CLI::PositiveNumber);
    eval_cmd->add_option("--max-model-turns", eval_config.episode.max_model_turns)->check(CLI::PositiveNumber);
    add_backend_flags(eval_cmd, backends);
    eval_cmd->callback([&] {
        auto r = resolve_backends(backends);
        const auto questions = load_manifest(eval_manifest);
        eval_config.mode = parse_eval_mode(eval_mode);
        nlohmann::json scripts = nlohmann::json::object();
        if (!eval_scripts.empty()) scripts = read_json(eval_scripts);
        const auto endpoints = r.endpoints;
        ChatFactory factory = [&](const QuestionRecord& q) -> std::unique_ptr<ChatBackend> {
            if (scripts.contains(q.id)) return std::make_unique<ScriptedChat>(scripts.at(q.id).get<std::vector<std::string>>());
            if (endpoints && endpoints->find(BackendRole::chat)) return make_http_chat(*endpoints);
            throw Error(ErrorCode::backend_unavailable, fmt::format("no chat endpoint or script for {}", q.id));
        };
        const auto run = run_eval(questions, eval_config, r.perception, factory);
        write_text(eval_out, serialize_report(run.report));
        if (!eval_dir.empty()) write_episode_artifacts(run, eval_dir);
        const auto& c = run.report.overall;
        fmt::print("{} questions: {} valid, {} correct, {} invalid, {} failed; accuracy {}\n", c.total, c.valid,
                   c.correct, c.invalid, c.failed, c.accuracy() ? fmt::format("{:.4f}", *c.accuracy()) : "n/a");
    });

    // datagen
    std::string dg_image, dg_out, dg_subset = "satellite";
    DatagenConfig dg_config;
    bool dg_no_filter = false;
    auto* datagen_cmd = app.add_subcommand("datagen", "generate candidate questions from an image");
    datagen_cmd->add_option("image", dg_image, "source image")->required();
    datagen_cmd->add_option("--tile", dg_config.tile, "tile size in pixels")->check(CLI::Range(64, 1 << 20));
    datagen_cmd->add_option("--out", dg_out, "candidate manifest (JSONL)")->required();
    datagen_cmd->add_option("--regional", dg_config.compose.regional, "regional questions to compose");
    datagen_cmd->add_option("--global", dg_config.compose.global, "global questions to compose");
    datagen_cmd->add_option("--seed", dg_config.compose.seed, "group sampling seed");
    datagen_cmd->add_option("--subset", dg_subset, "subset tag for the candidates");
    datagen_cmd->add_flag("--no-filter", dg_no_filter, "skip automatic filtering (candidates stay pending-review)");
    add_backend_flags(datagen_cmd, backends);
    datagen_cmd->callback([&] {
        auto r = resolve_backends(backends);
        dg_config.subset = parse_subset(dg_subset);
        auto& generator = require_role(r.perception.vlm, "vlm");
        const auto ref = open_image(dg_image);
        const auto report =
            run_datagen(ref, generator, r.endpoints ? "http-vlm" : "fixture-mock", dg_no_filter ? nullptr : &generator, dg_config);
        std::string lines;
        for (const auto& rec : report.records) lines += to_json(rec).dump() + "\n";
        write_text(dg_out, lines);
        for (const auto& l : report.log) fmt::print(stderr, "{}\n", l);
        fmt::print("{} tiles, {} candidates, {} micro replies rejected, shortfall regional {} global {}\n", report.tiles,
                   report.records.size(), report.micro_rejected, report.regional_shortfall, report.global_shortfall);
    });

    // stats
    std::string st_image;
    bool st_count = false;
    std::vector<std::string> st_vocab;
    std::int64_t st_tile = 1024;
    auto* stats_cmd = app.add_subcommand("stats", "image statistics");
    stats_cmd->add_option("image", st_image, "source image")->required();
    stats_cmd->add_flag("--object-count", st_count, "count grounded objects");
    stats_cmd->add_option("--vocab", st_vocab, "grounding vocabulary")->delimiter(',');
    stats_cmd->add_option("--tile", st_tile, "tile size")->check(CLI::Range(64, 1 << 20));
    add_backend_flags(stats_cmd, backends);
    stats_cmd->callback([&] {
        const auto ref = open_image(st_image);
        fmt::print("{}: {}x{} {}, {} raw tokens\n", st_image, ref.width, ref.height, to_string(ref.format),
                   estimate_raw_tokens(ref, TokenBudget{}));
        if (!st_count) return;
        auto r = resolve_backends(backends);
        auto vocab = st_vocab;
        if (vocab.empty() && !backends.mock.empty()) {
            for (const auto& p : load_fixture_manifest(backends.mock).plants) {
                if (std::find(vocab.begin(), vocab.end(), p.label) == vocab.end()) vocab.push_back(p.label);
            }
        }
        if (vocab.empty()) throw Error(ErrorCode::invalid_argument, "--object-count needs --vocab");
        ObjectCountConfig cfg;
        cfg.tile = st_tile;
        fmt::print("object count: {}\n", object_count(ref, require_role(r.perception.ground, "ground"), vocab, cfg));
    });

    // fixture
    std::uint64_t fx_seed = 42;
    std::string fx_size = "16384x16384", fx_plants, fx_out;
    auto* fixture_cmd = app.add_subcommand("fixture", "write a synthetic marker fixture with plant and question manifests");
    fixture_cmd->add_option("--seed", fx_seed, "generator seed");
    fixture_cmd->add_option("--size", fx_size, "WxH");
    fixture_cmd->add_option("--plants", fx_plants, "plant spec JSON")->required();
    fixture_cmd->add_option("--out", fx_out, "output directory")->required();
    fixture_cmd->callback([&] {
        const auto [w, h] = parse_size(fx_size);
        const auto fx = generate_fixture(fx_seed, w, h, plant_spec_from_json(read_json(fx_plants)), fx_out);
        fmt::print("{} ({}x{}), {} plants, {} questions\n", fx.image_path.string(), w, h, fx.manifest.plants.size(),
                   fx.questions.size());
    });

    // serve-mocks
    int sm_port = 8080;
    std::string sm_host = "127.0.0.1", sm_script;
    auto* serve_cmd = app.add_subcommand("serve-mocks", "serve the mock backends over the /v1 HTTP protocol");
    serve_cmd->add_option("--port", sm_port, "port")->check(CLI::Range(1, 65535));
    serve_cmd->add_option("--host", sm_host, "bind address");
    serve_cmd->add_option("--mock", backends.mock, "plants.json driving mock perception");
    serve_cmd->add_option("--script", sm_script, "JSON array of chat replies to replay");
    serve_cmd->callback([&] {
        auto manifest = std::make_shared<const FixtureManifest>(
            backends.mock.empty() ? FixtureManifest{} : load_fixture_manifest(backends.mock));
        auto vision = std::make_shared<FixtureVision>(manifest);
        std::shared_ptr<ChatBackend> chat;
        if (!sm_script.empty()) chat = std::make_shared<ScriptedChat>(read_script(sm_script));
        else chat = std::make_shared<RuleChat>(std::map<std::string, std::string>{}, std::vector<std::string>{"FINAL ANSWER: A"});
        MockServerOptions options;
        options.host = sm_host;
        options.port = sm_port;
        MockServer server(chat, Backends{vision, vision, vision, std::make_shared<HashEmbedder>()}, options);
        fmt::print("serving mocks on http://{}:{}\n", sm_host, sm_port);
        std::fflush(stdout);
        server.run();
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    } catch (const Error& e) {
        fmt::print(stderr, "error[{}]: {}\n", to_string(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitInvalid;
    }
    return status;
}
