#include "evofsm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "evofsm/reflection.hpp"
#include "evofsm/text.hpp"
#include "json_util.hpp"

namespace evofsm {

namespace fs = std::filesystem;
using namespace detail;

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::EvoFsm: return "evofsm";
        case Mode::Static: return "static";
        case Mode::Rewrite: return "rewrite";
        case Mode::React: return "react";
    }
    return "evofsm";
}

Mode mode_from_string(std::string_view name) {
    const auto n = text::to_lower(name);
    if (n == "evofsm") return Mode::EvoFsm;
    if (n == "static") return Mode::Static;
    if (n == "rewrite") return Mode::Rewrite;
    if (n == "react") return Mode::React;
    throw Error("unknown mode '" + std::string(name) + "' (expected evofsm, static, rewrite or react)");
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

Json to_json(const BenchmarkItem& item) {
    Json j = {{"id", item.id}, {"question", item.question}, {"answer", item.answer}};
    if (!item.metadata.empty()) j["metadata"] = item.metadata;
    return j;
}

std::vector<BenchmarkItem> parse_dataset(std::string_view jsonl) {
    std::vector<BenchmarkItem> items;
    std::set<std::string> ids;
    std::size_t line_no = 0;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto path = fmt::format("line {}", line_no);
        const auto j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) throw SchemaError(path, "invalid JSON");
        require_object(j, path);
        BenchmarkItem item;
        item.id = as_string(require_field(j, "id", path), child(path, "id"));
        item.question = as_string(require_field(j, "question", path), child(path, "question"));
        item.answer = as_string(require_field(j, "answer", path), child(path, "answer"));
        if (auto it = j.find("metadata"); it != j.end()) item.metadata = *it;
        if (item.id.empty()) throw SchemaError(child(path, "id"), "empty id");
        if (!ids.insert(item.id).second) throw SchemaError(child(path, "id"), "duplicate id '" + item.id + "'");
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<BenchmarkItem> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageFailure("cannot read dataset " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_dataset(buffer.str());
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kReactSystem =
    "You answer research questions by alternating reasoning and tool use.\n"
    "Tools: search (input: a web query) and browse (input: a URL). Request a tool with a fenced block:\n"
    "```tool\n{\"name\": \"search\", \"input\": \"...\"}\n```\n"
    "When you can answer, reply with a line starting with FINAL ANSWER: followed by the answer.";

constexpr std::string_view kFinalMarker = "FINAL ANSWER:";

std::string extract_final(std::string_view text) {
    const auto pos = text.find(kFinalMarker);
    if (pos == std::string_view::npos) return text::trim(strip_tool_blocks(text));
    auto rest = text.substr(pos + kFinalMarker.size());
    const auto nl = rest.find('\n');
    return text::trim(rest.substr(0, nl));
}

}  // namespace

Trajectory run_react(std::string_view query, const Backends& backends, const RunLimits& limits, ToolLog* log) {
    Trajectory t;
    t.query = std::string(query);
    ToolLog local;
    ToolLog& sink = log ? *log : local;
    auto& agent = backends.for_role("react");

    ChatRequest request;
    request.role_label = "react";
    request.messages = {{"system", kReactSystem}, {"user", "QUERY: " + std::string(query)}};

    while (true) {
        if (t.steps.size() >= limits.max_steps) {
            t.halted_reason = HaltReason::StepCap;
            break;
        }
        ChatReply reply;
        try {
            reply = agent.chat(request);
        } catch (const std::exception& e) {
            t.halted_reason = HaltReason::Error;
            t.error = e.what();
            break;
        }
        StepRecord step;
        step.index = t.steps.size();
        step.state_id = "ReAct";
        step.agent_output = strip_tool_blocks(reply.text);

        const bool final = text::contains(reply.text, kFinalMarker);
        if (final || reply.tool_calls.empty()) {
            t.steps.push_back(step);
            t.visit_counts["ReAct"] += 1;
            t.final_answer = extract_final(reply.text);
            t.halted_reason = HaltReason::Terminal;
            break;
        }

        std::string report;
        std::size_t call_no = 0;
        for (const auto& call : reply.tool_calls) {
            ToolCallRecord rec;
            rec.tool = call.name;
            rec.input = call.input;
            if (call_no >= limits.max_tool_calls || !backends.tools.has(call.name)) {
                rec.refused = true;
                rec.note = "REFUSED: tool '" + call.name + "' is not available";
            } else {
                try {
                    const auto output = render_tool_results(backends.tools.call(call.name, call.input));
                    rec.output_hash = text::hash_hex(output);
                    rec.output_preview = text::truncate_utf8(output, kPreviewChars);
                    sink.entries.push_back({step.index, call_no, call.name, call.input, output});
                    report += "TOOL " + call.name + "(" + call.input + ") -> " +
                              text::truncate_utf8(output, limits.tool_output_chars) + "\n\n";
                } catch (const BackendFailure& e) {
                    rec.failed = true;
                    rec.note = std::string("ERROR: ") + e.what();
                }
            }
            if (rec.refused || rec.failed) report += "TOOL " + call.name + "(" + call.input + ") -> " + rec.note + "\n\n";
            step.tool_calls.push_back(std::move(rec));
            ++call_no;
        }
        t.steps.push_back(step);
        t.visit_counts["ReAct"] += 1;
        request.messages.push_back({"assistant", reply.text});
        request.messages.push_back({"tool", "TOOL RESULTS:\n" + report});
    }
    return t;
}

Episode run_episode(const FsmConfig& default_config, std::string_view query, const Backends& backends,
                    const HarnessOptions& options) {
    Episode ep;
    ep.query = std::string(query);
    ep.initial_config = default_config;

    switch (options.mode) {
        case Mode::React: {
            auto& out = ep.outcome;
            out.final_config = default_config;
            out.final_trajectory = run_react(query, backends, options.limits.run, &out.final_tool_log);
            out.succeeded = out.final_trajectory.final_answer.has_value();
            out.stop_reason = "react loop finished";
            break;
        }
        case Mode::Static: {
            auto limits = options.limits;
            limits.max_iterations = 0;
            ep.outcome = evolve(default_config, query, backends, limits);
            break;
        }
        case Mode::Rewrite:
            ep.outcome = evolve(default_config, query, backends, options.limits, {}, EvolutionMode::Rewrite);
            break;
        case Mode::EvoFsm: {
            std::vector<ExperienceRecord> retrieved;
            if (options.pool) {
                WarmStartParams warm = options.warm;
                warm.max_states = options.limits.max_states;
                auto ws = warm_start(default_config, query, *options.pool, *backends.embedder, warm);
                ep.initial_config = std::move(ws.config);
                ep.prior_id = ws.prior_id;
                for (const auto& hit : ws.retrieved) retrieved.push_back(hit.record);
            }
            ep.outcome = evolve(ep.initial_config, query, backends, options.limits, retrieved);
            if (options.pool) {
                auto record = reflect(ep.outcome, query, *backends.embedder, backends.for_role("reflector"));
                ep.record_id = options.pool->add_record(std::move(record)).id;
            }
            break;
        }
    }
    ep.answer = ep.outcome.final_trajectory.final_answer;
    return ep;
}

bool exact_match(std::string_view answer, std::string_view gold) {
    const auto g = text::normalize_answer(gold);
    return !g.empty() && text::normalize_answer(answer) == g;
}

bool judge_match(std::string_view question, std::string_view answer, std::string_view gold, ChatBackend& judge) {
    ChatRequest request;
    request.role_label = "judge";
    request.messages = {
        {"system", "Decide whether the answer matches the gold answer. Reply CORRECT or INCORRECT."},
        {"user", fmt::format("QUESTION: {}\nGOLD: {}\nANSWER: {}\n", question, gold, answer)}};
    const auto reply = text::trim(judge.chat(request).text);
    return reply.rfind("CORRECT", 0) == 0;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

Json optional_json(const std::optional<std::string>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json to_json(const ItemReport& r) {
    Json j = {{"id", r.id},
              {"question", r.question},
              {"gold", r.gold},
              {"answer", optional_json(r.answer)},
              {"correct", r.correct},
              {"verdicts", r.verdicts},
              {"iterations_used", r.iterations_used},
              {"op_counts", r.op_counts},
              {"halted_reason", r.halted_reason},
              {"steps", r.steps},
              {"prior_id", optional_json(r.prior_id)}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

Json to_json(const RunReport& r) {
    Json items = Json::array();
    for (const auto& i : r.items) items.push_back(to_json(i));
    Json j = {{"mode", r.mode},
              {"workers", r.workers},
              {"total", r.total},
              {"correct", r.correct},
              {"accuracy", r.accuracy ? Json(*r.accuracy) : Json(nullptr)},
              {"mean_iterations", r.mean_iterations},
              {"mean_steps", r.mean_steps},
              {"mean_ops", r.mean_ops},
              {"items", items}};
    if (r.timestamp) j["timestamp"] = *r.timestamp;
    return j;
}

std::string format_accuracy(const std::optional<double>& accuracy) {
    return accuracy ? fmt::format("{:.3f}", *accuracy) : "n/a";
}

std::string render_table(const RunReport& r) {
    std::size_t id_w = 2;
    for (const auto& i : r.items) id_w = std::max(id_w, i.id.size());
    std::string out = fmt::format("{:<{}}  {:<7}  {:>4}  {:>5}  {:>3}  {:<13}  {}\n", "id", id_w, "correct", "iter",
                                  "steps", "ops", "halted", "answer");
    for (const auto& i : r.items) {
        int ops = 0;
        for (const auto& [k, n] : i.op_counts) ops += n;
        const auto answer = i.error.empty() ? i.answer.value_or("-") : "ERROR: " + i.error;
        out += fmt::format("{:<{}}  {:<7}  {:>4}  {:>5}  {:>3}  {:<13}  {}\n", i.id, id_w, i.correct ? "yes" : "no",
                           i.iterations_used, i.steps, ops, i.halted_reason, text::truncate_utf8(answer, 60));
    }
    out += fmt::format("mode={} items={} correct={} accuracy={} mean_iterations={:.2f} mean_steps={:.2f} mean_ops={:.2f}\n",
                       r.mode, r.total, r.correct, format_accuracy(r.accuracy), r.mean_iterations, r.mean_steps,
                       r.mean_ops);
    return out;
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

namespace {

ItemReport run_item(const BenchmarkItem& item, const FsmConfig& cfg, const Backends& backends,
                    const HarnessOptions& options) {
    ItemReport r;
    r.id = item.id;
    r.question = item.question;
    r.gold = item.answer;
    try {
        const auto ep = run_episode(cfg, item.question, backends, options);
        const auto& out = ep.outcome;
        r.answer = ep.answer;
        for (const auto& v : out.verdicts) r.verdicts.push_back(v.passed);
        r.iterations_used = out.iterations_used;
        for (const auto& e : out.op_log) r.op_counts[std::string(to_string(e.op.kind()))] += 1;
        r.halted_reason = std::string(to_string(out.final_trajectory.halted_reason));
        r.steps = out.final_trajectory.steps.size();
        r.prior_id = ep.prior_id;
        if (r.answer) {
            r.correct = options.judge ? judge_match(item.question, *r.answer, item.answer, backends.for_role("judge"))
                                      : exact_match(*r.answer, item.answer);
        }
    } catch (const std::exception& e) {
        spdlog::error("item {}: {}", item.id, e.what());
        r.error = e.what();
        r.correct = false;
    }
    return r;
}

}  // namespace

RunReport run_bench(const std::vector<BenchmarkItem>& items, const FsmConfig& default_config,
                    const BackendFactory& factory, const HarnessOptions& options) {
    RunReport report;
    report.mode = std::string(to_string(options.mode));
    report.workers = std::max<std::size_t>(1, options.workers);
    report.items.resize(items.size());

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr setup_error;
    auto worker = [&] {
        Backends backends;
        try {
            backends = factory();
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!setup_error) setup_error = std::current_exception();
            return;
        }
        for (std::size_t i = next++; i < items.size(); i = next++) {
            report.items[i] = run_item(items[i], default_config, backends, options);
        }
    };
    const auto n = std::min(report.workers, std::max<std::size_t>(1, items.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < n; ++w) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }
    if (setup_error) std::rethrow_exception(setup_error);

    report.total = items.size();
    double iters = 0, steps = 0, ops = 0;
    for (const auto& r : report.items) {
        if (r.correct) ++report.correct;
        iters += r.iterations_used;
        steps += static_cast<double>(r.steps);
        for (const auto& [k, c] : r.op_counts) ops += c;
    }
    if (report.total > 0) {
        const auto t = static_cast<double>(report.total);
        report.accuracy = static_cast<double>(report.correct) / t;
        report.mean_iterations = iters / t;
        report.mean_steps = steps / t;
        report.mean_ops = ops / t;
    }
    return report;
}

std::vector<SweepRow> run_sweep(const std::vector<BenchmarkItem>& items, const FsmConfig& default_config,
                                const BackendFactory& factory, const std::vector<int>& caps, HarnessOptions options) {
    std::vector<SweepRow> rows;
    options.mode = Mode::EvoFsm;
    options.pool = nullptr;  // each cap starts from the same empty memory
    for (int cap : caps) {
        options.limits.max_iterations = cap;
        const auto report = run_bench(items, default_config, factory, options);
        rows.push_back({cap, report.accuracy, report.mean_ops});
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "cap,accuracy,mean_ops\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{:.3f}\n", r.cap, r.accuracy ? fmt::format("{:.4f}", *r.accuracy) : "", r.mean_ops);
    }
    return out;
}

std::string run_id(const FsmConfig& config, std::string_view input, Mode mode, std::optional<std::int64_t> seed) {
    const Json key = {{"config", config_hash(config)},
                      {"input", std::string(input)},
                      {"mode", std::string(to_string(mode))},
                      {"seed", seed ? Json(*seed) : Json(nullptr)}};
    return "run-" + text::hash_hex(key.dump());
}

void write_run_directory(const Episode& episode, const std::string& dir) {
    const fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw StorageFailure("cannot create " + dir + ": " + ec.message());
    auto write = [](const fs::path& path, const std::string& content) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw StorageFailure("cannot write " + path.string());
        out << content;
        if (!out) throw StorageFailure("write failed for " + path.string());
    };
    const auto& out = episode.outcome;

    write(root / "trajectory.json", to_json(out.final_trajectory).dump(2) + "\n");
    Json verdicts = Json::array();
    for (const auto& v : out.verdicts) verdicts.push_back(to_json(v));
    write(root / "verdicts.json", verdicts.dump(2) + "\n");
    std::string oplog;
    for (const auto& e : out.op_log) oplog += to_json(e).dump() + "\n";
    write(root / "oplog.jsonl", oplog);
    write(root / "final_config.json", serialize_config(out.final_config));
    write(root / "initial_config.json", serialize_config(episode.initial_config));
    std::string tools;
    for (const auto& p : out.final_tool_log.entries) tools += to_json(p).dump() + "\n";
    write(root / "tool_log.jsonl", tools);

    const Json summary = {{"query", episode.query},
                          {"answer", optional_json(episode.answer)},
                          {"succeeded", out.succeeded},
                          {"iterations_used", out.iterations_used},
                          {"stop_reason", out.stop_reason},
                          {"halted_reason", to_string(out.final_trajectory.halted_reason)},
                          {"steps", out.final_trajectory.steps.size()},
                          {"ops_applied", out.op_log.size()},
                          {"prior_id", optional_json(episode.prior_id)},
                          {"record_id", optional_json(episode.record_id)}};
    write(root / "summary.json", summary.dump(2) + "\n");
}

}  // namespace evofsm
