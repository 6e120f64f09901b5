#include "evofsm/scenarios.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>

#include "evofsm/text.hpp"

namespace evofsm::scenarios {

namespace fs = std::filesystem;

std::string_view to_string(ItemKind kind) {
    switch (kind) {
        case ItemKind::Easy: return "easy";
        case ItemKind::Verify: return "verify";
        case ItemKind::Precision: return "precision";
        case ItemKind::VerifyPrecision: return "verify+precision";
        case ItemKind::LegalVerify: return "legal-verify";
    }
    return "easy";
}

bool ItemSpec::needs_verifier() const {
    return kind == ItemKind::Verify || kind == ItemKind::VerifyPrecision || kind == ItemKind::LegalVerify;
}

bool ItemSpec::needs_precision() const {
    return kind == ItemKind::Precision || kind == ItemKind::VerifyPrecision;
}

namespace {

bool has_digit(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

}  // namespace

void finalize(ItemSpec& it) {
    const auto year = std::to_string(it.year);
    if (it.refined_query.empty()) it.refined_query = fmt::format("{} {} {} annual report pdf", it.subject, it.metric, year);
    if (it.answer_url.empty()) it.answer_url = fmt::format("https://data.example.org/{}/{}-annual-report", it.id, year);
    if (it.answer_title.empty()) it.answer_title = fmt::format("{} {} annual report", capitalize(it.subject), year);
    if (it.generic_url.empty()) it.generic_url = fmt::format("https://news.example.com/{}-overview", it.id);
    if (it.generic_title.empty()) it.generic_title = fmt::format("{}: an overview", capitalize(it.subject));
    if (it.answer_marker.empty()) it.answer_marker = fmt::format("In {}, the {} of {} was {}.", year, it.metric, it.subject, it.gold);
    if (it.generic_marker.empty()) it.generic_marker = fmt::format("Background coverage of {}.", it.subject);
    if (it.exact_finding.empty()) it.exact_finding = fmt::format("the {} report gives the {} as {}", year, it.metric, it.gold);
    if (it.vague_finding.empty()) it.vague_finding = fmt::format("the report calls the {} {}", it.metric, it.vague);
    if (it.vague_answer.empty()) it.vague_answer = fmt::format("The {} was {}.", it.metric, it.vague);
    if (it.missing_note.empty())
        it.missing_note = fmt::format("the source discusses {} only in general terms and gives no {} figure", it.subject, year);

    if (!has_digit(it.gold)) throw Error("fixture item " + it.id + ": gold answer needs a figure");
    if (has_digit(it.vague_answer)) throw Error("fixture item " + it.id + ": vague answer must be digit-free");
    if (text::contains(it.vague_finding, it.exact_finding) || text::contains(it.exact_finding, it.vague_finding))
        throw Error("fixture item " + it.id + ": findings overlap");
}

// ---------------------------------------------------------------------------
// Machines and operations
// ---------------------------------------------------------------------------

FsmConfig default_research_config() {
    FsmConfig c;
    c.initial_state = "Search";
    c.states = {
        {"Search", "Search",
         "Search the web for sources that answer the query. If the recent context proposes a refined query, "
         "search for that refined query instead.",
         {"search"}, false, Json::object()},
        {"Browsing", "Browsing",
         "Open the most relevant source from the search results and report what it says about the query. "
         "Begin with FOUND: if the page answers the query, otherwise MISSING:.",
         {"browse"}, false, Json::object()},
        {"Analysis", "Analysis",
         "Write the final answer to the query from the evidence gathered so far. State the figure and its unit.",
         {}, true, Json::object()},
    };
    c.transitions = {
        {"t_search_browsing", "Search", "Browsing", ConditionSpec::when("evidence_count_at_least", Json::array({1})), 0,
         Json::object()},
        {"t_search_analysis", "Search", "Analysis", ConditionSpec::always(), 1, Json::object()},
        {"t_browsing_analysis", "Browsing", "Analysis", ConditionSpec::when("last_output_contains", Json::array({"FOUND:"})),
         0, Json::object()},
        {"t_browsing_search", "Browsing", "Search", ConditionSpec::always(), 1, Json::object()},
    };
    return c;
}

namespace {

Json transition_json(const std::string& id, const std::string& from, const std::string& to, int priority,
                     const Json& condition) {
    return {{"id", id}, {"from", from}, {"to", to}, {"priority", priority}, {"condition", condition}};
}

const Json kAlways = {{"kind", "always"}};

Json contains_condition(const std::string& needle) {
    return {{"kind", "predicate"}, {"predicate", "last_output_contains"}, {"args", Json::array({needle})}};
}

Json splice_verifier(const std::string& id, const std::string& instruction, const std::string& prefix,
                     const std::string& rationale) {
    return {{"op", "ADD_STATE"},
            {"state",
             {{"id", id}, {"name", id}, {"instruction", instruction}, {"allowed_tools", Json::array()}, {"is_terminal", false}}},
            {"replaces", Json::array({"t_browsing_analysis", "t_browsing_search"})},
            {"inbound", Json::array({transition_json("t_browsing_" + prefix, "Browsing", id, 0, kAlways)})},
            {"outbound", Json::array({transition_json("t_" + prefix + "_analysis", id, "Analysis", 0,
                                                      contains_condition("VERIFIED")),
                                      transition_json("t_" + prefix + "_search", id, "Search", 1, kAlways)})},
            {"rationale", rationale}};
}

Json legal_verifier_op_json() {
    return splice_verifier(
        "Legal_Verifier",
        "Check that the latest browsing output comes from the primary legal text and states the date precisely. "
        "If it does, reply VERIFIED with the date. Otherwise say which primary source is still needed.",
        "legal", "Secondary commentary gives conflicting dates; legal claims must be checked against the primary text.");
}

Json search_refinement_op_json() {
    return {{"op", "REVISE_INSTRUCTION"},
            {"state_id", "Search"},
            {"append", "Prefer primary legal sources: add 'eur-lex official text' to every search query."},
            {"rationale", "Searches returned only commentary; steer them towards the official text."}};
}

std::string fenced_json(const Json& j) { return "```json\n" + j.dump(2) + "\n```"; }

std::string tool(const std::string& name, const std::string& input) { return render_tool_call({name, input}); }

ScriptRule rule(std::string role, std::vector<std::string> contains, std::vector<std::string> last, std::string reply,
                std::vector<std::string> absent = {}) {
    ScriptRule r;
    r.role = std::move(role);
    r.contains = std::move(contains);
    r.last_contains = std::move(last);
    r.absent = std::move(absent);
    r.reply = std::move(reply);
    return r;
}

constexpr const char* kFirstCall = "RECENT CONTEXT:";
constexpr const char* kToolTurn = "TOOL RESULTS:";

std::string critic_json(bool passed, const std::string& code, const std::string& detail, const std::string& rationale) {
    Json modes = Json::array();
    if (!code.empty()) modes.push_back({{"code", code}, {"detail", detail}});
    return Json{{"passed", passed}, {"failure_modes", modes}, {"rationale", rationale}}.dump();
}

std::vector<std::string> query_variants(const ItemSpec& it) {
    std::vector<std::string> out{it.query};
    if (!it.paraphrase.empty()) out.push_back(it.paraphrase);
    return out;
}

void add_item_rules(std::vector<ScriptRule>& rules, const ItemSpec& it) {
    // Search: a refined query proposed by a verifier wins over the original question.
    if (it.kind == ItemKind::LegalVerify) {
        rules.push_back(rule("agent", {"STATE: Search", "QUERY: " + it.query, "eur-lex official text"}, {kFirstCall},
                             tool("search", it.refined_query)));
    }
    if (it.needs_verifier()) {
        rules.push_back(rule("agent", {"STATE: Search", "Refining query to '" + it.refined_query + "'"}, {kFirstCall},
                             tool("search", it.refined_query)));
    }
    for (const auto& q : query_variants(it)) {
        rules.push_back(rule("agent", {"STATE: Search", "QUERY: " + q}, {kFirstCall}, tool("search", q)));
    }

    // Browsing: open the best link in context, then report on the page.
    rules.push_back(rule("agent", {"STATE: Browsing", it.answer_url}, {kFirstCall}, tool("browse", it.answer_url)));
    if (it.needs_verifier()) {
        rules.push_back(rule("agent", {"STATE: Browsing", it.generic_url}, {kFirstCall}, tool("browse", it.generic_url)));
    }
    rules.push_back(rule("agent", {"STATE: Browsing", "Do not summarize numerical data"}, {kToolTurn, it.answer_marker},
                         "FOUND: " + it.exact_finding));
    rules.push_back(rule("agent", {"STATE: Browsing"}, {kToolTurn, it.answer_marker},
                         "FOUND: " + (it.needs_precision() ? it.vague_finding : it.exact_finding)));
    rules.push_back(rule("agent", {"STATE: Browsing"}, {kToolTurn, it.generic_marker}, "MISSING: " + it.missing_note));

    // Verifier: refine the query when browsing came back empty-handed.
    if (it.needs_verifier() && it.kind != ItemKind::LegalVerify) {
        rules.push_back(rule("agent", {"STATE: Verifier", "MISSING: " + it.missing_note},
                             {kFirstCall},
                             "Evidence insufficient: the source has no date-specific figure. Refining query to '" +
                                 it.refined_query + "'",
                             {"FOUND:"}));
    }

    // Analysis: answer from whatever the browsing step reported.
    rules.push_back(rule("agent", {"STATE: Analysis", "FOUND: " + it.exact_finding}, {kFirstCall}, it.gold));
    rules.push_back(rule("agent", {"STATE: Analysis", "FOUND: " + it.vague_finding}, {kFirstCall}, it.vague_answer));

    // ReAct baseline: searches the question once and answers from the first page it reads.
    for (const auto& q : query_variants(it)) {
        rules.push_back(rule("react", {}, {"QUERY: " + q}, tool("search", q)));
    }
    rules.push_back(rule("react", {}, {kToolTurn, it.answer_marker},
                         "FINAL ANSWER: " + (it.kind == ItemKind::Easy ? it.gold : it.vague_answer)));
    rules.push_back(rule("react", {}, {kToolTurn, it.answer_url}, tool("browse", it.answer_url)));
    rules.push_back(rule("react", {}, {kToolTurn, it.generic_marker},
                         "FINAL ANSWER: The sources do not give a specific figure."));
    rules.push_back(rule("react", {}, {kToolTurn, it.generic_url}, tool("browse", it.generic_url)));

    // Opt-in judge scoring.
    rules.push_back(rule("judge", {"GOLD: " + it.gold + "\n", "ANSWER: " + it.gold + "\n"}, {}, "CORRECT"));
}

void add_generic_rules(std::vector<ScriptRule>& rules) {
    rules.push_back(rule("agent", {"STATE: Search"}, {kToolTurn}, "Collected candidate sources for the query."));
    rules.push_back(rule("agent", {"STATE: Browsing"}, {kToolTurn}, "MISSING: the page could not be read."));
    rules.push_back(rule("agent", {"STATE: Verifier", "FOUND:"}, {kFirstCall},
                         "VERIFIED: the figure is stated explicitly in a date-matched source."));
    rules.push_back(rule("agent", {"STATE: Verifier"}, {kFirstCall}, "Evidence insufficient; search again for a primary source."));
    rules.push_back(rule("agent", {"STATE: Legal_Verifier", "FOUND:"}, {kFirstCall},
                         "VERIFIED: the date is confirmed against the primary legal text."));
    rules.push_back(rule("agent", {"STATE: Legal_Verifier"}, {kFirstCall},
                         "Only secondary commentary so far; the primary legal text is still needed."));
    rules.push_back(rule("agent", {"STATE: Analysis"}, {kFirstCall}, "Unable to determine the answer from the gathered evidence."));
    rules.push_back(rule("agent", {}, {}, "No further action is possible for this request."));

    ScriptRule unable = rule("critic", {"FINAL ANSWER: Unable"}, {},
                             critic_json(false, "INCOMPLETE_REASONING", "the answer gives up",
                                         "No answer was derived from the evidence."));
    rules.push_back(unable);
    ScriptRule pass = rule("critic", {}, {}, critic_json(true, "", "", "The answer states a specific figure supported by the evidence digest."));
    pass.pattern = "FINAL ANSWER: [^\\n]*[0-9]";
    rules.push_back(pass);
    rules.push_back(rule("critic", {}, {},
                         critic_json(false, "QUANT_EVIDENCE_MISSING", "the answer gives no specific figure with a unit",
                                     "The query asks for a quantity but the answer only characterizes it.")));

    rules.push_back(rule("proposer", {"- LOOP:"}, {}, fenced_json(Json::array({verifier_op_json()})), {"\n  Verifier: "}));
    rules.push_back(rule("proposer", {"- QUANT_EVIDENCE_MISSING:"}, {}, fenced_json(Json::array({precision_op_json()}))));
    rules.push_back(rule("proposer", {}, {},
                         "The workflow should be reorganized around a stronger research phase with better sources."));

    Json rewrite = {{"Search", "Search thoroughly for authoritative sources that answer the query."},
                    {"Browsing", "Open the most relevant source and report on it. Begin with FOUND: if the page answers "
                                 "the query, otherwise MISSING:. " + std::string(kPrecisionClause)},
                    {"Analysis", "Write a precise final answer with the figure and its unit."}};
    rules.push_back(rule("rewriter", {}, {}, fenced_json(rewrite)));

    rules.push_back(rule("reflector", {"ADD_STATE(Verifier)"}, {},
                         "Inserting a Verifier between Browsing and Analysis rejected evidence without a date-specific "
                         "figure and refined the search query, which ended the Search-Browsing loop."));
    rules.push_back(rule("reflector", {"ADD_STATE(Legal_Verifier)"}, {},
                         "Legal questions needed a verifier against the primary legal text and searches aimed at the "
                         "official journal."));
    rules.push_back(rule("reflector", {"REVISE_INSTRUCTION(Browsing)"}, {},
                         "Browsing summarized figures away; quoting exact values with units fixed the answer."));
    rules.push_back(rule("reflector", {"OUTCOME: SUCCESS"}, {}, "The default workflow answered directly."));
    rules.push_back(rule("reflector", {}, {}, "The workflow failed to collect specific evidence for this query."));

    rules.push_back(rule("judge", {}, {}, "INCORRECT"));
    rules.push_back(rule("react", {}, {}, "FINAL ANSWER: Unable to determine."));
    rules.push_back(rule("router", {}, {}, "NONE"));
}

void add_item_corpus(Json& corpus, const ItemSpec& it) {
    const Json answer_hit = {{"title", it.answer_title}, {"link", it.answer_url},
                             {"snippet", "Official statistics on " + it.subject + "."}};
    const Json generic_hit = {{"title", it.generic_title}, {"link", it.generic_url},
                              {"snippet", "Background on " + it.subject + "."}};
    for (const auto& q : query_variants(it)) {
        corpus["searches"].push_back({{"query", q}, {"results", Json::array({it.needs_verifier() ? generic_hit : answer_hit})}});
    }
    if (it.needs_verifier()) {
        corpus["searches"].push_back({{"query", it.refined_query}, {"results", Json::array({answer_hit})}});
        corpus["pages"].push_back(
            {{"url", it.generic_url},
             {"text", it.generic_title + "\n" + it.generic_marker + " The article discusses long-term trends in the " +
                          it.metric + " but quotes no figures for any specific year."}});
    }
    corpus["pages"].push_back(
        {{"url", it.answer_url},
         {"text", it.answer_title + "\n" + it.answer_marker + " The figure is taken from audited statistics and is final."}});
}

Scenario assemble(std::string name, std::vector<ItemSpec> items, std::vector<ScriptRule> leading_rules = {}) {
    Scenario s;
    s.name = std::move(name);
    s.default_config = default_research_config();
    s.corpus = {{"searches", Json::array()}, {"pages", Json::array()}};
    s.rules = std::move(leading_rules);
    for (auto& it : items) {
        finalize(it);
        add_item_rules(s.rules, it);
        add_item_corpus(s.corpus, it);
    }
    add_generic_rules(s.rules);

    auto& main = s.datasets["dataset"];
    for (const auto& it : items) {
        main.push_back({it.id, it.query, it.gold, {{"kind", to_string(it.kind)}, {"scenario", s.name}}});
    }
    s.items = std::move(items);
    return s;
}

ItemSpec suite_item(std::string id, ItemKind kind, std::string query, std::string paraphrase, std::string subject,
                    std::string metric, int year, std::string gold, std::string vague) {
    ItemSpec it;
    it.id = std::move(id);
    it.kind = kind;
    it.query = std::move(query);
    it.paraphrase = std::move(paraphrase);
    it.subject = std::move(subject);
    it.metric = std::move(metric);
    it.year = year;
    it.gold = std::move(gold);
    it.vague = std::move(vague);
    return it;
}

}  // namespace

Json verifier_op_json() {
    return splice_verifier(
        "Verifier",
        "Check that the latest browsing output states a specific, date-matched figure taken from the source. If it "
        "does, reply VERIFIED with the figure. Otherwise explain what is missing and propose a refined search query.",
        "verifier",
        "The run loops between Search and Browsing without date-specific evidence; a verification state can reject "
        "weak evidence and refine the query.");
}

Json precision_op_json() {
    return {{"op", "REVISE_INSTRUCTION"},
            {"state_id", "Browsing"},
            {"append", kPrecisionClause},
            {"rationale", "The answer summarized quantitative evidence instead of quoting it."}};
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

Scenario case1() {
    ItemSpec it;
    it.id = "three-gorges-2023";
    it.kind = ItemKind::Verify;
    it.query = "How much electricity did the Three Gorges Dam generate in 2023 according to its annual report?";
    it.paraphrase = "According to its annual report, how much electricity did the Three Gorges Dam generate in 2023?";
    it.subject = "the Three Gorges Dam";
    it.metric = "annual power generation";
    it.year = 2023;
    it.gold = "80.3 TWh";
    it.vague = "substantial";
    it.refined_query = "Three Gorges Dam annual report 2023 pdf";
    it.answer_url = "https://reports.example.org/three-gorges/2023-annual-environmental-report.pdf";
    it.answer_title = "Three Gorges Dam 2023 Annual Environmental Report";
    it.generic_url = "https://news.example.com/three-gorges-dam-overview";
    it.generic_title = "The Three Gorges Dam: facts and history";
    return assemble("case1", {it});
}

Scenario case2() {
    ItemSpec it;
    it.id = "tesla-4680";
    it.kind = ItemKind::Precision;
    it.query = "What is the energy density of Tesla's 4680 battery cell?";
    it.subject = "Tesla's 4680 battery cell";
    it.metric = "energy density";
    it.year = 2022;
    it.gold = "260 Wh/kg";
    it.vague = "high";
    it.answer_url = "https://teardown.example.org/tesla-4680-cell-analysis";
    it.answer_title = "Tesla 4680 cell teardown and analysis";
    it.answer_marker = "The teardown measured a cell-level energy density of 260 Wh/kg for Tesla's 4680 battery cell.";
    it.exact_finding = "the teardown measured a cell-level energy density of 260 Wh/kg";
    it.vague_finding = "the analysis says the cell offers high energy density and good thermal behaviour";
    it.vague_answer = "Tesla's new cell has high energy density.";
    return assemble("case2", {it});
}

Scenario case3() {
    ItemSpec it;
    it.id = "eu-ai-act-gpai";
    it.kind = ItemKind::LegalVerify;
    it.query = "From what date do the EU AI Act obligations for providers of general-purpose AI models apply?";
    it.subject = "the EU AI Act";
    it.metric = "application date of the obligations for general-purpose AI model providers";
    it.year = 2024;
    it.gold = "2 August 2025";
    it.vague = "soon";
    it.refined_query = "EU AI Act general-purpose AI model obligations eur-lex official text";
    it.answer_url = "https://eur-lex.example.eu/eli/reg/2024/1689/oj";
    it.answer_title = "Regulation (EU) 2024/1689 (Artificial Intelligence Act), official text";
    it.answer_marker =
        "Article 113: the obligations for providers of general-purpose AI models apply from 2 August 2025.";
    it.exact_finding = "Article 113 sets 2 August 2025 as the date from which obligations for general-purpose AI model providers apply";
    it.vague_finding = "the regulation says the obligations apply after a transition period";
    it.vague_answer = "The obligations apply after a transition period.";
    it.generic_url = "https://blog.example.com/ai-act-timeline";
    it.generic_title = "AI Act timeline: what we know so far";
    it.generic_marker = "Commentators disagree on when obligations for general-purpose AI models start.";
    it.missing_note = "only secondary commentary with conflicting dates; the primary legal text was not consulted";

    std::vector<ScriptRule> leading;
    leading.push_back(rule("proposer", {"QUERY: " + it.query, "- LOOP:"}, {},
                           fenced_json(Json::array({legal_verifier_op_json(), search_refinement_op_json()})),
                           {"\n  Legal_Verifier: "}));
    return assemble("case3", {it}, std::move(leading));
}

Scenario synthetic_suite() {
    using K = ItemKind;
    std::vector<ItemSpec> items = {
        suite_item("v01", K::Verify, "How much electricity did the Kestrel Valley wind farm generate in 2022?",
                   "How much electricity was generated by the Kestrel Valley wind farm in 2022?",
                   "the Kestrel Valley wind farm", "annual electricity output", 2022, "412 GWh", "substantial"),
        suite_item("v02", K::Verify, "What container throughput did the Port of Halvern handle in 2021?",
                   "Which container throughput figure did the Port of Halvern handle in 2021?", "the Port of Halvern",
                   "container throughput", 2021, "3.8 million TEU", "strong"),
        suite_item("v03", K::Verify, "What was Lake Morrow's average surface temperature in 2020?",
                   "What average surface temperature did Lake Morrow have in 2020?", "Lake Morrow",
                   "average surface temperature", 2020, "14.6 degrees Celsius", "mild"),
        suite_item("v04", K::Verify, "How much drinking water per day did the Brightwater desalination plant produce in 2023?",
                   "How much drinking water per day was produced by the Brightwater desalination plant in 2023?",
                   "the Brightwater desalination plant", "daily water production", 2023, "250000 cubic meters",
                   "large"),
        suite_item("v05", K::Verify, "How many passengers rode Northgate Rail trains during 2019?",
                   "During 2019, how many passengers rode Northgate Rail trains?", "Northgate Rail", "annual ridership",
                   2019, "61.2 million passengers", "high"),
        suite_item("v06", K::Verify, "What tonnage of copper ore concentrate did the Solenne mine ship in 2022?",
                   "In 2022, what tonnage of copper ore concentrate did the Solenne mine ship?", "the Solenne mine",
                   "copper concentrate shipments", 2022, "182000 tonnes", "significant"),
        suite_item("v07", K::Verify, "How many seabird breeding pairs were counted at the Arden coastal reserve in 2021?",
                   "At the Arden coastal reserve, how many seabird breeding pairs were counted in 2021?",
                   "the Arden coastal reserve", "seabird breeding pair count", 2021, "9400 pairs", "stable"),
        suite_item("v08", K::Verify, "How many observing hours did the Verity telescope array log in 2020?",
                   "For 2020, what total of observing hours did the Verity telescope array log?",
                   "the Verity telescope array", "observing hours", 2020, "5120 hours", "extensive"),
        suite_item("w01", K::VerifyPrecision, "What peak flood discharge was recorded in the Calder river basin in 2022?",
                   "Which peak flood discharge was recorded in the Calder river basin in 2022?",
                   "the Calder river basin", "peak flood discharge", 2022, "3150 cubic meters per second", "extreme"),
        suite_item("w02", K::VerifyPrecision, "How much carbon dioxide did the Ostrava steelworks emit in 2023?",
                   "How much carbon dioxide was emitted by the Ostrava steelworks in 2023?", "the Ostrava steelworks",
                   "carbon dioxide emissions", 2023, "4.7 million tonnes", "reduced"),
        suite_item("p01", K::Precision, "What module efficiency did the Helios solar cell line reach in 2023?", "",
                   "the Helios solar cell line", "module efficiency", 2023, "22.8 percent", "industry leading"),
        suite_item("p02", K::Precision, "What was the average emergency wait time across the Marlow hospital network in 2022?",
                   "", "the Marlow hospital network", "average emergency wait time", 2022, "47 minutes",
                   "shorter than before"),
        suite_item("p03", K::Precision, "What on-time rate did the Tidewater ferry service achieve in 2021?", "",
                   "the Tidewater ferry service", "on-time rate", 2021, "93.4 percent", "very good"),
        suite_item("e01", K::Easy, "How many visitors came to the Granite Peak ski resort in 2022?", "",
                   "the Granite Peak ski resort", "visitor count", 2022, "1.2 million visitors", "healthy"),
        suite_item("e02", K::Easy, "How many books did the Redfern public library loan out in 2021?", "",
                   "the Redfern public library", "number of loans", 2021, "830000 loans", "busy"),
        suite_item("e03", K::Easy, "How long was the Amberline metro network in 2023?", "", "the Amberline metro",
                   "network length", 2023, "68 km", "long"),
        suite_item("e04", K::Easy, "How much milk did the Eastmoor dairy cooperative collect in 2020?", "",
                   "the Eastmoor dairy cooperative", "milk collected", 2020, "410 million liters", "plentiful"),
        suite_item("e05", K::Easy, "How many species were on display at the Silverbay aquarium in 2022?", "",
                   "the Silverbay aquarium", "number of species on display", 2022, "1150 species", "diverse"),
        suite_item("e06", K::Easy, "How many passengers did Corvin airport handle in 2019?", "", "Corvin airport",
                   "passenger traffic", 2019, "7.9 million passengers", "growing"),
        suite_item("e07", K::Easy, "How large was the Larkspur botanical garden in 2021?", "",
                   "the Larkspur botanical garden", "area", 2021, "54 hectares", "spacious"),
    };
    auto s = assemble("suite", items);

    // Five-item sample: two Verify, one VerifyPrecision, one Precision, one Easy.
    for (const auto* id : {"v01", "v02", "w01", "p01", "e01"}) {
        const auto& all = s.datasets["dataset"];
        auto it = std::find_if(all.begin(), all.end(), [&](const BenchmarkItem& b) { return b.id == id; });
        s.datasets["sample5"].push_back(*it);
    }
    // Paired queries for the memory experiment: first pass asks the original, second the paraphrase.
    for (const auto& it : s.items) {
        if (it.paraphrase.empty()) continue;
        s.datasets["paired_first"].push_back({it.id + "-a", it.query, it.gold, {{"pair", it.id}}});
        s.datasets["paired_second"].push_back({it.id + "-b", it.paraphrase, it.gold, {{"pair", it.id}}});
    }
    return s;
}

std::vector<std::string> scenario_names() { return {"case1", "case2", "case3", "suite"}; }

Scenario by_name(const std::string& name) {
    if (name == "case1") return case1();
    if (name == "case2") return case2();
    if (name == "case3") return case3();
    if (name == "suite") return synthetic_suite();
    throw Error("unknown scenario '" + name + "'");
}

Backends make_backends(const Scenario& scenario, std::size_t embedding_dim) {
    Backends b;
    b.chat = std::make_shared<ScriptedChat>(scenario.rules);
    b.embedder = std::make_shared<HashingEmbedder>(embedding_dim);
    auto tools = std::make_shared<FixtureTools>();
    tools->add_document(scenario.corpus);
    b.tools = ToolRegistry::standard(tools);
    return b;
}

void write_fixtures(const Scenario& scenario, const std::string& dir) {
    const fs::path root(dir);
    fs::create_directories(root / "corpus");
    auto write = [](const fs::path& path, const std::string& content) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw StorageFailure("cannot write " + path.string());
        out << content;
    };
    Json rules = Json::array();
    for (const auto& r : scenario.rules) rules.push_back(to_json(r));
    write(root / "script.json", Json{{"rules", rules}}.dump(2) + "\n");
    write(root / "corpus" / "corpus.json", scenario.corpus.dump(2) + "\n");
    write(root / "config.json", serialize_config(scenario.default_config));
    for (const auto& [name, items] : scenario.datasets) {
        std::string lines;
        for (const auto& item : items) lines += to_json(item).dump() + "\n";
        write(root / (name + ".jsonl"), lines);
    }
}

}  // namespace evofsm::scenarios
