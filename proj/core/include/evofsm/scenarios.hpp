#pragma once

#include <map>
#include <string>
#include <vector>

#include "evofsm/backends.hpp"
#include "evofsm/fsm.hpp"
#include "evofsm/harness.hpp"

namespace evofsm::scenarios {

/// What an item needs before the default machine can answer it.
enum class ItemKind {
    Easy,             // nothing
    Verify,           // a verification state that refines the search
    Precision,        // a browsing instruction that keeps exact figures
    VerifyPrecision,  // both, discovered one after the other
    LegalVerify,      // a legal verifier plus a search instruction favouring primary sources
};

std::string_view to_string(ItemKind kind);

/// One question of a synthetic fixture world.
struct ItemSpec {
    std::string id;
    ItemKind kind = ItemKind::Easy;
    std::string query;
    std::string paraphrase;  // similar query for the memory experiment; may be empty
    std::string subject;
    std::string metric;
    int year = 0;
    std::string gold;   // contains a digit
    std::string vague;  // digit-free description used by imprecise summaries
    std::string refined_query;  // defaults to "<subject> <metric> <year> annual report pdf"
    std::string answer_url;
    std::string answer_title;
    std::string generic_url;
    std::string generic_title;

    // Derived texts; left empty they are filled from the fields above.
    std::string answer_marker;   // sentence of the answer page holding the figure
    std::string generic_marker;  // sentence of the background page
    std::string exact_finding;   // browsing output that quotes the figure
    std::string vague_finding;   // browsing output that only characterizes it
    std::string vague_answer;    // digit-free final answer built from the vague finding
    std::string missing_note;    // browsing output for the background page

    bool needs_verifier() const;
    bool needs_precision() const;
};

/// Fills every empty derived text of `item` and checks the fixture rules
/// (gold has a digit, vague texts have none).
void finalize(ItemSpec& item);

/**
 * @brief A self-contained offline world: default machine, scripted chat table,
 * tool corpus and datasets.
 *
 * Scripted replies depend only on request content, never on call order, so
 * one table serves any number of runs and workers.
 */
struct Scenario {
    std::string name;
    FsmConfig default_config;
    std::vector<ItemSpec> items;
    std::vector<ScriptRule> rules;
    Json corpus;  // FixtureTools document
    std::map<std::string, std::vector<BenchmarkItem>> datasets;
};

/// Search -> Browsing -> Analysis with a Browsing -> Search retry edge.
FsmConfig default_research_config();

/// The Verifier splice proposed for looping runs.
Json verifier_op_json();
/// The browsing-precision revision proposed for vague quantitative answers.
Json precision_op_json();
inline constexpr const char* kPrecisionClause =
    "Do not summarize numerical data. Extract exact values with units (e.g., Wh/kg) verbatim from the text.";

Scenario case1();        // search-browse loop repaired by ADD_STATE(Verifier)
Scenario case2();        // vague answer repaired by REVISE_INSTRUCTION(Browsing)
Scenario case3();        // flow op and skill op in one iteration
Scenario synthetic_suite();  // 20 items: 8 Verify, 2 VerifyPrecision, 3 Precision, 7 Easy

std::vector<std::string> scenario_names();
Scenario by_name(const std::string& name);

/// Builds scripted backends directly from a scenario.
Backends make_backends(const Scenario& scenario, std::size_t embedding_dim = kDefaultEmbeddingDim);

/// Writes script.json, corpus/corpus.json, config.json and <dataset>.jsonl files into `dir`.
void write_fixtures(const Scenario& scenario, const std::string& dir);

}  // namespace evofsm::scenarios
