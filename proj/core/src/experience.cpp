#include "evofsm/experience.hpp"

#include "json_util.hpp"

namespace evofsm {

using namespace detail;

std::string_view to_string(Outcome outcome) {
    return outcome == Outcome::Success ? "SUCCESS" : "FAILURE";
}

Json to_json(const ExperienceRecord& r) {
    Json ops = Json::array();
    for (const auto& op : r.op_sequence) ops.push_back(to_json(op));
    Json constraints = Json::array();
    for (const auto& p : r.failure_constraints) constraints.push_back(to_json(p));
    return {{"id", r.id},
            {"query_text", r.query_text},
            {"query_embedding", r.query_embedding},
            {"outcome", to_string(r.outcome)},
            {"config_snapshot", to_json(r.config_snapshot)},
            {"op_sequence", ops},
            {"rationale", r.rationale},
            {"failure_constraints", constraints},
            {"created_at", r.created_at}};
}

ExperienceRecord experience_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    ExperienceRecord r;
    r.id = req_string(j, "id", path);
    r.query_text = req_string(j, "query_text", path);

    const auto ep = child(path, "query_embedding");
    const auto& emb = require_array(require_field(j, "query_embedding", path), ep);
    r.query_embedding.reserve(emb.size());
    for (std::size_t i = 0; i < emb.size(); ++i) r.query_embedding.push_back(as_double(emb[i], index(ep, i)));

    const auto outcome = req_string(j, "outcome", path);
    if (outcome == "SUCCESS") r.outcome = Outcome::Success;
    else if (outcome == "FAILURE") r.outcome = Outcome::Failure;
    else throw SchemaError(child(path, "outcome"), "expected SUCCESS or FAILURE");

    r.config_snapshot = config_from_json(require_field(j, "config_snapshot", path), child(path, "config_snapshot"));

    if (auto it = j.find("op_sequence"); it != j.end()) {
        const auto p = child(path, "op_sequence");
        require_array(*it, p);
        for (std::size_t i = 0; i < it->size(); ++i) r.op_sequence.push_back(op_from_json((*it)[i], index(p, i)));
    }
    r.rationale = opt_string(j, "rationale", path);
    if (auto it = j.find("failure_constraints"); it != j.end()) {
        const auto p = child(path, "failure_constraints");
        require_array(*it, p);
        for (std::size_t i = 0; i < it->size(); ++i)
            r.failure_constraints.push_back(pattern_from_json((*it)[i], index(p, i)));
    }
    r.created_at = req_int(j, "created_at", path);
    return r;
}

}  // namespace evofsm
