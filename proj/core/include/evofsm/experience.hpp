#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "evofsm/fsm.hpp"
#include "evofsm/ops.hpp"

namespace evofsm {

enum class Outcome { Success, Failure };

std::string_view to_string(Outcome outcome);

/// A distilled episode kept in the experience pool.
struct ExperienceRecord {
    std::string id;
    std::string query_text;
    std::vector<double> query_embedding;  // unit length
    Outcome outcome = Outcome::Failure;
    FsmConfig config_snapshot;
    std::vector<AtomicOp> op_sequence;
    std::string rationale;
    std::vector<ForbiddenPattern> failure_constraints;  // FAILURE only
    std::int64_t created_at = 0;

    friend bool operator==(const ExperienceRecord&, const ExperienceRecord&) = default;
};

Json to_json(const ExperienceRecord& r);
ExperienceRecord experience_from_json(const Json& j, const std::string& path = "$");

}  // namespace evofsm
