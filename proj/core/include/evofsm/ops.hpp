#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "evofsm/errors.hpp"
#include "evofsm/fsm.hpp"

namespace evofsm {

enum class OpKind { AddState, DeleteState, ModifyTransition, ReviseInstruction };

std::string_view to_string(OpKind kind);
bool is_flow_op(OpKind kind);

/// Inserts a state. `replaces` names existing transitions removed first, which
/// is how a state is spliced into an edge.
struct AddStatePayload {
    StateDef state;
    std::vector<TransitionRule> inbound;   // to_state == state.id
    std::vector<TransitionRule> outbound;  // from_state == state.id
    std::vector<std::string> replaces;

    friend bool operator==(const AddStatePayload&, const AddStatePayload&) = default;
};

struct Rewire {
    std::string transition_id;
    std::optional<std::string> retarget_to;  // nullopt deletes the edge

    friend bool operator==(const Rewire&, const Rewire&) = default;
};

/// Removes a state and every transition touching it. Inbound edges listed in
/// `rewiring` with a target are redirected instead; `restore` transitions are
/// added afterwards (used by inverses of splicing inserts).
struct DeleteStatePayload {
    std::string state_id;
    std::vector<Rewire> rewiring;
    std::vector<TransitionRule> restore;

    friend bool operator==(const DeleteStatePayload&, const DeleteStatePayload&) = default;
};

struct ModifyTransitionPayload {
    std::string transition_id;
    std::optional<std::string> to_state;
    std::optional<int> priority;
    std::optional<ConditionSpec> condition;

    friend bool operator==(const ModifyTransitionPayload&, const ModifyTransitionPayload&) = default;
};

struct ReviseInstructionPayload {
    std::string state_id;
    std::string instruction;

    friend bool operator==(const ReviseInstructionPayload&, const ReviseInstructionPayload&) = default;
};

/// One of the four legal edits of an FsmConfig.
struct AtomicOp {
    std::variant<AddStatePayload, DeleteStatePayload, ModifyTransitionPayload, ReviseInstructionPayload> payload;
    std::string rationale;

    OpKind kind() const { return static_cast<OpKind>(payload.index()); }

    /// Short label such as `ADD_STATE(Verifier)`.
    std::string label() const;

    friend bool operator==(const AtomicOp&, const AtomicOp&) = default;
};

enum class RejectCode {
    StateCap,
    DeleteInitial,
    DeleteLastTerminal,
    UnknownTarget,
    WouldOrphan,
    ForbiddenByMemory,
    InvalidResult,
    MalformedOp,
};

std::string_view to_string(RejectCode code);

class OpRejected : public Error {
public:
    OpRejected(RejectCode code, const std::string& detail)
        : Error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    RejectCode code() const noexcept { return code_; }

private:
    RejectCode code_;
};

struct ApplyOptions {
    std::size_t max_states = kDefaultMaxStates;
    bool check_memory = true;  // reject ops that recreate forbidden patterns
};

struct ApplyResult {
    FsmConfig config;
    AtomicOp inverse;
};

/// M' = M (+) op. The input is untouched; the result has version + 1 and is valid.
ApplyResult apply_op(const FsmConfig& config, const AtomicOp& op, const ApplyOptions& options = {});

/// Applies an inverse produced by apply_op. Memory constraints are not re-checked
/// since the target is a previously valid ancestor.
FsmConfig undo(const FsmConfig& config, const AtomicOp& inverse, std::size_t max_states = kDefaultMaxStates);

struct OpLogEntry {
    int iteration = 0;
    AtomicOp op;
    AtomicOp inverse;
    std::int64_t pre_version = 0;
    std::int64_t post_version = 0;
};

Json to_json(const AtomicOp& op);
AtomicOp op_from_json(const Json& j, const std::string& path = "$");
Json to_json(const OpLogEntry& entry);
OpLogEntry op_log_entry_from_json(const Json& j, const std::string& path = "$");

}  // namespace evofsm
