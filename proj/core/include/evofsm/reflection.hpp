#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "evofsm/backends.hpp"
#include "evofsm/engine.hpp"
#include "evofsm/evolution.hpp"
#include "evofsm/experience.hpp"

namespace evofsm {

inline constexpr std::string_view kReflectionUnavailable = "(reflection unavailable)";

/**
 * Back edges of the visited state sequence: consecutive pairs (a, b) where b
 * was first visited no later than a. Each closes a cycle. Order of first
 * occurrence, duplicates removed.
 */
std::vector<std::pair<std::string, std::string>> loop_closing_edges(const Trajectory& trajectory);

/**
 * @brief Distills a finished episode into one experience record.
 *
 * Successful episodes keep the final config and the applied ops. Failed
 * episodes keep the last config; when the final run halted in a loop, each
 * cycle-closing edge becomes a TRANSITION_EDGE constraint. The rationale is
 * written by the reflector role; on BackendFailure it is
 * kReflectionUnavailable. `id` and `created_at` are left for the pool.
 */
ExperienceRecord reflect(const EvolutionOutcome& episode, std::string_view query, Embedder& embedder,
                         ChatBackend& reflector);

}  // namespace evofsm
