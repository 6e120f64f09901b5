#pragma once

#include <cstddef>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "evofsm/backends.hpp"
#include "evofsm/errors.hpp"
#include "evofsm/experience.hpp"
#include "evofsm/fsm.hpp"

namespace evofsm {

inline constexpr double kUnitNormTolerance = 1e-6;

/// Embeds non-empty text and checks the result is a unit vector.
std::vector<double> embed(std::string_view text, Embedder& embedder);

/// Dot product; equals cosine similarity for unit vectors.
double similarity(const std::vector<double>& a, const std::vector<double>& b);

enum class RecordFilter { All, SuccessOnly, FailureOnly };

struct RetrievalResult {
    ExperienceRecord record;
    double similarity = 0.0;
};

struct CorruptLine {
    std::size_t line = 0;  // 1-based
    std::string reason;
};

/// Raised by strict loading when pool lines fail to parse.
class CorruptPool : public StorageFailure {
public:
    explicit CorruptPool(std::vector<CorruptLine> lines);
    const std::vector<CorruptLine>& lines() const noexcept { return lines_; }

private:
    std::vector<CorruptLine> lines_;
};

/// Result of reading a pool file without loading it.
struct PoolScan {
    std::vector<ExperienceRecord> records;
    std::vector<CorruptLine> corrupt;
    bool partial_tail = false;  // last line lacks its newline
};

PoolScan scan_pool_file(const std::string& path);

/// Invariant violations of a record list (dimension, unit norm, id reuse, created_at order, outcome rules).
std::vector<std::string> check_pool_invariants(const std::vector<ExperienceRecord>& records, std::size_t dim);

/**
 * @brief Append-only experience store E = E+ ∪ E-, one JSONL line per record.
 *
 * Records are durable (written and fsynced) before add_record returns.
 * Retrieval is an exact flat scan. Reads may run concurrently; appends are
 * serialized.
 */
class ExperiencePool {
public:
    enum class LoadMode {
        Strict,   // any unparseable line raises CorruptPool
        Recover,  // a partial final line (interrupted append) is truncated away
    };

    /// In-memory pool.
    explicit ExperiencePool(std::size_t dim);

    /// File-backed pool; the file is created on first append. `dim` = 0 takes
    /// the dimension from the stored records.
    ExperiencePool(std::string path, std::size_t dim, LoadMode mode = LoadMode::Recover);

    ExperiencePool(const ExperiencePool&) = delete;
    ExperiencePool& operator=(const ExperiencePool&) = delete;

    /// Assigns id and created_at, persists, and returns the stored record.
    ExperienceRecord add_record(ExperienceRecord record);

    std::vector<RetrievalResult> retrieve_top_k(const std::vector<double>& query_embedding, std::size_t k,
                                                RecordFilter filter = RecordFilter::All) const;

    std::vector<ExperienceRecord> records() const;
    std::optional<ExperienceRecord> find(std::string_view id) const;
    std::size_t size() const;
    std::size_t count(Outcome outcome) const;
    std::size_t dimension() const;
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::size_t dim_;
    std::vector<ExperienceRecord> records_;
    mutable std::shared_mutex mutex_;
};

struct WarmStartParams {
    std::size_t k = 3;
    double sim_threshold = 0.55;
    std::size_t max_states = kDefaultMaxStates;
};

struct WarmStart {
    FsmConfig config;  // M_init
    std::vector<RetrievalResult> retrieved;
    std::optional<std::string> prior_id;  // success record whose config was adopted
};

/**
 * @brief Builds M_init for a new query.
 *
 * Retrieves the top-k records over the whole pool. The best success at or
 * above the threshold supplies the base config if it is still valid.
 * Constraints of every retrieved failure are merged into
 * negative_constraints. The result always validates; every internal failure
 * falls back to `default_config`.
 */
WarmStart warm_start(const FsmConfig& default_config, std::string_view query, const ExperiencePool& pool,
                     Embedder& embedder, const WarmStartParams& params = {});

}  // namespace evofsm
