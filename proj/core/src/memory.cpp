#include "evofsm/memory.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "evofsm/text.hpp"

namespace evofsm {

namespace fs = std::filesystem;

namespace {

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

bool is_unit(const std::vector<double>& v) {
    return std::abs(norm(v) - 1.0) <= kUnitNormTolerance;
}

std::string describe_lines(const std::vector<CorruptLine>& lines) {
    std::string out = "corrupt pool lines:";
    for (const auto& l : lines) out += fmt::format(" {} ({})", l.line, l.reason);
    return out;
}

void append_durably(const std::string& path, const std::string& data) {
    const auto parent = fs::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) fs::create_directories(parent, ec);
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw StorageFailure(fmt::format("cannot open {}: {}", path, std::strerror(errno)));
    std::size_t written = 0;
    while (written < data.size()) {
        const auto n = ::write(fd, data.data() + written, data.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int err = errno;
            ::close(fd);
            throw StorageFailure(fmt::format("write to {} failed: {}", path, std::strerror(err)));
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        const int err = errno;
        ::close(fd);
        throw StorageFailure(fmt::format("fsync of {} failed: {}", path, std::strerror(err)));
    }
    ::close(fd);
}

}  // namespace

std::vector<double> embed(std::string_view text, Embedder& embedder) {
    if (text::trim(text).empty()) throw Error("cannot embed empty text");
    auto v = embedder.embed(text);
    if (v.empty()) throw BackendFailure("embedder returned an empty vector");
    if (embedder.dimension() != 0 && v.size() != embedder.dimension())
        throw DimensionMismatch(fmt::format("embedder returned {} values, expected {}", v.size(), embedder.dimension()));
    if (!is_unit(v)) l2_normalize(v);
    return v;
}

double similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionMismatch(fmt::format("cannot compare {}-d and {}-d vectors", a.size(), b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

CorruptPool::CorruptPool(std::vector<CorruptLine> lines)
    : StorageFailure(describe_lines(lines)), lines_(std::move(lines)) {}

PoolScan scan_pool_file(const std::string& path) {
    PoolScan scan;
    std::ifstream in(path, std::ios::binary);
    if (!in) return scan;
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string data = buffer.str();

    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < data.size()) {
        ++line_no;
        const auto nl = data.find('\n', pos);
        const bool terminated = nl != std::string::npos;
        const std::string line = data.substr(pos, terminated ? nl - pos : std::string::npos);
        pos = terminated ? nl + 1 : data.size();
        if (!terminated) scan.partial_tail = true;
        if (text::trim(line).empty()) continue;
        const auto j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            scan.corrupt.push_back({line_no, terminated ? "invalid JSON" : "truncated line"});
            continue;
        }
        try {
            scan.records.push_back(experience_from_json(j, fmt::format("line {}", line_no)));
        } catch (const SchemaError& e) {
            scan.corrupt.push_back({line_no, e.what()});
        }
    }
    return scan;
}

std::vector<std::string> check_pool_invariants(const std::vector<ExperienceRecord>& records, std::size_t dim) {
    std::vector<std::string> problems;
    std::set<std::string> ids;
    std::int64_t last_created = std::numeric_limits<std::int64_t>::min();
    for (const auto& r : records) {
        if (!ids.insert(r.id).second) problems.push_back("duplicate id " + r.id);
        if (r.created_at <= last_created) problems.push_back("created_at not increasing at " + r.id);
        last_created = r.created_at;
        if (dim != 0 && r.query_embedding.size() != dim)
            problems.push_back(fmt::format("{}: dimension {} != {}", r.id, r.query_embedding.size(), dim));
        if (!is_unit(r.query_embedding)) problems.push_back(fmt::format("{}: embedding norm {}", r.id, norm(r.query_embedding)));
        if (r.outcome == Outcome::Success && !r.failure_constraints.empty())
            problems.push_back(r.id + ": success record carries failure constraints");
    }
    return problems;
}

ExperiencePool::ExperiencePool(std::size_t dim) : dim_(dim) {}

ExperiencePool::ExperiencePool(std::string path, std::size_t dim, LoadMode mode)
    : path_(std::move(path)), dim_(dim) {
    if (!fs::exists(path_)) return;
    auto scan = scan_pool_file(path_);
    if (!scan.corrupt.empty()) {
        const bool only_tail = scan.partial_tail && scan.corrupt.size() == 1 &&
                               scan.corrupt.front().reason == "truncated line";
        if (mode == LoadMode::Strict || !only_tail) throw CorruptPool(scan.corrupt);
        // Drop the interrupted append so later lines start clean.
        std::ifstream in(path_, std::ios::binary);
        std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto last_nl = data.rfind('\n');
        const auto keep = last_nl == std::string::npos ? 0 : last_nl + 1;
        spdlog::warn("pool {}: discarding {} bytes of an interrupted append (line {})", path_, data.size() - keep,
                     scan.corrupt.front().line);
        fs::resize_file(path_, keep);
    } else if (scan.partial_tail && !scan.records.empty()) {
        append_durably(path_, "\n");
    }
    if (dim_ == 0 && !scan.records.empty()) dim_ = scan.records.front().query_embedding.size();
    for (const auto& r : scan.records) {
        if (r.query_embedding.size() != dim_)
            throw DimensionMismatch(fmt::format("pool {} record {} has dimension {}, expected {}", path_, r.id,
                                                r.query_embedding.size(), dim_));
    }
    records_ = std::move(scan.records);
}

ExperienceRecord ExperiencePool::add_record(ExperienceRecord record) {
    std::unique_lock lock(mutex_);
    if (dim_ == 0) dim_ = record.query_embedding.size();
    if (record.query_embedding.size() != dim_)
        throw DimensionMismatch(fmt::format("record dimension {} does not match pool dimension {}",
                                            record.query_embedding.size(), dim_));
    if (!is_unit(record.query_embedding)) throw Error("record embedding is not unit length");
    if (record.outcome == Outcome::Success && !record.failure_constraints.empty())
        throw Error("success records cannot carry failure constraints");

    record.created_at = records_.empty() ? 1 : records_.back().created_at + 1;
    record.id = fmt::format("exp-{:06d}", record.created_at);
    if (!path_.empty()) append_durably(path_, to_json(record).dump() + "\n");
    records_.push_back(record);
    return record;
}

std::vector<RetrievalResult> ExperiencePool::retrieve_top_k(const std::vector<double>& query_embedding, std::size_t k,
                                                            RecordFilter filter) const {
    std::shared_lock lock(mutex_);
    std::vector<RetrievalResult> scored;
    if (k == 0 || records_.empty()) return scored;
    if (query_embedding.size() != dim_)
        throw DimensionMismatch(fmt::format("query dimension {} does not match pool dimension {}",
                                            query_embedding.size(), dim_));
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (filter == RecordFilter::SuccessOnly && r.outcome != Outcome::Success) continue;
        if (filter == RecordFilter::FailureOnly && r.outcome != Outcome::Failure) continue;
        ranked.emplace_back(similarity(query_embedding, r.query_embedding), i);
    }
    const auto better = [this](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        const auto& ca = records_[a.second].created_at;
        const auto& cb = records_[b.second].created_at;
        if (ca != cb) return ca < cb;
        return a.second < b.second;
    };
    const auto take = std::min(k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(), better);
    scored.reserve(take);
    for (std::size_t i = 0; i < take; ++i) scored.push_back({records_[ranked[i].second], ranked[i].first});
    return scored;
}

std::vector<ExperienceRecord> ExperiencePool::records() const {
    std::shared_lock lock(mutex_);
    return records_;
}

std::optional<ExperienceRecord> ExperiencePool::find(std::string_view id) const {
    std::shared_lock lock(mutex_);
    for (const auto& r : records_) {
        if (r.id == id) return r;
    }
    return std::nullopt;
}

std::size_t ExperiencePool::size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
}

std::size_t ExperiencePool::count(Outcome outcome) const {
    std::shared_lock lock(mutex_);
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [outcome](const auto& r) { return r.outcome == outcome; }));
}

std::size_t ExperiencePool::dimension() const {
    std::shared_lock lock(mutex_);
    return dim_;
}

WarmStart warm_start(const FsmConfig& default_config, std::string_view query, const ExperiencePool& pool,
                     Embedder& embedder, const WarmStartParams& params) {
    WarmStart out;
    out.config = default_config;
    if (pool.size() == 0 || params.k == 0) return out;
    try {
        out.retrieved = pool.retrieve_top_k(embed(query, embedder), params.k, RecordFilter::All);
    } catch (const Error& e) {
        spdlog::warn("warm start: retrieval failed ({}); using the default config", e.what());
        return out;
    }

    for (const auto& hit : out.retrieved) {
        if (hit.record.outcome != Outcome::Success || hit.similarity < params.sim_threshold) continue;
        const auto report = validate_config(hit.record.config_snapshot, params.max_states);
        if (report.ok()) {
            out.config = hit.record.config_snapshot;
            out.prior_id = hit.record.id;
            spdlog::info("warm start: adopting {} (similarity {:.3f})", hit.record.id, hit.similarity);
        } else {
            spdlog::warn("warm start: prior {} is no longer valid: {}", hit.record.id, report.to_text());
        }
        break;  // only the best success is considered
    }

    auto& constraints = out.config.negative_constraints;
    for (const auto& hit : out.retrieved) {
        if (hit.record.outcome != Outcome::Failure) continue;
        for (const auto& p : hit.record.failure_constraints) {
            const bool known = std::any_of(constraints.begin(), constraints.end(),
                                           [&](const ForbiddenPattern& q) { return q.same_target(p); });
            if (!known) constraints.push_back(p);
        }
    }
    if (!validate_config(out.config, params.max_states).ok()) {
        spdlog::warn("warm start: merged config invalid; using the default config");
        out.config = default_config;
        out.prior_id.reset();
    }
    return out;
}

}  // namespace evofsm
