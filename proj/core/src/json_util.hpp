#pragma once

// Strict field access for hand-written JSON readers. Every failure raises
// SchemaError carrying the JSON path of the offending value.

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evofsm/errors.hpp"

namespace evofsm::detail {

using Json = nlohmann::json;

inline std::string child(const std::string& path, std::string_view key) {
    return path + "." + std::string(key);
}

inline std::string index(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

inline const Json& require_object(const Json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path, "expected object");
    return j;
}

inline const Json& require_array(const Json& j, const std::string& path) {
    if (!j.is_array()) throw SchemaError(path, "expected array");
    return j;
}

inline const Json& require_field(const Json& j, std::string_view key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError(child(path, key), "missing required field");
    return *it;
}

inline std::string as_string(const Json& j, const std::string& path) {
    if (!j.is_string()) throw SchemaError(path, "expected string");
    return j.get<std::string>();
}

inline std::int64_t as_int(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) throw SchemaError(path, "expected integer");
    return j.get<std::int64_t>();
}

inline bool as_bool(const Json& j, const std::string& path) {
    if (!j.is_boolean()) throw SchemaError(path, "expected boolean");
    return j.get<bool>();
}

inline double as_double(const Json& j, const std::string& path) {
    if (!j.is_number()) throw SchemaError(path, "expected number");
    return j.get<double>();
}

inline std::string req_string(const Json& j, std::string_view key, const std::string& path) {
    return as_string(require_field(j, key, path), child(path, key));
}

inline std::string opt_string(const Json& j, std::string_view key, const std::string& path,
                              std::string fallback = {}) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    return as_string(*it, child(path, key));
}

inline std::int64_t req_int(const Json& j, std::string_view key, const std::string& path) {
    return as_int(require_field(j, key, path), child(path, key));
}

inline std::int64_t opt_int(const Json& j, std::string_view key, const std::string& path,
                            std::int64_t fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    return as_int(*it, child(path, key));
}

inline bool opt_bool(const Json& j, std::string_view key, const std::string& path, bool fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    return as_bool(*it, child(path, key));
}

inline std::vector<std::string> opt_string_list(const Json& j, std::string_view key,
                                                const std::string& path) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end()) return out;
    const auto p = child(path, key);
    require_array(*it, p);
    for (std::size_t i = 0; i < it->size(); ++i) out.push_back(as_string((*it)[i], index(p, i)));
    return out;
}

/// Fields of `j` not in `known`, kept so unknown keys survive a rewrite.
inline Json extras(const Json& j, std::initializer_list<std::string_view> known) {
    Json out = Json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool is_known = false;
        for (auto k : known) {
            if (it.key() == k) {
                is_known = true;
                break;
            }
        }
        if (!is_known) out[it.key()] = it.value();
    }
    return out;
}

/// Starts an output object from preserved extras; known fields are written over it.
inline Json with_extras(const Json& extra) {
    return extra.is_object() ? extra : Json::object();
}

}  // namespace evofsm::detail
