// Copyright 2026 The icsfuzz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Documented configuration keys. Each config section publishes its key table;
// parsing rejects keys outside the table and `--help` prints it.

#include <span>
#include <string>

#include "icsfuzz/error.hpp"
#include "json.hpp"

namespace icsfuzz {

struct KeyDoc {
    const char* name;
    const char* type;
    const char* default_value;
    const char* description;
};

inline void reject_unknown_keys(const nlohmann::json& j, std::span<const KeyDoc> keys, const std::string& section) {
    if (!j.is_object()) throw ConfigError("section '" + section + "' must be an object");
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (const auto& d : keys) known = known || k == d.name;
        if (!known) throw ConfigError("unknown key '" + k + "' in section '" + section + "'");
    }
}

/// Reads an optional key, converting type errors to ConfigError.
template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out, const std::string& section) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("key '" + std::string(key) + "' in section '" + section + "' has the wrong type");
    }
}

inline Nanos millis_to_nanos(double ms) { return Nanos(static_cast<Nanos::rep>(ms * 1e6)); }

}  // namespace icsfuzz
