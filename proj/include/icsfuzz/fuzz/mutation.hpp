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

// Mutation strategies and deterministic fuzz case generation.

#include <algorithm>
#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "icsfuzz/error.hpp"
#include "icsfuzz/inference/model.hpp"
#include "icsfuzz/rng.hpp"

namespace icsfuzz::fuzz {

using inference::CommandTemplate;

enum class Strategy : std::uint8_t { ByteSet, BitFlip, LengthOverwrite, Truncate, Extend, TokenCorrupt, RandomAtVariable };

inline constexpr std::array<Strategy, 7> kAllStrategies{Strategy::ByteSet,  Strategy::BitFlip,      Strategy::LengthOverwrite,
                                                        Strategy::Truncate, Strategy::Extend,       Strategy::TokenCorrupt,
                                                        Strategy::RandomAtVariable};

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::ByteSet: return "ByteSet";
        case Strategy::BitFlip: return "BitFlip";
        case Strategy::LengthOverwrite: return "LengthOverwrite";
        case Strategy::Truncate: return "Truncate";
        case Strategy::Extend: return "Extend";
        case Strategy::TokenCorrupt: return "TokenCorrupt";
        case Strategy::RandomAtVariable: return "RandomAtVariable";
    }
    return "?";
}

inline Strategy parse_strategy(const std::string& s) {
    for (auto k : kAllStrategies)
        if (to_string(k) == s) return k;
    throw ConfigError("unknown mutation strategy '" + s + "'");
}

/// Relative weights, indexed like kAllStrategies.
struct StrategyWeights {
    std::array<std::uint32_t, 7> w{25, 15, 15, 7, 5, 3, 30};

    std::uint32_t& operator[](Strategy s) { return w[static_cast<std::size_t>(s)]; }
    std::uint32_t operator[](Strategy s) const { return w[static_cast<std::size_t>(s)]; }
};

inline constexpr std::array<std::uint8_t, 5> kBoundaryBytes{0x00, 0x01, 0x7f, 0x80, 0xff};
inline constexpr std::size_t kMaxMessageLen = 4096;

/// One edit of a message.
///   ByteSet, RandomAtVariable: payload = {new byte} at offset
///   BitFlip: value = bit index at offset
///   LengthOverwrite: value written into the length field at offset; payload = encoded bytes
///   Truncate: offset = new length
///   Extend: value = bytes appended, payload = {fill byte}; offset = length before
///   TokenCorrupt: payload = XOR mask for the token at offset; value = binding index
struct Mutation {
    Strategy strategy = Strategy::ByteSet;
    std::size_t offset = 0;
    Bytes payload;
    std::uint64_t value = 0;

    friend bool operator==(const Mutation&, const Mutation&) = default;
};

inline void apply_mutation(Bytes& b, const Mutation& m) {
    switch (m.strategy) {
        case Strategy::ByteSet:
        case Strategy::RandomAtVariable:
        case Strategy::LengthOverwrite:
            if (m.offset + m.payload.size() > b.size()) throw PreconditionViolation("mutation outside message");
            std::copy(m.payload.begin(), m.payload.end(), b.begin() + static_cast<std::ptrdiff_t>(m.offset));
            return;
        case Strategy::BitFlip:
            if (m.offset >= b.size() || m.value > 7) throw PreconditionViolation("bit flip outside message");
            b[m.offset] ^= static_cast<std::uint8_t>(1u << m.value);
            return;
        case Strategy::Truncate:
            if (m.offset == 0 || m.offset >= b.size()) throw PreconditionViolation("truncation length out of range");
            b.resize(m.offset);
            return;
        case Strategy::Extend:
            if (m.payload.size() != 1 || b.size() + m.value > kMaxMessageLen) {
                throw PreconditionViolation("extension out of range");
            }
            b.insert(b.end(), static_cast<std::size_t>(m.value), m.payload[0]);
            return;
        case Strategy::TokenCorrupt:
            if (m.offset + m.payload.size() > b.size()) throw PreconditionViolation("token corruption outside message");
            for (std::size_t i = 0; i < m.payload.size(); ++i) b[m.offset + i] ^= m.payload[i];
            return;
    }
}

struct FuzzCase {
    std::uint64_t case_id = 0;
    std::string template_id;
    std::vector<Mutation> mutations;
    Bytes bytes;
    std::uint64_t rng_seed = 0;

    friend bool operator==(const FuzzCase&, const FuzzCase&) = default;
};

inline Bytes apply_mutations(ByteView base, const std::vector<Mutation>& ms) {
    Bytes b(base.begin(), base.end());
    for (const auto& m : ms) apply_mutation(b, m);
    return b;
}

/// Token XOR masks of a case re-applied after live token substitution.
inline void apply_token_corruption(Bytes& wire, const std::vector<Mutation>& ms) {
    for (const auto& m : ms)
        if (m.strategy == Strategy::TokenCorrupt) apply_mutation(wire, m);
}

/// Seed of one case: independent of generation order.
inline std::uint64_t case_seed(std::uint64_t campaign_seed, std::uint64_t case_id) {
    return splitmix64(campaign_seed ^ splitmix64(case_id));
}

namespace detail {

struct Positions {
    std::vector<bool> token;
    std::vector<bool> length;
    std::vector<std::pair<std::size_t, std::size_t>> token_sites;  // (binding, offset)
    std::vector<std::size_t> token_widths;
    std::vector<std::size_t> mutable_any;  // neither token nor length
    std::vector<std::size_t> variable;     // Variable, not token
    std::vector<std::size_t> non_token;
};

inline Positions classify_positions(const CommandTemplate& t, const inference::ProtocolModel& model) {
    Positions p;
    std::size_t n = t.bytes.size();
    p.token.assign(n, false);
    p.length.assign(n, false);
    for (auto [b, off] : model.echo_offsets(inference::TemplateRef::of_command(t.id))) {
        std::size_t w = model.tokens[b].width;
        if (off + w > n) continue;
        p.token_sites.emplace_back(b, off);
        p.token_widths.push_back(w);
        for (std::size_t i = 0; i < w; ++i) p.token[off + i] = true;
    }
    if (model.framing) {
        for (std::size_t i = model.framing->offset; i < model.framing->end() && i < n; ++i) p.length[i] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (p.token[i]) continue;
        p.non_token.push_back(i);
        if (!p.length[i]) p.mutable_any.push_back(i);
        if (t.mask.is_variable(i)) p.variable.push_back(i);
    }
    return p;
}

inline bool applicable(Strategy s, const CommandTemplate& t, const inference::ProtocolModel& model, const Positions& p) {
    switch (s) {
        case Strategy::ByteSet:
        case Strategy::BitFlip: return !p.non_token.empty();
        case Strategy::LengthOverwrite: return model.framing && model.framing->end() <= t.bytes.size();
        case Strategy::Truncate: return t.bytes.size() >= 2;
        case Strategy::Extend: return t.bytes.size() < kMaxMessageLen;
        case Strategy::TokenCorrupt: return !p.token_sites.empty();
        case Strategy::RandomAtVariable: return !p.variable.empty() || !p.mutable_any.empty();
    }
    return false;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[rng.below(v.size())];
}

}  // namespace detail

/// Builds the case with the given id. Deterministic in (template, model,
/// campaign seed, case id, weights).
inline FuzzCase make_case(const CommandTemplate& t, const inference::ProtocolModel& model, std::uint64_t campaign_seed,
                          std::uint64_t case_id, const StrategyWeights& weights = {}) {
    if (t.bytes.empty()) throw PreconditionViolation("template " + t.id + " is empty");
    FuzzCase c;
    c.case_id = case_id;
    c.template_id = t.id;
    c.rng_seed = case_seed(campaign_seed, case_id);
    Rng rng(c.rng_seed);
    auto pos = detail::classify_positions(t, model);

    std::uint64_t total = 0;
    for (auto s : kAllStrategies)
        if (detail::applicable(s, t, model, pos)) total += weights[s];
    if (total == 0) throw PreconditionViolation("no mutation strategy applies to template " + t.id);
    std::uint64_t r = rng.below(total);
    Strategy chosen = Strategy::ByteSet;
    for (auto s : kAllStrategies) {
        if (!detail::applicable(s, t, model, pos)) continue;
        if (r < weights[s]) {
            chosen = s;
            break;
        }
        r -= weights[s];
    }

    std::size_t n = t.bytes.size();
    Mutation m;
    m.strategy = chosen;
    switch (chosen) {
        case Strategy::ByteSet: {
            const auto& pool = !pos.variable.empty() && rng.chance(1, 2) ? pos.variable : pos.non_token;
            m.offset = detail::pick(rng, pool);
            m.payload = {kBoundaryBytes[rng.below(kBoundaryBytes.size())]};
            break;
        }
        case Strategy::BitFlip:
            m.offset = detail::pick(rng, pos.non_token);
            m.value = rng.below(8);
            break;
        case Strategy::LengthOverwrite: {
            const auto& f = *model.framing;
            std::uint64_t max = f.width >= 8 ? ~0ULL : (1ULL << (8 * f.width)) - 1;
            std::array<std::uint64_t, 6> choices{0, 1, n - 1, n + 1, max, rng.next() & max};
            m.offset = f.offset;
            m.value = choices[rng.below(choices.size())] & max;
            m.payload.assign(f.width, 0);
            write_uint(m.payload, 0, f.width, f.endian, m.value);
            break;
        }
        case Strategy::Truncate: m.offset = static_cast<std::size_t>(rng.between(1, n - 1)); break;
        case Strategy::Extend: {
            std::uint64_t room = kMaxMessageLen - n;
            m.offset = n;
            m.value = rng.chance(3, 4) ? rng.between(1, std::min<std::uint64_t>(64, room)) : rng.between(1, room);
            m.payload = {rng.byte()};
            break;
        }
        case Strategy::TokenCorrupt: {
            std::size_t k = rng.below(pos.token_sites.size());
            m.offset = pos.token_sites[k].second;
            m.value = pos.token_sites[k].first;
            m.payload.resize(pos.token_widths[k]);
            do {
                for (auto& b : m.payload) b = rng.byte();
            } while (std::all_of(m.payload.begin(), m.payload.end(), [](std::uint8_t b) { return b == 0; }));
            break;
        }
        case Strategy::RandomAtVariable: {
            const auto& pool = pos.variable.empty() ? pos.mutable_any : pos.variable;
            m.offset = detail::pick(rng, pool);
            m.payload = {rng.byte()};
            break;
        }
    }
    c.mutations.push_back(std::move(m));
    c.bytes = apply_mutations(t.bytes, c.mutations);
    return c;
}

/// `budget` cases for one template with ids 0..budget-1.
inline std::vector<FuzzCase> generate_cases(const CommandTemplate& t, const inference::ProtocolModel& model,
                                            std::uint64_t budget, std::uint64_t seed,
                                            const StrategyWeights& weights = {}) {
    if (budget == 0) throw PreconditionViolation("budget must be at least 1");
    std::vector<FuzzCase> out;
    out.reserve(budget);
    for (std::uint64_t i = 0; i < budget; ++i) out.push_back(make_case(t, model, seed, i, weights));
    return out;
}

/// Sorted, de-duplicated strategy names of a case.
inline std::vector<std::string> strategy_signature(const std::vector<Mutation>& ms) {
    std::set<std::string> s;
    for (const auto& m : ms) s.insert(to_string(m.strategy));
    return {s.begin(), s.end()};
}

}  // namespace icsfuzz::fuzz
