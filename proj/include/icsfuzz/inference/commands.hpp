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

// Command template identification over post-handshake client messages.

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "icsfuzz/capture/session.hpp"
#include "icsfuzz/inference/cluster.hpp"
#include "icsfuzz/inference/model.hpp"

namespace icsfuzz::inference {

struct CommandAnalysis {
    std::vector<CommandTemplate> templates;
    /// Echo sites found in the templates, one list per input token binding.
    std::vector<std::vector<EchoSite>> token_echoes;
    std::vector<UnexplainedField> unexplained;
};

namespace detail {

struct CommandSample {
    std::size_t session;  // position in the sessions vector
    std::size_t message;  // index within the session
    ByteView bytes;
};

/// Offsets where a sample carries its own session's value of a token.
inline std::set<std::size_t> token_sites(ByteView bytes, ByteView token) {
    std::set<std::size_t> sites;
    if (token.empty() || bytes.size() < token.size()) return sites;
    for (std::size_t p = 0; p + token.size() <= bytes.size(); ++p) {
        if (std::equal(token.begin(), token.end(), bytes.begin() + static_cast<std::ptrdiff_t>(p))) sites.insert(p);
    }
    return sites;
}

}  // namespace detail

/// Groups post-handshake client messages into command templates.
///
/// Messages are clustered by similarity; inside a cluster, messages that are
/// byte-identical apart from positions carrying each session's own token value
/// form an exact-match subgroup. Each subgroup seen in at least two distinct
/// sessions becomes a template, so commands that cluster together but differ
/// in a constant field (e.g. a subcode) stay separate.
inline CommandAnalysis identify_commands(const std::vector<capture::TcpSession>& sessions, std::size_t handshake_len,
                                         SimilarityScore threshold, const std::vector<TokenBinding>& tokens = {},
                                         const std::optional<LengthFieldSpec>& framing = std::nullopt) {
    CommandAnalysis out;
    out.token_echoes.resize(tokens.size());

    std::vector<detail::CommandSample> samples;
    for (std::size_t s = 0; s < sessions.size(); ++s) {
        const auto& msgs = sessions[s].messages;
        for (std::size_t i = handshake_len; i < msgs.size(); ++i) {
            if (msgs[i].direction == Direction::ClientToServer) samples.push_back({s, i, msgs[i].payload});
        }
    }
    // token_values[t][s]: value of binding t in session s.
    std::vector<std::vector<ByteView>> token_values(tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        for (const auto& sess : sessions) {
            const auto& b = tokens[t];
            if (b.source_step < sess.messages.size() &&
                b.source_offset + b.width <= sess.messages[b.source_step].payload.size()) {
                token_values[t].push_back(ByteView(sess.messages[b.source_step].payload).subspan(b.source_offset, b.width));
            } else {
                token_values[t].emplace_back();
            }
        }
    }
    // sites[k][t]: token t sites in sample k.
    std::vector<std::vector<std::set<std::size_t>>> sites(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            sites[k].push_back(detail::token_sites(samples[k].bytes, token_values[t][samples[k].session]));
        }
    }
    auto same_modulo_tokens = [&](std::size_t x, std::size_t y) {
        const auto& a = samples[x].bytes;
        const auto& b = samples[y].bytes;
        if (a.size() != b.size()) return false;
        for (std::size_t p = 0; p < a.size(); ++p) {
            if (a[p] == b[p]) continue;
            bool covered = false;
            for (std::size_t t = 0; t < tokens.size() && !covered; ++t) {
                for (std::size_t q : sites[x][t]) {
                    if (q <= p && p < q + tokens[t].width && sites[y][t].count(q)) {
                        covered = true;
                        break;
                    }
                }
            }
            if (!covered) return false;
        }
        return true;
    };

    std::vector<ByteView> views;
    for (const auto& s : samples) views.push_back(s.bytes);
    auto clusters = cluster_payloads(views, threshold);

    std::size_t next_id = 0;
    struct Group {
        std::size_t family;
        std::vector<std::size_t> members;
    };
    std::vector<Group> groups;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        std::vector<Group> local;
        for (std::size_t k : clusters[c]) {
            auto it = std::find_if(local.begin(), local.end(),
                                   [&](const Group& g) { return same_modulo_tokens(g.members.front(), k); });
            if (it == local.end()) {
                local.push_back({c, {k}});
            } else {
                it->members.push_back(k);
            }
        }
        groups.insert(groups.end(), local.begin(), local.end());
    }
    std::stable_sort(groups.begin(), groups.end(),
                     [](const Group& a, const Group& b) { return a.members.front() < b.members.front(); });

    for (const auto& g : groups) {
        std::set<std::size_t> distinct;
        for (auto k : g.members) distinct.insert(samples[k].session);
        if (distinct.size() < 2) continue;

        const auto& rep = samples[g.members.front()];
        CommandTemplate tpl;
        tpl.id = "cmd" + std::to_string(next_id++);
        tpl.direction = Direction::ClientToServer;
        tpl.bytes.assign(rep.bytes.begin(), rep.bytes.end());
        tpl.mask = ByteMask(tpl.bytes.size());
        tpl.family = g.family;
        tpl.support = distinct.size();
        for (auto k : g.members) {
            for (std::size_t p = 0; p < tpl.bytes.size(); ++p)
                if (samples[k].bytes[p] != tpl.bytes[p]) tpl.mask.set(p, ByteClass::Variable);
        }
        std::vector<bool> echoed(tpl.bytes.size(), false);
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            std::set<std::size_t> common = sites[g.members.front()][t];
            std::set<std::vector<std::uint8_t>> values;
            for (auto k : g.members) {
                std::set<std::size_t> keep;
                for (auto q : common)
                    if (sites[k][t].count(q)) keep.insert(q);
                common.swap(keep);
                auto v = token_values[t][samples[k].session];
                values.insert(std::vector<std::uint8_t>(v.begin(), v.end()));
            }
            for (auto q : common) {
                // With a single token value among the members a matching byte
                // could be a coincidence; only accept offsets the handshake
                // already uses for echoes.
                if (values.size() < 2) {
                    bool known = false;
                    for (const auto& e : tokens[t].echoes) known = known || e.offset == q;
                    if (!known) continue;
                }
                out.token_echoes[t].push_back({TemplateRef::of_command(tpl.id), q});
                for (std::size_t i = 0; i < tokens[t].width; ++i) {
                    tpl.mask.set(q + i, ByteClass::Variable);
                    echoed[q + i] = true;
                }
            }
        }
        if (framing) {
            for (std::size_t i = framing->offset; i < framing->end() && i < tpl.mask.size(); ++i)
                tpl.mask.set(i, ByteClass::LengthField);
        }
        for (auto [start, len] : tpl.mask.variable_runs()) {
            std::size_t i = start;
            while (i < start + len) {
                if (echoed[i]) {
                    ++i;
                    continue;
                }
                std::size_t j = i;
                while (j < start + len && !echoed[j]) ++j;
                out.unexplained.push_back({TemplateRef::of_command(tpl.id), i, j - i});
                i = j;
            }
        }
        const auto& msgs = sessions[rep.session].messages;
        if (rep.message + 1 < msgs.size() && msgs[rep.message + 1].direction == Direction::ServerToClient) {
            tpl.response = msgs[rep.message + 1].payload;
        }
        out.templates.push_back(std::move(tpl));
    }
    return out;
}

}  // namespace icsfuzz::inference
