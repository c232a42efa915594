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

#include <optional>
#include <set>
#include <vector>

#include "icsfuzz/capture/framing.hpp"
#include "icsfuzz/capture/session.hpp"

namespace icsfuzz::inference {

/// Looks for a field holding the total message length. Candidates are
/// offsets 0..8, widths 1, 2, 4 and both byte orders, tried in that order so
/// the smallest offset, then the smallest width, wins. Needs at least four
/// messages with at least two distinct lengths.
inline std::optional<capture::LengthFieldSpec> infer_length_field(const std::vector<Message>& messages) {
    std::set<std::size_t> lengths;
    for (const auto& m : messages) lengths.insert(m.payload.size());
    if (messages.size() < 4 || lengths.size() < 2) return std::nullopt;
    for (std::size_t offset = 0; offset <= 8; ++offset) {
        for (std::size_t width : {1u, 2u, 4u}) {
            for (Endian endian : {Endian::Big, Endian::Little}) {
                if (width == 1 && endian == Endian::Little) continue;
                capture::LengthFieldSpec spec{offset, width, endian};
                bool all = true;
                for (const auto& m : messages) {
                    if (m.payload.size() < spec.end() || spec.decode(m.payload) != m.payload.size()) {
                        all = false;
                        break;
                    }
                }
                if (all) return spec;
            }
        }
    }
    return std::nullopt;
}

}  // namespace icsfuzz::inference
