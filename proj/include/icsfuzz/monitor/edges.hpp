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

// Edge stream wire format: one ASCII record per line, `<timestamp_ns>,<H|L>\n`.

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "icsfuzz/bytes.hpp"

namespace icsfuzz::monitor {

enum class Level : std::uint8_t { Low, High };

struct Edge {
    Nanos timestamp{0};
    Level level = Level::Low;

    friend bool operator==(const Edge&, const Edge&) = default;
};

inline std::string format_edge(const Edge& e) {
    return std::to_string(e.timestamp.count()) + (e.level == Level::High ? ",H\n" : ",L\n");
}

/// Parses one record without its trailing newline.
inline std::optional<Edge> parse_edge_record(std::string_view line) {
    auto comma = line.find(',');
    if (comma == std::string_view::npos || comma == 0 || line.size() != comma + 2) return std::nullopt;
    for (std::size_t i = 0; i < comma; ++i)
        if (line[i] < '0' || line[i] > '9') return std::nullopt;
    std::int64_t ts = 0;
    auto [p, ec] = std::from_chars(line.data(), line.data() + comma, ts);
    if (ec != std::errc() || p != line.data() + comma) return std::nullopt;
    char lv = line[comma + 1];
    if (lv != 'H' && lv != 'L') return std::nullopt;
    return Edge{Nanos(ts), lv == 'H' ? Level::High : Level::Low};
}

struct EdgeSeries {
    std::vector<Edge> edges;
    std::size_t malformed = 0;        // records violating the grammar
    std::size_t non_alternating = 0;  // same level as the previous accepted edge
    std::size_t non_monotonic = 0;    // timestamp not after the previous accepted edge

    std::size_t rejected() const { return malformed + non_alternating + non_monotonic; }
};

/// Validates records incrementally; rejected records are counted and skipped.
class EdgeIngestor {
public:
    /// Returns true when the edge was accepted.
    bool push(const Edge& e) {
        if (!series_.edges.empty()) {
            const auto& last = series_.edges.back();
            if (e.timestamp <= last.timestamp) {
                ++series_.non_monotonic;
                return false;
            }
            if (e.level == last.level) {
                ++series_.non_alternating;
                return false;
            }
        }
        series_.edges.push_back(e);
        return true;
    }

    /// Feeds raw stream text; a trailing partial line is kept for the next call.
    std::vector<Edge> feed(std::string_view text) {
        std::vector<Edge> accepted;
        pending_.append(text);
        std::size_t start = 0;
        for (;;) {
            auto nl = pending_.find('\n', start);
            if (nl == std::string::npos) break;
            std::string_view line(pending_.data() + start, nl - start);
            if (auto e = parse_edge_record(line)) {
                if (push(*e)) accepted.push_back(*e);
            } else {
                ++series_.malformed;
            }
            start = nl + 1;
        }
        pending_.erase(0, start);
        return accepted;
    }

    /// Flushes a final record that lacks its newline.
    void finish() {
        if (pending_.empty()) return;
        if (auto e = parse_edge_record(pending_)) {
            push(*e);
        } else {
            ++series_.malformed;
        }
        pending_.clear();
    }

    const EdgeSeries& series() const { return series_; }
    EdgeSeries take() {
        finish();
        return std::move(series_);
    }

private:
    EdgeSeries series_;
    std::string pending_;
};

/// Parses a complete edge stream.
inline EdgeSeries ingest_edges(std::string_view text) {
    EdgeIngestor ing;
    ing.feed(text);
    return ing.take();
}

}  // namespace icsfuzz::monitor
