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

// Gestalt pattern matching (Ratcliff/Obershelp): the matched byte count is
// obtained by taking the longest common substring, then recursing on the
// unmatched pieces to its left and right. Ties between equally long common
// substrings go to the one starting earliest in the first sequence, then
// earliest in the second.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "icsfuzz/bytes.hpp"

namespace icsfuzz::inference {

/// Exact rational similarity in [0, 1].
class SimilarityScore {
public:
    constexpr SimilarityScore() = default;
    constexpr SimilarityScore(std::uint64_t numerator, std::uint64_t denominator)
        : num_(numerator), den_(denominator == 0 ? 1 : denominator) {
        if (denominator == 0) num_ = 1;
    }

    /// Nearest rational with denominator 10^6; used for user-supplied thresholds.
    static SimilarityScore from_double(double v) {
        if (!(v >= 0.0 && v <= 1.0)) v = v < 0.0 ? 0.0 : 1.0;
        return {static_cast<std::uint64_t>(std::llround(v * 1e6)), 1'000'000};
    }

    std::uint64_t numerator() const { return num_; }
    std::uint64_t denominator() const { return den_; }
    double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }

    friend bool operator==(const SimilarityScore& a, const SimilarityScore& b) {
        return a.num_ * b.den_ == b.num_ * a.den_;
    }
    friend auto operator<=>(const SimilarityScore& a, const SimilarityScore& b) {
        return a.num_ * b.den_ <=> b.num_ * a.den_;
    }

    std::string to_string() const {
        auto g = std::gcd(num_, den_);
        return std::to_string(num_ / g) + "/" + std::to_string(den_ / g);
    }

private:
    std::uint64_t num_ = 0;
    std::uint64_t den_ = 1;
};

struct CommonBlock {
    std::size_t a_start = 0;
    std::size_t b_start = 0;
    std::size_t length = 0;
};

/// Longest common substring of a[a_lo, a_hi) and b[b_lo, b_hi).
inline CommonBlock longest_common_block(ByteView a, std::size_t a_lo, std::size_t a_hi, ByteView b, std::size_t b_lo,
                                        std::size_t b_hi) {
    CommonBlock best{a_lo, b_lo, 0};
    const std::size_t m = b_hi - b_lo;
    std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = a_lo; i < a_hi; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            cur[j + 1] = a[i] == b[b_lo + j] ? prev[j] + 1 : 0;
            // Strictly greater keeps the earliest end in a, then in b, which
            // for equal lengths is the earliest start.
            if (cur[j + 1] > best.length) {
                best.length = cur[j + 1];
                best.a_start = i + 1 - best.length;
                best.b_start = b_lo + j + 1 - best.length;
            }
        }
        std::swap(prev, cur);
    }
    return best;
}

/// Total matched bytes K_m of the recursive decomposition.
inline std::size_t matched_bytes(ByteView a, ByteView b) {
    std::size_t total = 0;
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, std::size_t>>> work;
    work.push_back({{0, a.size()}, {0, b.size()}});
    while (!work.empty()) {
        auto [ra, rb] = work.back();
        work.pop_back();
        if (ra.first >= ra.second || rb.first >= rb.second) continue;
        auto blk = longest_common_block(a, ra.first, ra.second, b, rb.first, rb.second);
        if (blk.length == 0) continue;
        total += blk.length;
        work.push_back({{ra.first, blk.a_start}, {rb.first, blk.b_start}});
        work.push_back({{blk.a_start + blk.length, ra.second}, {blk.b_start + blk.length, rb.second}});
    }
    return total;
}

/// 2*K_m / (|a| + |b|); two empty sequences score 1.
inline SimilarityScore similarity(ByteView a, ByteView b) {
    if (a.empty() && b.empty()) return {1, 1};
    return {2 * matched_bytes(a, b), a.size() + b.size()};
}

}  // namespace icsfuzz::inference
