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

#include <algorithm>
#include <numeric>
#include <vector>

#include "icsfuzz/capture/session.hpp"
#include "icsfuzz/inference/similarity.hpp"

namespace icsfuzz::inference {

namespace detail {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Single-linkage clustering of byte sequences: i and j share a cluster iff a
/// chain of pairs with similarity >= threshold connects them. Clusters hold
/// input positions in ascending order and are ordered by their smallest member.
inline std::vector<std::vector<std::size_t>> cluster_payloads(const std::vector<ByteView>& items,
                                                              SimilarityScore threshold) {
    detail::DisjointSets sets(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = i + 1; j < items.size(); ++j) {
            if (sets.find(i) == sets.find(j)) continue;
            if (similarity(items[i], items[j]) >= threshold) sets.unite(i, j);
        }
    }
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::size_t> slot(items.size(), SIZE_MAX);
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::size_t root = sets.find(i);
        if (slot[root] == SIZE_MAX) {
            slot[root] = clusters.size();
            clusters.emplace_back();
        }
        clusters[slot[root]].push_back(i);
    }
    return clusters;
}

inline std::vector<std::vector<std::size_t>> cluster_messages(const std::vector<Message>& messages,
                                                              SimilarityScore threshold) {
    std::vector<ByteView> views;
    views.reserve(messages.size());
    for (const auto& m : messages) views.emplace_back(m.payload);
    return cluster_payloads(views, threshold);
}

}  // namespace icsfuzz::inference
