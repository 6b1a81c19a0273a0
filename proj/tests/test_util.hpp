// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gnnrv/gnnrv.hpp>

#include <gtest/gtest.h>

namespace gnnrv::testing {

inline FeaturedGraph make_graph(std::size_t n, bool directed, std::vector<Edge> edges,
                                const std::vector<std::vector<double>>& features) {
    return FeaturedGraph(n, directed, edges, Matrix::from_rows(features));
}

inline Matrix zeros(std::size_t n, std::size_t d) { return Matrix(n, d); }

// Every completion of h, by resolving its unknown slots independently.
inline std::vector<FeaturedGraph> completions(const IncompleteGraph& h) {
    const std::vector<Edge> unknown(h.unknown_slots().begin(), h.unknown_slots().end());
    std::vector<FeaturedGraph> out;
    for (std::size_t mask = 0; mask < (std::size_t{1} << unknown.size()); ++mask) {
        std::vector<Edge> edges(h.normal_slots().begin(), h.normal_slots().end());
        for (std::size_t i = 0; i < unknown.size(); ++i) {
            if (mask >> i & 1U) {
                edges.push_back(unknown[i]);
            }
        }
        out.emplace_back(h.num_vertices(), h.directed(), edges, h.features());
    }
    return out;
}

inline Layer dense_layer(std::vector<std::vector<double>> c, std::vector<std::vector<double>> a,
                         std::vector<double> b) {
    return {Matrix::from_rows(c), Matrix::from_rows(a), std::move(b)};
}

} // namespace gnnrv::testing
