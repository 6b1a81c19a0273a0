// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Seeded random models, graphs and instances for differential testing and
// synthetic benchmarks.

#include <gnnrv/instance.hpp>

#include <cmath>
#include <random>

namespace gnnrv {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (double& x : m.data()) {
        x = uniform(rng, -scale, scale);
    }
    return m;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale) {
    std::vector<double> v(n);
    for (double& x : v) {
        x = uniform(rng, -scale, scale);
    }
    return v;
}

// dims = d^0..d^L; weights scaled by 1/sqrt(fan-in) when `normalized`.
inline GnnModel random_model(Rng& rng, Aggregation aggregation, const std::vector<std::size_t>& dims,
                             std::size_t pooling_classes = 0, bool normalized = false) {
    std::vector<Layer> layers;
    for (std::size_t l = 1; l < dims.size(); ++l) {
        const double s = normalized ? 1.0 / std::sqrt(static_cast<double>(dims[l - 1])) : 1.0;
        layers.push_back(
            {random_matrix(rng, dims[l], dims[l - 1], s), random_matrix(rng, dims[l], dims[l - 1], s),
             random_vector(rng, dims[l], 0.5 * s)});
    }
    std::optional<Pooling> pooling;
    if (pooling_classes > 0) {
        pooling = Pooling{random_matrix(rng, pooling_classes, dims.back(), 1.0), random_vector(rng, pooling_classes, 0.5)};
    }
    return GnnModel(aggregation, std::move(layers), std::move(pooling));
}

// Each slot (no self-loops) present with probability p.
inline FeaturedGraph random_graph(Rng& rng, std::size_t n, bool directed, double p, std::size_t feature_dim) {
    std::vector<Edge> edges;
    for (Vertex u = 0; u < n; ++u) {
        for (Vertex v = directed ? 0 : u + 1; v < n; ++v) {
            if (u != v && coin(rng, p)) {
                edges.push_back({u, v});
            }
        }
    }
    return FeaturedGraph(n, directed, edges, random_matrix(rng, n, feature_dim, 1.0));
}

// Exactly m distinct slots (no self-loops), sampled uniformly.
inline FeaturedGraph random_graph_edges(Rng& rng, std::size_t n, bool directed, std::size_t m,
                                        std::size_t feature_dim) {
    const std::size_t slots = directed ? n * (n - 1) : n * (n - 1) / 2;
    if (m > slots) {
        throw Error("cannot place " + std::to_string(m) + " edges on " + std::to_string(n) + " vertices");
    }
    EdgeSet chosen;
    while (chosen.size() < m) {
        const auto u = static_cast<Vertex>(uniform_int(rng, 0, n - 1));
        const auto v = static_cast<Vertex>(uniform_int(rng, 0, n - 1));
        if (u != v) {
            chosen.insert(canonical(Edge{u, v}, directed));
        }
    }
    const std::vector<Edge> edges(chosen.begin(), chosen.end());
    return FeaturedGraph(n, directed, edges, random_matrix(rng, n, feature_dim, 1.0));
}

struct SmallFamily {
    std::size_t min_vertices = 2;
    std::size_t max_vertices = 8;
    std::size_t max_fragile = 10;
    std::size_t min_layers = 2;
    std::size_t max_layers = 3;
    std::size_t max_dim = 4;
};

// A small instance with every knob sampled: direction, task, mode, budgets,
// fragile slots (present edges and non-edges alike) and the target class.
inline RobustnessInstance sample_small_instance(Rng& rng, Aggregation aggregation, const SmallFamily& fam = {}) {
    RobustnessInstance inst;
    const std::size_t n = uniform_int(rng, fam.min_vertices, fam.max_vertices);
    const bool directed = coin(rng);
    const bool graph_task = coin(rng, 0.3);
    const std::size_t layers = uniform_int(rng, fam.min_layers, fam.max_layers);
    std::vector<std::size_t> dims;
    for (std::size_t l = 0; l <= layers; ++l) {
        dims.push_back(uniform_int(rng, 1, fam.max_dim));
    }
    std::size_t classes = 0;
    if (graph_task) {
        classes = uniform_int(rng, 2, fam.max_dim);
    } else {
        dims.back() = uniform_int(rng, 2, fam.max_dim);
    }
    inst.model = random_model(rng, aggregation, dims, classes);
    inst.graph = random_graph(rng, n, directed, uniform(rng, 0.15, 0.5), dims.front());

    std::vector<Edge> pairs;
    for (Vertex u = 0; u < n; ++u) {
        for (Vertex v = directed ? 0 : u + 1; v < n; ++v) {
            if (u != v) {
                pairs.push_back({u, v});
            }
        }
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
    const std::size_t k = uniform_int(rng, 0, std::min(fam.max_fragile, pairs.size()));
    inst.fragile = EdgeSet(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(k));
    inst.global_budget = uniform_int(rng, 0, k);
    if (coin(rng, 0.4)) {
        inst.local_budget = uniform_int(rng, 0, 3);
    }
    inst.max_budget = uniform_int(rng, 0, k);

    if (!graph_task) {
        inst.target.vertex = static_cast<Vertex>(uniform_int(rng, 0, n - 1));
    }
    const std::size_t num_classes = graph_task ? classes : dims.back();
    if (coin(rng, 0.7)) {
        inst.target.cls = graph_task ? predict_graph(inst.model, inst.graph)
                                     : predict_node(inst.model, inst.graph, *inst.target.vertex);
    } else {
        inst.target.cls = uniform_int(rng, 0, num_classes - 1);
    }
    if (coin(rng, 0.3)) {
        std::size_t c = uniform_int(rng, 0, num_classes - 2);
        if (c >= inst.target.cls) {
            ++c;
        }
        inst.target.competitor = c;
    }
    inst.validate();
    return inst;
}

// An incomplete graph with up to max_unknown unknown slots, and the graph it was relaxed from.
inline std::pair<FeaturedGraph, EdgeSet> sample_relaxation(Rng& rng, std::size_t n, bool directed, std::size_t dim,
                                                           std::size_t max_unknown) {
    FeaturedGraph g = random_graph(rng, n, directed, uniform(rng, 0.15, 0.6), dim);
    std::vector<Edge> pairs;
    for (Vertex u = 0; u < n; ++u) {
        for (Vertex v = directed ? 0 : u; v < n; ++v) {
            pairs.push_back({u, v});
        }
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
    const std::size_t k = uniform_int(rng, 0, std::min(max_unknown, pairs.size()));
    return {std::move(g), EdgeSet(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(k))};
}

} // namespace gnnrv
