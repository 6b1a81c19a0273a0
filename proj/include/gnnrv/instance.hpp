// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

// A robustness question: model, graph, target, fragile slots and budgets.

#include <gnnrv/graph.hpp>
#include <gnnrv/model.hpp>

#include <optional>

namespace gnnrv {

enum class RunMode : std::uint8_t { Verify, Radius };

inline const char* to_string(RunMode m) { return m == RunMode::Verify ? "verify" : "radius"; }

struct RobustnessInstance {
    GnnModel model;
    FeaturedGraph graph;
    TaskTarget target;
    EdgeSet fragile; // canonical slots
    std::size_t global_budget = 0;
    std::optional<std::size_t> local_budget;
    RunMode mode = RunMode::Verify;
    std::size_t max_budget = 0; // radius mode

    std::size_t num_classes() const {
        return target.graph_task() ? model.graph_classes() : model.output_dim();
    }

    IncompleteGraph initial_relaxation() const { return relaxation(graph, fragile); }

    void validate() const {
        if (graph.feature_dim() != model.input_dim()) {
            throw Error("graph features have dimension " + std::to_string(graph.feature_dim()) + ", model expects " +
                        std::to_string(model.input_dim()));
        }
        if (target.graph_task()) {
            if (!model.pooling()) {
                throw Error("graph classification requires a pooling layer");
            }
        } else {
            graph.check_vertex(*target.vertex);
        }
        validate_target(target, num_classes());
        for (const Edge& e : fragile) {
            graph.check_vertex(e.src);
            graph.check_vertex(e.dst);
            if (canonical(e, graph.directed()) != e) {
                throw Error("fragile slot " + to_string(e) + " is not in canonical (min,max) form");
            }
        }
    }
};

// General robustness for the class the model predicts on the unperturbed graph.
inline TaskTarget predicted_target(const GnnModel& model, const FeaturedGraph& g, std::optional<Vertex> vertex) {
    TaskTarget t;
    t.vertex = vertex;
    t.cls = vertex ? predict_node(model, g, *vertex) : predict_graph(model, g);
    return t;
}

} // namespace gnnrv
