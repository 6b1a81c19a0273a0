// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reference answers by exhaustive enumeration, and the subset-sum gadgets.

#include <gnnrv/instance.hpp>

#include <bit>
#include <optional>

namespace gnnrv {

inline constexpr std::size_t kDefaultMaxCompletions = std::size_t{1} << 20;

// Calls f(graph, changed_count) for every resolution of the fragile slots,
// in ascending bitmask order over the sorted slots (bit i set = slot i
// flipped relative to g; mask 0 is g itself). Stops early when f returns false.
template <typename F>
void for_each_completion(const FeaturedGraph& g, const EdgeSet& fragile, F&& f,
                         std::size_t max_completions = kDefaultMaxCompletions) {
    const std::vector<Edge> slots(fragile.begin(), fragile.end());
    if (slots.size() >= 63 || (std::size_t{1} << slots.size()) > max_completions) {
        throw Error("enumeration of 2^" + std::to_string(slots.size()) + " completions exceeds the guard of " +
                    std::to_string(max_completions));
    }
    const std::size_t total = std::size_t{1} << slots.size();
    for (std::size_t mask = 0; mask < total; ++mask) {
        EdgeSet edges = g.edges();
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if ((mask >> i & 1U) == 0) {
                continue;
            }
            const Edge e = slots[i];
            if (g.has_edge(e)) {
                edges.erase(e);
                if (!g.directed()) {
                    edges.erase(reversed(e));
                }
            } else {
                edges.insert(e);
            }
        }
        std::vector<Edge> list;
        for (const Edge& e : edges) {
            if (g.directed() || e.src <= e.dst) {
                list.push_back(e);
            }
        }
        const FeaturedGraph candidate(g.num_vertices(), g.directed(), list, g.features());
        if (!f(candidate, static_cast<std::size_t>(std::popcount(mask)))) {
            return;
        }
    }
}

struct BruteResult {
    bool robust = true;
    std::optional<FeaturedGraph> witness;
};

inline BruteResult brute_check(const RobustnessInstance& inst, std::size_t max_completions = kDefaultMaxCompletions) {
    inst.validate();
    BruteResult out;
    for_each_completion(
        inst.graph, inst.fragile,
        [&](const FeaturedGraph& cand, std::size_t) {
            if (!in_perturbation_space(inst.graph, cand, inst.fragile, inst.global_budget, inst.local_budget)) {
                return true;
            }
            if (violates(inst.model, cand, inst.target)) {
                out.robust = false;
                out.witness = cand;
                return false;
            }
            return true;
        },
        max_completions);
    return out;
}

// Largest d <= max_budget with no violating completion within distance d,
// respecting the local budget; -1 when g itself violates.
inline int brute_radius(const RobustnessInstance& inst, std::size_t max_budget,
                        std::size_t max_completions = kDefaultMaxCompletions) {
    inst.validate();
    std::optional<std::size_t> closest;
    for_each_completion(
        inst.graph, inst.fragile,
        [&](const FeaturedGraph& cand, std::size_t dist) {
            if (closest && dist >= *closest) {
                return true;
            }
            if (!in_perturbation_space(inst.graph, cand, inst.fragile, inst.fragile.size(), inst.local_budget)) {
                return true;
            }
            if (violates(inst.model, cand, inst.target)) {
                closest = dist;
            }
            return true;
        },
        max_completions);
    if (!closest) {
        return static_cast<int>(max_budget);
    }
    return std::min(static_cast<int>(*closest) - 1, static_cast<int>(max_budget));
}

// ---------------------------------------------------------------------------
// Subset-sum gadgets.

struct GadgetSpec {
    std::vector<int> values; // S
    int target = 0;          // t
    Aggregation aggregation = Aggregation::Sum;

    void validate() const {
        if (values.empty()) {
            throw Error("gadget needs at least one value");
        }
        for (int s : values) {
            if (s <= 0) {
                throw Error("gadget values must be positive");
            }
        }
        if (target <= 0) {
            throw Error("gadget target must be positive");
        }
    }
};

inline bool subset_sum_solve(std::span<const int> values, int target) {
    if (target < 0) {
        return false;
    }
    std::vector<char> reach(static_cast<std::size_t>(target) + 1, 0);
    reach[0] = 1;
    for (int s : values) {
        if (s <= 0) {
            throw Error("subset_sum_solve: values must be positive");
        }
        for (int x = target; x >= s; --x) {
            reach[x] = reach[x] || reach[x - s];
        }
    }
    return reach[target] != 0;
}

// The target vertex v is vertex 0 and must keep class 2 (index 1) under
// every admissible perturbation; it can be flipped iff some subset of S sums
// to t. Global budget |S|, general robustness.
inline RobustnessInstance make_gadget(const GadgetSpec& spec) {
    spec.validate();
    const std::size_t n = spec.values.size();
    RobustnessInstance inst;
    inst.target.vertex = 0;
    inst.target.cls = 1;
    inst.global_budget = n;
    inst.max_budget = n;

    // Both outputs of the final layer: [1/2, |y|] from hidden [relu(y), relu(-y)].
    auto abs_head = [](std::size_t in) {
        Layer out;
        out.self = Matrix(2, in);
        for (std::size_t j = 0; j < in; ++j) {
            out.self(1, j) = 1.0;
        }
        out.neighbor = Matrix(2, in);
        out.bias = {0.5, 0.0};
        return out;
    };

    if (spec.aggregation == Aggregation::Sum || spec.aggregation == Aggregation::Mean) {
        const double scale = spec.aggregation == Aggregation::Mean ? static_cast<double>(n + 1) : 1.0;
        Matrix x(n + 2, 1);
        x(1, 0) = -static_cast<double>(spec.target) * scale;
        for (std::size_t i = 0; i < n; ++i) {
            x(i + 2, 0) = static_cast<double>(spec.values[i]) * scale;
        }
        std::vector<Edge> edges;
        for (Vertex u = 1; u < n + 2; ++u) {
            edges.push_back({u, 0});
        }
        Layer first{Matrix(2, 1), Matrix::from_rows({{1.0}, {-1.0}}), {0.0, 0.0}};
        inst.model = GnnModel(spec.aggregation, {first, abs_head(2)});
        inst.graph = FeaturedGraph(n + 2, true, edges, x);
        inst.fragile = EdgeSet(edges.begin(), edges.end());
        return inst;
    }

    // Max: unit-vector features; u_1..u_n are vertices 1..n, u_{n+1} is n+1.
    const std::size_t d = n + 1;
    Matrix x(n + 2, d);
    for (std::size_t i = 0; i < n; ++i) {
        x(i + 1, i) = static_cast<double>(spec.values[i]);
    }
    x(n + 1, n) = static_cast<double>(spec.target);
    std::vector<Edge> edges;
    for (Vertex u = 1; u < n + 2; ++u) {
        edges.push_back({u, 0});
    }
    Layer first{Matrix(d, d), Matrix::identity(d), std::vector<double>(d, 0.0)};
    Layer second{Matrix(2, d), Matrix(2, d), {0.0, 0.0}};
    for (std::size_t j = 0; j < d; ++j) {
        const double sign = j < n ? 1.0 : -1.0;
        second.self(0, j) = -sign;
        second.self(1, j) = sign;
    }
    inst.model = GnnModel(Aggregation::Max, {first, second, abs_head(2)});
    inst.graph = FeaturedGraph(n + 2, true, edges, x);
    inst.fragile = EdgeSet(edges.begin(), edges.end() - 1);
    return inst;
}

} // namespace gnnrv
