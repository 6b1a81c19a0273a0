// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Oracle-guided depth-first search over edge resolutions: the d-radius
// satisfaction check, robustness verification and the radius of satisfaction.
// Both searches run on an explicit stack.

#include <gnnrv/oracle.hpp>

#include <chrono>
#include <cmath>
#include <optional>

namespace gnnrv {

struct SearchConfig {
    bool heuristics = true;
    bool incremental = true;
    bool reorder = true;
    bool budget_tighten = true;
    bool local_inference = true;
    bool bound_propagation = true;
    std::optional<double> timeout_s;
    std::size_t max_budget = 0;

    OracleOptions oracle_options() const { return {incremental, reorder, budget_tighten, bound_propagation}; }
};

struct SearchStats {
    std::size_t recursive_calls = 0;
    std::size_t oracle_calls = 0;
    std::size_t sat = 0;
    std::size_t unsat = 0;
    std::size_t unknown = 0;
    std::size_t fragile = 0;
    double wall_time_s = 0.0;

    double exploration_ratio() const {
        if (recursive_calls == 0) {
            return 0.0;
        }
        return std::log2(static_cast<double>(recursive_calls)) / static_cast<double>(fragile + 1);
    }
};

enum class VerdictKind : std::uint8_t { Robust, NonRobust, Radius, Timeout };

inline const char* to_string(VerdictKind k) {
    switch (k) {
    case VerdictKind::Robust: return "robust";
    case VerdictKind::NonRobust: return "nonrobust";
    case VerdictKind::Radius: return "radius";
    case VerdictKind::Timeout: return "timeout";
    }
    return "?";
}

struct Verdict {
    VerdictKind kind = VerdictKind::Robust;
    std::optional<FeaturedGraph> witness; // NonRobust
    int radius = 0;                       // Radius
};

struct SearchResult {
    Verdict verdict;
    SearchStats stats;
};

class SearchTimeout : public Error {
  public:
    SearchTimeout() : Error("search timed out") {}
};

// Unknown edge to branch on. With heuristics (node tasks only) the choice is
// restricted to the weak component of the target over normal and unknown
// edges and minimizes the endpoint distance to the target; ties and the
// plain rule use the smallest slot.
inline Edge pick_edge(const IncompleteGraph& h, const TaskTarget& target, bool heuristics,
                      const std::vector<std::size_t>* distances = nullptr) {
    if (h.unknown_slots().empty()) {
        throw Error("pick_edge: no unknown edges");
    }
    if (!heuristics || target.graph_task()) {
        return *h.unknown_slots().begin();
    }
    const Vertex v0 = *target.vertex;
    const std::size_t n = h.num_vertices();
    constexpr std::size_t inf = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> component(n, inf);
    std::vector<Vertex> queue{v0};
    component[v0] = 0;
    for (std::size_t i = 0; i < queue.size(); ++i) {
        const Vertex w = queue[i];
        for (const auto* adj : {&h.in_normal(w), &h.in_unknown(w), &h.out_normal(w), &h.out_unknown(w)}) {
            for (Vertex u : *adj) {
                if (component[u] == inf) {
                    component[u] = component[w] + 1;
                    queue.push_back(u);
                }
            }
        }
    }
    // Hop distance toward the target; the undirected BFS above as fallback.
    const std::vector<std::size_t>& dist = distances != nullptr ? *distances : component;
    std::optional<Edge> best;
    std::size_t best_d = inf;
    for (const Edge& e : h.unknown_slots()) {
        if (component[e.src] == inf && component[e.dst] == inf) {
            continue;
        }
        const std::size_t d = std::min(dist[e.src], dist[e.dst]);
        if (!best || d < best_d) {
            best = e;
            best_d = d;
        }
    }
    return best ? *best : *h.unknown_slots().begin();
}

// Unknown slots that the exhausted local budgets force to their reference
// status. Resolving to the reference spends nothing, so one round reaches
// the fixpoint.
inline std::vector<Edge> collect_local_inferences(const IncompleteGraph& h, std::span<const int> spent,
                                                  std::size_t local_budget) {
    EdgeSet out;
    for (Vertex v = 0; v < h.num_vertices(); ++v) {
        if (static_cast<std::size_t>(spent[v]) > local_budget) {
            throw Error("vertex " + std::to_string(v) + " spent " + std::to_string(spent[v]) +
                        " conversions, local budget is " + std::to_string(local_budget));
        }
        if (static_cast<std::size_t>(spent[v]) < local_budget) {
            continue;
        }
        // Conversions are charged to heads; undirected in-sets hold all adjacent vertices.
        for (Vertex u : h.in_unknown(v)) {
            out.insert(canonical(Edge{u, v}, h.directed()));
        }
    }
    return {out.begin(), out.end()};
}

// Resolves the inferred slots of `h` in place and returns them.
inline std::vector<Edge> infer_local(IncompleteGraph& h, const FeaturedGraph& g, std::span<const int> spent,
                                     std::size_t local_budget) {
    const auto edges = collect_local_inferences(h, spent, local_budget);
    for (const Edge& e : edges) {
        h.set_status(e, g.has_edge(e) ? EdgeStatus::Normal : EdgeStatus::Non);
    }
    return edges;
}

namespace detail {

class Searcher {
  public:
    Searcher(const RobustnessInstance& instance, const SearchConfig& config)
        : inst_(instance), config_(config), oracle_(instance, config.oracle_options()),
          start_(std::chrono::steady_clock::now()) {
        stats_.fragile = instance.fragile.size();
        if (!instance.target.graph_task()) {
            distances_.resize(instance.graph.num_vertices());
            for (Vertex v = 0; v < distances_.size(); ++v) {
                distances_[v] = oracle_.distance_to_target(v);
            }
        }
    }

    // Decides robustness from the oracle's current graph with remaining budget d.
    bool check(int d) {
        std::vector<CheckNode> stack;
        std::optional<bool> result = enter_check(d, stack);
        while (!stack.empty()) {
            CheckNode& top = stack.back();
            if (result) {
                // A child finished.
                oracle_.undo();
                if (*result || top.next == top.count) {
                    leave(top.inferred);
                    stack.pop_back();
                    continue; // pass the result up
                }
            }
            const Child c = top.children[top.next++];
            oracle_.apply_edge(top.edge, c.status);
            result = enter_check(c.budget, stack);
        }
        return *result;
    }

    // Largest certified budget from the oracle's current graph, capped at d.
    int radius(int d) {
        std::vector<RadiusNode> stack;
        std::optional<int> result = enter_radius(d, stack);
        while (!stack.empty()) {
            RadiusNode& top = stack.back();
            std::optional<Child> next;
            if (result) {
                oracle_.undo();
                const int r = *result;
                result.reset();
                if (top.stage == 1) {
                    next = after_first(top, r);
                } else {
                    top.value = top.second_is_flip ? std::min(top.value, r + 1) : std::min(top.value, r);
                }
                if (!next) {
                    result = top.value;
                    leave(top.inferred);
                    stack.pop_back();
                    continue;
                }
            } else {
                next = first_child(top);
            }
            oracle_.apply_edge(top.edge, next->status);
            result = enter_radius(next->budget, stack);
        }
        return *result;
    }

    Oracle& oracle() { return oracle_; }
    const std::optional<FeaturedGraph>& witness() const { return witness_; }

    SearchStats finish() {
        const auto& c = oracle_.counters();
        stats_.oracle_calls = c.queries;
        stats_.sat = c.sat;
        stats_.unsat = c.unsat;
        stats_.unknown = c.unknown;
        stats_.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        return stats_;
    }

  private:
    struct Child {
        EdgeStatus status;
        int budget;
    };
    struct CheckNode {
        Edge edge;
        Child children[2];
        int count = 0;
        int next = 0;
        bool inferred = false;
    };
    struct RadiusNode {
        Edge edge;
        int d = 0;
        bool flip_allowed = false;
        int stage = 0; // children entered so far
        bool second_is_flip = false;
        int value = 0;
        bool inferred = false;
    };

    void tick() {
        ++stats_.recursive_calls;
        if (config_.timeout_s &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() > *config_.timeout_s) {
            throw SearchTimeout();
        }
    }

    bool enter() {
        tick();
        if (!config_.local_inference || !inst_.local_budget) {
            return false;
        }
        std::vector<int> spent(inst_.graph.num_vertices());
        for (Vertex v = 0; v < spent.size(); ++v) {
            spent[v] = oracle_.spent_local(v);
        }
        const auto edges = collect_local_inferences(oracle_.graph(), spent, *inst_.local_budget);
        std::vector<std::pair<Edge, EdgeStatus>> changes;
        for (const Edge& e : edges) {
            changes.emplace_back(e, oracle_.reference_status(e));
        }
        if (changes.empty()) {
            return false;
        }
        oracle_.apply_edges(changes);
        return true;
    }

    void leave(bool inferred) {
        if (inferred) {
            oracle_.undo();
        }
    }

    std::optional<bool> enter_check(int d, std::vector<CheckNode>& stack) {
        const bool inferred = enter();
        const OracleVerdict q = oracle_.query(d);
        if (q != OracleVerdict::Unknown) {
            if (q == OracleVerdict::Sat && !witness_) {
                witness_ = oracle_.grounding();
            }
            leave(inferred);
            return q == OracleVerdict::Sat;
        }
        CheckNode node;
        node.inferred = inferred;
        node.edge = pick_edge(oracle_.graph(), inst_.target, config_.heuristics, heuristic_distances());
        const EdgeStatus keep = oracle_.reference_status(node.edge);
        const EdgeStatus flip = keep == EdgeStatus::Normal ? EdgeStatus::Non : EdgeStatus::Normal;
        const bool can_flip = d >= 1 && oracle_.flip_allowed(node.edge);
        if (config_.heuristics && can_flip) {
            node.children[node.count++] = {flip, d - 1};
        }
        node.children[node.count++] = {keep, d};
        if (!config_.heuristics && can_flip) {
            node.children[node.count++] = {flip, d - 1};
        }
        stack.push_back(node);
        return std::nullopt;
    }

    std::optional<int> enter_radius(int d, std::vector<RadiusNode>& stack) {
        const bool inferred = enter();
        const OracleVerdict q = oracle_.query(d);
        if (q != OracleVerdict::Unknown) {
            // Sat: the grounding itself violates and costs nothing more.
            leave(inferred);
            return q == OracleVerdict::Unsat ? d : -1;
        }
        RadiusNode node;
        node.inferred = inferred;
        node.d = d;
        node.edge = pick_edge(oracle_.graph(), inst_.target, config_.heuristics, heuristic_distances());
        node.flip_allowed = d >= 1 && oracle_.flip_allowed(node.edge);
        stack.push_back(node);
        return std::nullopt;
    }

    EdgeStatus keep_status(const RadiusNode& n) const { return oracle_.reference_status(n.edge); }
    EdgeStatus flip_status(const RadiusNode& n) const {
        return keep_status(n) == EdgeStatus::Normal ? EdgeStatus::Non : EdgeStatus::Normal;
    }

    Child first_child(RadiusNode& n) {
        n.stage = 1;
        if (config_.heuristics && n.flip_allowed) {
            return {flip_status(n), n.d - 1};
        }
        return {keep_status(n), n.d};
    }

    // Result of the first child is r; returns the second child, if any.
    std::optional<Child> after_first(RadiusNode& n, int r) {
        n.stage = 2;
        if (config_.heuristics && n.flip_allowed) {
            // r = d2; the kept branch only matters below d2 + 1.
            n.value = r + 1;
            n.second_is_flip = false;
            return Child{keep_status(n), std::min(n.d, r + 1)};
        }
        n.value = r;
        if (r <= 0 || !n.flip_allowed) {
            return std::nullopt;
        }
        n.second_is_flip = true;
        return Child{flip_status(n), std::min(n.d - 1, r - 1)};
    }

    const std::vector<std::size_t>* heuristic_distances() const {
        return distances_.empty() ? nullptr : &distances_;
    }

    const RobustnessInstance& inst_;
    SearchConfig config_;
    Oracle oracle_;
    std::chrono::steady_clock::time_point start_;
    SearchStats stats_;
    std::optional<FeaturedGraph> witness_;
    std::vector<std::size_t> distances_;
};

} // namespace detail

// Whether some admissible completion within the global budget violates the
// target: the d-radius satisfaction check from the initial relaxation.
inline SearchResult verify(const RobustnessInstance& instance, const SearchConfig& config = {}) {
    detail::Searcher s(instance, config);
    SearchResult out;
    try {
        const bool sat = s.check(static_cast<int>(instance.global_budget));
        if (sat) {
            out.verdict.kind = VerdictKind::NonRobust;
            out.verdict.witness = s.witness();
            if (!out.verdict.witness ||
                !in_perturbation_space(instance.graph, *out.verdict.witness, instance.fragile, instance.global_budget,
                                       instance.local_budget) ||
                !violates(instance.model, *out.verdict.witness, instance.target)) {
                throw Error("internal error: witness failed re-validation");
            }
        } else {
            out.verdict.kind = VerdictKind::Robust;
        }
    } catch (const SearchTimeout&) {
        out.verdict = {VerdictKind::Timeout, std::nullopt, 0};
    }
    out.stats = s.finish();
    return out;
}

// Largest d <= config.max_budget with no violating completion within
// distance d; -1 when the unperturbed graph already violates.
inline SearchResult compute_radius(const RobustnessInstance& instance, const SearchConfig& config) {
    detail::Searcher s(instance, config);
    SearchResult out;
    try {
        out.verdict.kind = VerdictKind::Radius;
        out.verdict.radius = s.radius(static_cast<int>(config.max_budget));
    } catch (const SearchTimeout&) {
        out.verdict = {VerdictKind::Timeout, std::nullopt, 0};
    }
    out.stats = s.finish();
    return out;
}

} // namespace gnnrv
