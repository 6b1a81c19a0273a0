// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Featured graphs, incomplete graphs and the refinement / grounding /
// relaxation / distance algebra over them.
//
// Vertex pairs are called slots. A directed graph has one slot per ordered
// pair; an undirected graph has one slot per unordered pair, written (u,v)
// with u <= v. Undirected graphs store both orientations internally so that
// "incoming neighbors" and "adjacent vertices" coincide.

#include <gnnrv/core.hpp>

#include <optional>
#include <string>
#include <vector>

namespace gnnrv {

enum class EdgeStatus : std::uint8_t { Normal, Unknown, Non };

inline const char* to_string(EdgeStatus s) {
    switch (s) {
    case EdgeStatus::Normal: return "normal";
    case EdgeStatus::Unknown: return "unknown";
    case EdgeStatus::Non: return "non";
    }
    return "?";
}

class FeaturedGraph {
  public:
    FeaturedGraph() = default;

    FeaturedGraph(std::size_t num_vertices, bool directed, std::span<const Edge> edges, Matrix features)
        : n_(num_vertices), directed_(directed), features_(std::move(features)), in_(num_vertices) {
        if (features_.rows() != n_) {
            throw Error("feature matrix has " + std::to_string(features_.rows()) + " rows for " + std::to_string(n_) +
                        " vertices");
        }
        for (const Edge& e : edges) {
            check_vertex(e.src);
            check_vertex(e.dst);
            edges_.insert(e);
            if (!directed_) {
                edges_.insert(reversed(e));
            }
        }
        for (const Edge& e : edges_) {
            in_[e.dst].push_back(e.src);
        }
    }

    std::size_t num_vertices() const { return n_; }
    bool directed() const { return directed_; }
    const EdgeSet& edges() const { return edges_; }
    const Matrix& features() const { return features_; }
    std::size_t feature_dim() const { return features_.cols(); }
    std::span<const double> feature(Vertex v) const { return features_.row(v); }

    bool has_edge(Vertex u, Vertex v) const { return edges_.contains(Edge{u, v}); }
    bool has_edge(Edge e) const { return edges_.contains(e); }

    // Ascending.
    const std::vector<Vertex>& in_neighbors(Vertex v) const { return in_[v]; }

    // One entry per slot (undirected edges once, as (min,max)).
    std::vector<Edge> edge_slots() const {
        std::vector<Edge> out;
        for (const Edge& e : edges_) {
            if (directed_ || e.src <= e.dst) {
                out.push_back(e);
            }
        }
        return out;
    }

    bool operator==(const FeaturedGraph& o) const {
        return n_ == o.n_ && directed_ == o.directed_ && edges_ == o.edges_ && features_ == o.features_;
    }

    void check_vertex(Vertex v) const {
        if (v >= n_) {
            throw Error("vertex " + std::to_string(v) + " out of range (num_vertices = " + std::to_string(n_) + ")");
        }
    }

  private:
    std::size_t n_ = 0;
    bool directed_ = true;
    EdgeSet edges_;
    Matrix features_;
    std::vector<std::vector<Vertex>> in_;
};

struct NeighborSets {
    std::vector<Vertex> normal;
    std::vector<Vertex> unknown;
};

class IncompleteGraph {
  public:
    IncompleteGraph() = default;

    IncompleteGraph(std::size_t num_vertices, bool directed, Matrix features)
        : n_(num_vertices), directed_(directed), features_(std::move(features)), in_normal_(num_vertices),
          in_unknown_(num_vertices), out_normal_(num_vertices), out_unknown_(num_vertices) {
        if (features_.rows() != n_) {
            throw Error("feature matrix has " + std::to_string(features_.rows()) + " rows for " + std::to_string(n_) +
                        " vertices");
        }
    }

    static IncompleteGraph from_graph(const FeaturedGraph& g) {
        IncompleteGraph h(g.num_vertices(), g.directed(), g.features());
        for (const Edge& e : g.edge_slots()) {
            h.set_status(e, EdgeStatus::Normal);
        }
        return h;
    }

    std::size_t num_vertices() const { return n_; }
    bool directed() const { return directed_; }
    const Matrix& features() const { return features_; }

    EdgeStatus status(Vertex u, Vertex v) const {
        check_vertex(u);
        check_vertex(v);
        if (in_normal_[v].contains(u)) {
            return EdgeStatus::Normal;
        }
        if (in_unknown_[v].contains(u)) {
            return EdgeStatus::Unknown;
        }
        return EdgeStatus::Non;
    }
    EdgeStatus status(Edge e) const { return status(e.src, e.dst); }

    void set_status(Edge e, EdgeStatus s) {
        check_vertex(e.src);
        check_vertex(e.dst);
        e = canonical(e, directed_);
        set_oriented(e, s);
        if (!directed_ && e.src != e.dst) {
            set_oriented(reversed(e), s);
        }
        normal_slots_.erase(e);
        unknown_slots_.erase(e);
        if (s == EdgeStatus::Normal) {
            normal_slots_.insert(e);
        } else if (s == EdgeStatus::Unknown) {
            unknown_slots_.insert(e);
        }
    }

    // Incoming by status; for undirected graphs, all adjacent vertices.
    const std::set<Vertex>& in_normal(Vertex v) const { return in_normal_[v]; }
    const std::set<Vertex>& in_unknown(Vertex v) const { return in_unknown_[v]; }
    const std::set<Vertex>& out_normal(Vertex v) const { return out_normal_[v]; }
    const std::set<Vertex>& out_unknown(Vertex v) const { return out_unknown_[v]; }

    // Canonical slots.
    const EdgeSet& normal_slots() const { return normal_slots_; }
    const EdgeSet& unknown_slots() const { return unknown_slots_; }

    bool is_normal() const { return unknown_slots_.empty(); }

    // Only valid for normal graphs.
    FeaturedGraph to_graph() const {
        if (!is_normal()) {
            throw Error("incomplete graph still has " + std::to_string(unknown_slots_.size()) + " unknown edges");
        }
        std::vector<Edge> edges(normal_slots_.begin(), normal_slots_.end());
        return FeaturedGraph(n_, directed_, edges, features_);
    }

    void check_vertex(Vertex v) const {
        if (v >= n_) {
            throw Error("vertex " + std::to_string(v) + " out of range (num_vertices = " + std::to_string(n_) + ")");
        }
    }

  private:
    void set_oriented(Edge e, EdgeStatus s) {
        in_normal_[e.dst].erase(e.src);
        in_unknown_[e.dst].erase(e.src);
        out_normal_[e.src].erase(e.dst);
        out_unknown_[e.src].erase(e.dst);
        if (s == EdgeStatus::Normal) {
            in_normal_[e.dst].insert(e.src);
            out_normal_[e.src].insert(e.dst);
        } else if (s == EdgeStatus::Unknown) {
            in_unknown_[e.dst].insert(e.src);
            out_unknown_[e.src].insert(e.dst);
        }
    }

    std::size_t n_ = 0;
    bool directed_ = true;
    Matrix features_;
    std::vector<std::set<Vertex>> in_normal_, in_unknown_, out_normal_, out_unknown_;
    EdgeSet normal_slots_, unknown_slots_;
};

inline NeighborSets neighbors(const IncompleteGraph& h, Vertex v) {
    h.check_vertex(v);
    return {{h.in_normal(v).begin(), h.in_normal(v).end()}, {h.in_unknown(v).begin(), h.in_unknown(v).end()}};
}

namespace detail {

inline void require_same_frame(std::size_t n1, bool d1, const Matrix& x1, std::size_t n2, bool d2, const Matrix& x2) {
    if (n1 != n2) {
        throw Error("vertex sets differ: " + std::to_string(n1) + " vs " + std::to_string(n2) + " vertices");
    }
    if (d1 != d2) {
        throw Error("cannot compare a directed with an undirected graph");
    }
    if (!(x1 == x2)) {
        throw Error("feature maps differ");
    }
}

} // namespace detail

// True iff every completion of h2 is a completion of h1.
inline bool refines(const IncompleteGraph& h2, const IncompleteGraph& h1) {
    detail::require_same_frame(h2.num_vertices(), h2.directed(), h2.features(), h1.num_vertices(), h1.directed(),
                               h1.features());
    for (const Edge& e : h1.normal_slots()) {
        if (!h2.normal_slots().contains(e)) {
            return false;
        }
    }
    for (const Edge& e : h2.normal_slots()) {
        if (!h1.normal_slots().contains(e) && !h1.unknown_slots().contains(e)) {
            return false;
        }
    }
    for (const Edge& e : h2.unknown_slots()) {
        if (!h1.unknown_slots().contains(e)) {
            return false;
        }
    }
    return true;
}

// The completion of h closest to g: unknown slots copy g's status.
inline FeaturedGraph grounding(const IncompleteGraph& h, const FeaturedGraph& g) {
    detail::require_same_frame(h.num_vertices(), h.directed(), h.features(), g.num_vertices(), g.directed(),
                               g.features());
    std::vector<Edge> edges(h.normal_slots().begin(), h.normal_slots().end());
    for (const Edge& e : h.unknown_slots()) {
        if (g.has_edge(e)) {
            edges.push_back(e);
        }
    }
    return FeaturedGraph(h.num_vertices(), h.directed(), edges, h.features());
}

inline IncompleteGraph relaxation(const FeaturedGraph& g, const EdgeSet& fragile) {
    IncompleteGraph h = IncompleteGraph::from_graph(g);
    for (const Edge& e : fragile) {
        g.check_vertex(e.src);
        g.check_vertex(e.dst);
        h.set_status(e, EdgeStatus::Unknown);
    }
    return h;
}

// Number of slots that are normal in one graph and a non-edge in the other.
inline std::size_t distance(const IncompleteGraph& h1, const IncompleteGraph& h2) {
    detail::require_same_frame(h1.num_vertices(), h1.directed(), h1.features(), h2.num_vertices(), h2.directed(),
                               h2.features());
    std::size_t d = 0;
    for (const Edge& e : h1.normal_slots()) {
        if (h2.status(e) == EdgeStatus::Non) {
            ++d;
        }
    }
    for (const Edge& e : h2.normal_slots()) {
        if (h1.status(e) == EdgeStatus::Non) {
            ++d;
        }
    }
    return d;
}

inline std::size_t distance(const IncompleteGraph& h, const FeaturedGraph& g) {
    return distance(h, IncompleteGraph::from_graph(g));
}

inline std::size_t distance(const FeaturedGraph& a, const FeaturedGraph& b) {
    return distance(IncompleteGraph::from_graph(a), IncompleteGraph::from_graph(b));
}

// Slots whose status differs between two normal graphs, canonical and ascending.
inline std::vector<Edge> changed_slots(const FeaturedGraph& g, const FeaturedGraph& candidate) {
    detail::require_same_frame(g.num_vertices(), g.directed(), g.features(), candidate.num_vertices(),
                               candidate.directed(), candidate.features());
    EdgeSet out;
    for (const Edge& e : g.edge_slots()) {
        if (!candidate.has_edge(e)) {
            out.insert(e);
        }
    }
    for (const Edge& e : candidate.edge_slots()) {
        if (!g.has_edge(e)) {
            out.insert(e);
        }
    }
    return {out.begin(), out.end()};
}

// Vertices whose local budget a conversion of slot e is charged to: the head
// for directed graphs, both endpoints for undirected graphs.
inline std::vector<Vertex> charged_vertices(Edge e, bool directed) {
    if (directed || e.src == e.dst) {
        return {e.dst};
    }
    return {e.src, e.dst};
}

inline std::vector<int> local_conversions(std::size_t n, bool directed, std::span<const Edge> changed) {
    std::vector<int> per_vertex(n, 0);
    for (const Edge& e : changed) {
        for (Vertex v : charged_vertices(e, directed)) {
            ++per_vertex[v];
        }
    }
    return per_vertex;
}

inline bool in_perturbation_space(const FeaturedGraph& g, const FeaturedGraph& candidate, const EdgeSet& fragile,
                                  std::size_t global_budget, std::optional<std::size_t> local_budget = std::nullopt) {
    const auto changed = changed_slots(g, candidate);
    if (changed.size() > global_budget) {
        return false;
    }
    for (const Edge& e : changed) {
        if (!fragile.contains(canonical(e, g.directed()))) {
            return false;
        }
    }
    if (local_budget) {
        for (int c : local_conversions(g.num_vertices(), g.directed(), changed)) {
            if (static_cast<std::size_t>(c) > *local_budget) {
                return false;
            }
        }
    }
    return true;
}

// Fragile-edge policies; self-loops are never included.
inline EdgeSet fragile_delete_only(const FeaturedGraph& g) {
    EdgeSet out;
    for (const Edge& e : g.edge_slots()) {
        if (e.src != e.dst) {
            out.insert(e);
        }
    }
    return out;
}

inline EdgeSet fragile_all_pairs(const FeaturedGraph& g) {
    EdgeSet out;
    const auto n = static_cast<Vertex>(g.num_vertices());
    for (Vertex u = 0; u < n; ++u) {
        for (Vertex v = g.directed() ? 0 : u + 1; v < n; ++v) {
            if (u != v) {
                out.insert(Edge{u, v});
            }
        }
    }
    return out;
}

// Canonicalizes and validates an explicit pair list.
inline EdgeSet fragile_from_pairs(const FeaturedGraph& g, std::span<const Edge> pairs, bool allow_self_loops = false) {
    EdgeSet out;
    for (const Edge& e : pairs) {
        g.check_vertex(e.src);
        g.check_vertex(e.dst);
        if (e.src == e.dst && !allow_self_loops) {
            throw Error("fragile pair " + to_string(e) + " is a self-loop");
        }
        out.insert(canonical(e, g.directed()));
    }
    return out;
}

} // namespace gnnrv
