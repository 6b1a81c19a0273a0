// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

// The partial oracle: a non-robustness tester on the grounding followed by
// the bound propagator, over an incrementally maintained cache.
//
// Edge resolutions are applied in frames. Each frame journals the statuses it
// overwrote and every cache entry it changed, so undo() restores the cache
// bit for bit. Within a frame only the affected vertices are recomputed:
// at layer l the candidates are the heads of resolved edges, the vertices that
// changed at layer l-1 and their out-neighbors. In node mode a vertex farther
// than L-l hops from the target is skipped at layer l.

#include <gnnrv/bounds.hpp>
#include <gnnrv/instance.hpp>

#include <deque>
#include <limits>

namespace gnnrv {

enum class OracleVerdict : std::uint8_t { Sat, Unsat, Unknown };

inline const char* to_string(OracleVerdict v) {
    switch (v) {
    case OracleVerdict::Sat: return "sat";
    case OracleVerdict::Unsat: return "unsat";
    case OracleVerdict::Unknown: return "unknown";
    }
    return "?";
}

struct OracleOptions {
    bool incremental = true;
    bool reorder = true;
    bool tighten = true;
    bool bound_propagation = true; // off: Unknown whenever the tester is not decisive
};

struct OracleCounters {
    std::size_t queries = 0;
    std::size_t sat = 0;
    std::size_t unsat = 0;
    std::size_t unknown = 0;
    std::size_t message_products = 0;
    std::vector<std::size_t> recomputed; // per layer, index 0 unused
};

class Oracle {
  public:
    static constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

    Oracle(const RobustnessInstance& instance, OracleOptions options)
        : inst_(instance), opts_(options), h_((instance.validate(), instance.initial_relaxation())),
          spent_local_(h_.num_vertices(), 0), eval_(instance.model, h_, instance.graph, bound_options(), &budget_) {
        if (inst_.model.aggregation() == Aggregation::Max) {
            opts_.reorder = false;
        }
        num_layers_ = inst_.model.num_layers();
        counters_.recomputed.assign(num_layers_ + 1, 0);
        last_dirty_.assign(num_layers_ + 1, {});
        compute_distances();
        bound_budget_ = static_cast<int>(inst_.global_budget);
        sync_budget();
        planes_ = propagate(inst_.model, h_, inst_.graph, bound_options(), &budget_);
    }

    Oracle(const Oracle&) = delete;
    Oracle& operator=(const Oracle&) = delete;

    const IncompleteGraph& graph() const { return h_; }
    const RobustnessInstance& instance() const { return inst_; }
    const BoundPlanes& planes() const { return planes_; }
    const OracleCounters& counters() const { return counters_; }
    const OracleOptions& options() const { return opts_; }
    std::size_t depth() const { return frames_.size(); }
    std::size_t spent() const { return spent_global_; }
    int spent_local(Vertex v) const { return spent_local_.at(v); }
    int bound_budget() const { return bound_budget_; }

    // Hop distance from v to the target over the initial relaxation (node mode).
    std::size_t distance_to_target(Vertex v) const { return dist_.empty() ? 0 : dist_.at(v); }

    // Whether entry (l, v) is kept up to date; skipped entries cannot reach the target.
    bool maintained(std::size_t l, Vertex v) const {
        return dist_.empty() || l == 0 || (dist_[v] != kUnreachable && dist_[v] + l <= num_layers_);
    }

    // Vertices recomputed per layer by the most recent update.
    const std::vector<std::vector<Vertex>>& last_dirty() const { return last_dirty_; }

    // Whether resolving e against the reference keeps every local budget.
    bool flip_allowed(Edge e) const {
        if (!inst_.local_budget) {
            return true;
        }
        for (Vertex v : charged_vertices(canonical(e, h_.directed()), h_.directed())) {
            if (static_cast<std::size_t>(spent_local_[v]) >= *inst_.local_budget) {
                return false;
            }
        }
        return true;
    }

    EdgeStatus reference_status(Edge e) const {
        return inst_.graph.has_edge(e) ? EdgeStatus::Normal : EdgeStatus::Non;
    }

    void apply_edge(Edge e, EdgeStatus status) {
        const std::pair<Edge, EdgeStatus> one[] = {{e, status}};
        apply_edges(one);
    }

    // Resolves unknown slots in one undoable frame.
    void apply_edges(std::span<const std::pair<Edge, EdgeStatus>> changes) {
        Frame frame;
        frame.old_budget = bound_budget_;
        std::set<Vertex> heads;
        for (const auto& [raw, status] : changes) {
            const Edge e = canonical(raw, h_.directed());
            if (status == EdgeStatus::Unknown) {
                throw Error("apply_edge: slot " + to_string(e) + " must resolve to normal or non-edge");
            }
            if (h_.status(e) != EdgeStatus::Unknown) {
                throw Error("apply_edge: slot " + to_string(e) + " is not unknown");
            }
            const bool flips = status != reference_status(e);
            if (flips && !flip_allowed(e)) {
                throw Error("apply_edge: converting " + to_string(e) + " exceeds the local budget");
            }
            h_.set_status(e, status);
            frame.edges.push_back({e, flips});
            const auto charged = charged_vertices(e, h_.directed());
            if (flips) {
                ++spent_global_;
                for (Vertex v : charged) {
                    ++spent_local_[v];
                }
            }
            heads.insert(e.dst);
            if (!h_.directed()) {
                heads.insert(e.src);
            }
        }
        frames_.push_back(std::move(frame));
        sync_budget();
        if (opts_.incremental) {
            update(heads, false);
        }
    }

    void undo() {
        if (frames_.empty()) {
            throw Error("undo: journal underflow");
        }
        Frame frame = std::move(frames_.back());
        frames_.pop_back();
        for (auto it = frame.saved.rbegin(); it != frame.saved.rend(); ++it) {
            BoundEvaluator::store(planes_, it->layer, it->vertex, it->entry);
        }
        for (auto it = frame.edges.rbegin(); it != frame.edges.rend(); ++it) {
            h_.set_status(it->slot, EdgeStatus::Unknown);
            if (it->flipped) {
                --spent_global_;
                for (Vertex v : charged_vertices(it->slot, h_.directed())) {
                    --spent_local_[v];
                }
            }
        }
        bound_budget_ = frame.old_budget;
        sync_budget();
    }

    // O(h, d): d is the remaining global budget.
    OracleVerdict query(int d) {
        if (d < 0) {
            throw Error("oracle: negative budget " + std::to_string(d));
        }
        ++counters_.queries;
        if (!opts_.incremental) {
            bound_budget_ = d;
            sync_budget();
            planes_ = propagate(inst_.model, h_, inst_.graph, bound_options(), &budget_);
        }
        if (violates(exact_scores(), inst_.target)) {
            ++counters_.sat;
            return OracleVerdict::Sat;
        }
        if (h_.is_normal() || d == 0) {
            ++counters_.unsat;
            return OracleVerdict::Unsat;
        }
        if (!opts_.bound_propagation) {
            ++counters_.unknown;
            return OracleVerdict::Unknown;
        }
        if (opts_.tighten && bound_budget_ != d) {
            bound_budget_ = d;
            sync_budget();
            update({}, true);
        }
        if (decide_unsat(task_bounds(inst_.model, planes_, inst_.target), inst_.target)) {
            ++counters_.unsat;
            return OracleVerdict::Unsat;
        }
        ++counters_.unknown;
        return OracleVerdict::Unknown;
    }

    // Scores of the task on the grounding of h.
    std::vector<double> exact_scores() const {
        const PlaneLayer& last = planes_.layers.back();
        if (inst_.target.graph_task()) {
            Matrix m(h_.num_vertices(), last.dim);
            std::copy(last.exact.begin(), last.exact.end(), m.data().begin());
            return pooled_scores(inst_.model, m);
        }
        const auto r = last.exact_row(*inst_.target.vertex);
        return {r.begin(), r.end()};
    }

    FeaturedGraph grounding() const { return gnnrv::grounding(h_, inst_.graph); }

    // From-scratch planes for the current graph and budget, for comparison.
    BoundPlanes recompute() const {
        BudgetContext b = budget_;
        return propagate(inst_.model, h_, inst_.graph, bound_options(), &b);
    }

  private:
    struct ResolvedSlot {
        Edge slot;
        bool flipped;
    };
    struct SavedEntry {
        std::size_t layer;
        Vertex vertex;
        PlaneEntry entry;
    };
    struct Frame {
        std::vector<ResolvedSlot> edges;
        std::vector<SavedEntry> saved;
        int old_budget = 0;
    };

    BoundOptions bound_options() const { return {opts_.reorder, opts_.tighten}; }

    void sync_budget() {
        budget_.remaining_global = bound_budget_;
        if (inst_.local_budget) {
            budget_.remaining_local.resize(h_.num_vertices());
            for (std::size_t v = 0; v < h_.num_vertices(); ++v) {
                budget_.remaining_local[v] = static_cast<int>(*inst_.local_budget) - spent_local_[v];
            }
        }
    }

    void compute_distances() {
        if (inst_.target.graph_task()) {
            return;
        }
        dist_.assign(h_.num_vertices(), kUnreachable);
        std::deque<Vertex> queue{*inst_.target.vertex};
        dist_[*inst_.target.vertex] = 0;
        while (!queue.empty()) {
            const Vertex w = queue.front();
            queue.pop_front();
            for (const auto* in : {&h_.in_normal(w), &h_.in_unknown(w)}) {
                for (Vertex u : *in) {
                    if (dist_[u] == kUnreachable) {
                        dist_[u] = dist_[w] + 1;
                        queue.push_back(u);
                    }
                }
            }
        }
    }

    void update(const std::set<Vertex>& base, bool budget_changed) {
        std::set<Vertex> changed_prev;
        std::set<Vertex> dirty;
        PlaneEntry entry;
        PlaneEntry old;
        for (std::size_t l = 1; l <= num_layers_; ++l) {
            dirty = base;
            for (Vertex u : changed_prev) {
                dirty.insert(u);
                dirty.insert(h_.out_normal(u).begin(), h_.out_normal(u).end());
                dirty.insert(h_.out_unknown(u).begin(), h_.out_unknown(u).end());
            }
            if (budget_changed) {
                for (Vertex v = 0; v < h_.num_vertices(); ++v) {
                    if (!h_.in_unknown(v).empty()) {
                        dirty.insert(v);
                    }
                }
            }
            auto& record = last_dirty_[l];
            record.clear();
            std::set<Vertex> changed;
            for (Vertex v : dirty) {
                if (!maintained(l, v)) {
                    continue;
                }
                record.push_back(v);
                ++counters_.recomputed[l];
                eval_.compute(planes_, l, v, entry);
                if (entry.same_values(planes_.layers[l], v)) {
                    continue;
                }
                if (!frames_.empty()) {
                    BoundEvaluator::load(planes_, l, v, old);
                    frames_.back().saved.push_back({l, v, old});
                }
                eval_.fill_message(l, entry);
                if (eval_.reorder() && l < num_layers_) {
                    ++counters_.message_products;
                }
                BoundEvaluator::store(planes_, l, v, entry);
                changed.insert(v);
            }
            changed_prev = std::move(changed);
        }
    }

    const RobustnessInstance& inst_;
    OracleOptions opts_;
    IncompleteGraph h_;
    std::size_t spent_global_ = 0;
    std::vector<int> spent_local_;
    BudgetContext budget_;
    BoundEvaluator eval_;
    BoundPlanes planes_;
    int bound_budget_ = 0;
    std::size_t num_layers_ = 0;
    std::vector<std::size_t> dist_;
    std::vector<Frame> frames_;
    OracleCounters counters_;
    std::vector<std::vector<Vertex>> last_dirty_;
};

// A^(l+1) applied to a layer-l interval, the per-neighbor product consumed by
// reordered Sum/Mean aggregation.
inline FeatureInterval reordered_message(const GnnModel& model, std::size_t l, const FeatureInterval& x) {
    if (model.aggregation() == Aggregation::Max) {
        throw Error("reordered messages are defined for sum and mean aggregation only");
    }
    if (l >= model.num_layers()) {
        throw Error("layer " + std::to_string(l) + " has no outgoing message");
    }
    return relax_mat(model.layer(l + 1).neighbor, x.upper, x.lower);
}

} // namespace gnnrv
