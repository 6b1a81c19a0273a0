// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Interval bound propagation over all completions of an incomplete graph.
//
// For every layer l and vertex v the propagator keeps three things:
//   - the exact feature of v in the grounding of h (unknown edges resolved
//     to their status in the reference graph), used by the tester;
//   - lower/upper bounds valid for every completion of h (or every
//     budget-feasible completion when tightening is on);
//   - a degenerate flag, set when nothing upstream of (l, v) is uncertain.
//     Degenerate entries are evaluated with the forward routine itself and
//     are bit-identical to forward on any completion.
//
// Non-degenerate endpoints are widened by a bound on the rounding error of
// both the bound computation and the float forward pass, so the intervals
// contain the float features, not only the real-arithmetic ones.

#include <gnnrv/graph.hpp>
#include <gnnrv/model.hpp>

#include <cfloat>
#include <cmath>
#include <optional>
#include <vector>

namespace gnnrv {

struct FeatureInterval {
    std::vector<double> lower;
    std::vector<double> upper;
};

// Sound interval image of x -> A x over the box [lower, upper].
inline FeatureInterval relax_mat(const Matrix& a, std::span<const double> upper, std::span<const double> lower) {
    if (upper.size() != a.cols() || lower.size() != a.cols()) {
        throw Error("relax_mat: matrix has " + std::to_string(a.cols()) + " columns, vectors have " +
                    std::to_string(upper.size()) + "/" + std::to_string(lower.size()) + " entries");
    }
    FeatureInterval out{std::vector<double>(a.rows()), std::vector<double>(a.rows())};
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        double hi = 0.0;
        double lo = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (r[j] >= 0.0) {
                hi += r[j] * upper[j];
                lo += r[j] * lower[j];
            } else {
                hi += r[j] * lower[j];
                lo += r[j] * upper[j];
            }
        }
        out.upper[i] = hi;
        out.lower[i] = lo;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation bounds, one feature dimension at a time.
//
// S1 are the values of normal neighbors, S2 those of unknown neighbors. Any
// subset T of S2 may be selected; the bound covers aggr(S1 + T) for all of
// them. With a budget R, `in_reference` says which unknown neighbors are
// edges of the reference graph (selected unless the adversary spends budget
// to drop them) and at most R selections may deviate from the reference.

struct AggregationBound {
    double lower = 0.0;
    double upper = 0.0;
};

namespace detail {

inline double sum_of(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) {
        s += x;
    }
    return s;
}

inline std::vector<double> negated(std::span<const double> xs) {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out[i] = -xs[i];
    }
    return out;
}

inline double sum_upper(std::span<const double> s1, std::span<const double> s2, std::span<const std::uint8_t> in_ref,
                        std::optional<int> budget) {
    double total = sum_of(s1);
    if (!budget) {
        for (double x : s2) {
            total += std::max(x, 0.0);
        }
        return total;
    }
    // Gains: dropping a negative reference edge or adding a positive non-edge.
    std::vector<std::pair<double, std::size_t>> gains;
    for (std::size_t i = 0; i < s2.size(); ++i) {
        if (in_ref[i] ? s2[i] < 0.0 : s2[i] > 0.0) {
            gains.emplace_back(std::fabs(s2[i]), i);
        }
    }
    std::sort(gains.begin(), gains.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const std::size_t take = std::min<std::size_t>(gains.size(), static_cast<std::size_t>(std::max(*budget, 0)));
    std::vector<std::uint8_t> flipped(s2.size(), 0);
    for (std::size_t i = 0; i < take; ++i) {
        flipped[gains[i].second] = 1;
    }
    for (std::size_t i = 0; i < s2.size(); ++i) {
        if ((in_ref[i] != 0) != (flipped[i] != 0)) {
            total += s2[i];
        }
    }
    return total;
}

inline double max_upper(std::span<const double> s1, std::span<const double> s2, std::span<const std::uint8_t> in_ref,
                        std::optional<int> budget) {
    bool any = false;
    double best = 0.0;
    auto consider = [&](double x) {
        best = any ? std::max(best, x) : x;
        any = true;
    };
    for (double x : s1) {
        consider(x);
    }
    if (!budget) {
        for (double x : s2) {
            consider(x);
        }
        if (s1.empty()) {
            consider(0.0); // empty selection
        }
        return any ? best : 0.0;
    }
    std::size_t kept = 0;
    for (std::size_t i = 0; i < s2.size(); ++i) {
        if (in_ref[i]) {
            ++kept;
            consider(s2[i]);
        } else if (*budget >= 1) {
            consider(s2[i]);
        }
    }
    if (s1.empty() && kept <= static_cast<std::size_t>(std::max(*budget, 0))) {
        consider(0.0);
    }
    return any ? best : 0.0;
}

inline double max_lower(std::span<const double> s1, std::span<const double> s2, std::span<const std::uint8_t> in_ref,
                        std::optional<int> budget) {
    std::optional<double> guaranteed;
    for (double x : s1) {
        guaranteed = guaranteed ? std::max(*guaranteed, x) : x;
    }
    if (budget) {
        std::vector<double> kept;
        for (std::size_t i = 0; i < s2.size(); ++i) {
            if (in_ref[i]) {
                kept.push_back(s2[i]);
            }
        }
        const auto r = static_cast<std::size_t>(std::max(*budget, 0));
        if (kept.size() > r) {
            // The adversary drops at most r of them; the (r+1)-th largest survives.
            std::nth_element(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(r), kept.end(), std::greater<>());
            const double survivor = kept[r];
            guaranteed = guaranteed ? std::max(*guaranteed, survivor) : survivor;
        }
    }
    if (guaranteed) {
        return *guaranteed;
    }
    double lo = 0.0;
    for (double x : s2) {
        lo = std::min(lo, x);
    }
    return lo;
}

inline double mean_upper(std::span<const double> s1, std::span<const double> s2, std::span<const std::uint8_t> in_ref,
                         std::optional<int> budget) {
    const double base = sum_of(s1);
    const double k1 = static_cast<double>(s1.size());
    auto candidate = [&](double extra, double count) { return (k1 + count) == 0.0 ? 0.0 : (base + extra) / (k1 + count); };
    if (!budget) {
        std::vector<double> sorted(s2.begin(), s2.end());
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        double best = candidate(0.0, 0.0);
        double prefix = 0.0;
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            prefix += sorted[i];
            best = std::max(best, candidate(prefix, static_cast<double>(i + 1)));
        }
        return best;
    }
    std::vector<double> kept;  // dropped smallest first
    std::vector<double> added; // added largest first
    for (std::size_t i = 0; i < s2.size(); ++i) {
        (in_ref[i] ? kept : added).push_back(s2[i]);
    }
    std::sort(kept.begin(), kept.end());
    std::sort(added.begin(), added.end(), std::greater<>());
    // suffix[r] = sum of kept[r..]
    std::vector<double> suffix(kept.size() + 1, 0.0);
    for (std::size_t i = kept.size(); i-- > 0;) {
        suffix[i] = kept[i] + suffix[i + 1];
    }
    std::vector<double> prefix(added.size() + 1, 0.0);
    for (std::size_t i = 0; i < added.size(); ++i) {
        prefix[i + 1] = prefix[i] + added[i];
    }
    const auto r_max = static_cast<std::size_t>(std::max(*budget, 0));
    double best = -HUGE_VAL;
    for (std::size_t r = 0; r <= std::min(r_max, kept.size()); ++r) {
        for (std::size_t a = 0; a <= std::min(r_max - r, added.size()); ++a) {
            const double count = static_cast<double>(kept.size() - r + a);
            best = std::max(best, candidate(suffix[r] + prefix[a], count));
        }
    }
    return best;
}

} // namespace detail

inline AggregationBound aggregate_bounds(Aggregation aggregation, std::span<const double> normal_upper,
                                         std::span<const double> normal_lower, std::span<const double> unknown_upper,
                                         std::span<const double> unknown_lower,
                                         std::span<const std::uint8_t> unknown_in_reference = {},
                                         std::optional<int> budget = std::nullopt) {
    if (normal_upper.size() != normal_lower.size() || unknown_upper.size() != unknown_lower.size()) {
        throw Error("aggregate_bounds: upper/lower multisets differ in size");
    }
    if (budget && unknown_in_reference.size() != unknown_upper.size()) {
        throw Error("aggregate_bounds: budget tightening needs the reference status of every unknown neighbor");
    }
    AggregationBound out;
    switch (aggregation) {
    case Aggregation::Sum: {
        out.upper = detail::sum_upper(normal_upper, unknown_upper, unknown_in_reference, budget);
        const auto n = detail::negated(normal_lower);
        const auto u = detail::negated(unknown_lower);
        out.lower = -detail::sum_upper(n, u, unknown_in_reference, budget);
        break;
    }
    case Aggregation::Max:
        out.upper = detail::max_upper(normal_upper, unknown_upper, unknown_in_reference, budget);
        out.lower = detail::max_lower(normal_lower, unknown_lower, unknown_in_reference, budget);
        break;
    case Aggregation::Mean: {
        out.upper = detail::mean_upper(normal_upper, unknown_upper, unknown_in_reference, budget);
        const auto n = detail::negated(normal_lower);
        const auto u = detail::negated(unknown_lower);
        out.lower = -detail::mean_upper(n, u, unknown_in_reference, budget);
        break;
    }
    }
    return out;
}

// Entrywise vector form; each inner vector is one neighbor's feature bound.
inline FeatureInterval aggregate_bounds(Aggregation aggregation, const std::vector<std::vector<double>>& normal_upper,
                                        const std::vector<std::vector<double>>& normal_lower,
                                        const std::vector<std::vector<double>>& unknown_upper,
                                        const std::vector<std::vector<double>>& unknown_lower,
                                        const std::vector<std::uint8_t>& unknown_in_reference = {},
                                        std::optional<int> budget = std::nullopt) {
    std::optional<std::size_t> dim;
    for (const auto* set : {&normal_upper, &normal_lower, &unknown_upper, &unknown_lower}) {
        for (const auto& v : *set) {
            if (dim && v.size() != *dim) {
                throw Error("aggregate_bounds: neighbor vectors differ in dimension");
            }
            dim = v.size();
        }
    }
    const std::size_t d = dim.value_or(0);
    FeatureInterval out{std::vector<double>(d), std::vector<double>(d)};
    std::vector<double> nu, nl, uu, ul;
    for (std::size_t j = 0; j < d; ++j) {
        nu.clear();
        nl.clear();
        uu.clear();
        ul.clear();
        for (const auto& v : normal_upper) nu.push_back(v[j]);
        for (const auto& v : normal_lower) nl.push_back(v[j]);
        for (const auto& v : unknown_upper) uu.push_back(v[j]);
        for (const auto& v : unknown_lower) ul.push_back(v[j]);
        const auto b = aggregate_bounds(aggregation, nu, nl, uu, ul, unknown_in_reference, budget);
        out.lower[j] = b.lower;
        out.upper[j] = b.upper;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-layer planes.

struct PlaneLayer {
    std::size_t dim = 0;
    std::size_t msg_dim = 0; // d^(l+1) when reordered messages are kept
    std::vector<double> exact, upper, lower;
    std::vector<std::uint8_t> degenerate;
    // A^(l+1) applied to this layer's interval, per vertex (reordering).
    std::vector<double> msg_upper, msg_lower;

    std::span<const double> exact_row(Vertex v) const { return {exact.data() + v * dim, dim}; }
    std::span<const double> upper_row(Vertex v) const { return {upper.data() + v * dim, dim}; }
    std::span<const double> lower_row(Vertex v) const { return {lower.data() + v * dim, dim}; }
    std::span<const double> msg_upper_row(Vertex v) const { return {msg_upper.data() + v * msg_dim, msg_dim}; }
    std::span<const double> msg_lower_row(Vertex v) const { return {msg_lower.data() + v * msg_dim, msg_dim}; }
};

struct BoundPlanes {
    std::vector<PlaneLayer> layers; // 0..L

    FeatureInterval interval(std::size_t l, Vertex v) const {
        const auto& p = layers.at(l);
        return {{p.lower_row(v).begin(), p.lower_row(v).end()}, {p.upper_row(v).begin(), p.upper_row(v).end()}};
    }
    std::vector<double> exact(std::size_t l, Vertex v) const {
        const auto r = layers.at(l).exact_row(v);
        return {r.begin(), r.end()};
    }
};

struct BoundOptions {
    bool reorder = false; // ignored for max aggregation
    bool tighten = false;
};

// Remaining budgets for tightening. An empty local vector means no local budget.
struct BudgetContext {
    int remaining_global = 0;
    std::vector<int> remaining_local;

    int for_vertex(Vertex v) const {
        return remaining_local.empty() ? remaining_global : std::min(remaining_global, remaining_local[v]);
    }
};

// One recomputed (layer, vertex) entry.
struct PlaneEntry {
    std::vector<double> exact, upper, lower;
    std::uint8_t degenerate = 1;
    std::vector<double> msg_upper, msg_lower;

    bool same_values(const PlaneLayer& p, Vertex v) const {
        return degenerate == p.degenerate[v] && std::equal(exact.begin(), exact.end(), p.exact_row(v).begin()) &&
               std::equal(upper.begin(), upper.end(), p.upper_row(v).begin()) &&
               std::equal(lower.begin(), lower.end(), p.lower_row(v).begin());
    }
};

inline double rounding_slack(std::size_t terms, std::size_t dim) {
    return 4.0 * static_cast<double>(terms + 2 * dim + 8) * DBL_EPSILON;
}

// Evaluates single entries of the planes for a fixed model, graph, reference
// graph and options. Holds references only.
class BoundEvaluator {
  public:
    BoundEvaluator(const GnnModel& model, const IncompleteGraph& h, const FeaturedGraph& reference,
                   BoundOptions options, const BudgetContext* budget)
        : model_(model), h_(h), ref_(reference), options_(options), budget_(budget) {
        if (h.features().cols() != model.input_dim()) {
            throw Error("graph features have dimension " + std::to_string(h.features().cols()) +
                        ", model expects " + std::to_string(model.input_dim()));
        }
        if (options_.tighten && budget_ == nullptr) {
            throw Error("budget tightening requested without a budget context");
        }
        if (model_.aggregation() == Aggregation::Max) {
            options_.reorder = false;
        }
    }

    bool reorder() const { return options_.reorder; }

    BoundPlanes allocate() const {
        const std::size_t n = h_.num_vertices();
        BoundPlanes planes;
        for (std::size_t l = 0; l <= model_.num_layers(); ++l) {
            PlaneLayer p;
            p.dim = model_.dim(l);
            p.msg_dim = options_.reorder && l < model_.num_layers() ? model_.dim(l + 1) : 0;
            p.exact.assign(n * p.dim, 0.0);
            p.upper.assign(n * p.dim, 0.0);
            p.lower.assign(n * p.dim, 0.0);
            p.degenerate.assign(n, 1);
            p.msg_upper.assign(n * p.msg_dim, 0.0);
            p.msg_lower.assign(n * p.msg_dim, 0.0);
            planes.layers.push_back(std::move(p));
        }
        auto& p0 = planes.layers[0];
        const auto x = h_.features().data();
        std::copy(x.begin(), x.end(), p0.exact.begin());
        std::copy(x.begin(), x.end(), p0.upper.begin());
        std::copy(x.begin(), x.end(), p0.lower.begin());
        for (Vertex v = 0; v < n; ++v) {
            PlaneEntry e;
            e.upper.assign(p0.upper_row(v).begin(), p0.upper_row(v).end());
            e.lower = e.upper;
            fill_message(0, e);
            store_message(planes, 0, v, e);
        }
        return planes;
    }

    // Recomputes (l, v) for l >= 1 from layer l-1, without the message.
    void compute(const BoundPlanes& planes, std::size_t l, Vertex v, PlaneEntry& out) const {
        const PlaneLayer& prev = planes.layers[l - 1];
        const Layer& layer = model_.layer(l);
        const std::size_t din = prev.dim;
        const std::size_t dout = layer.self.rows();
        out.exact.assign(dout, 0.0);
        out.upper.assign(dout, 0.0);
        out.lower.assign(dout, 0.0);
        out.msg_upper.clear();
        out.msg_lower.clear();

        const auto& normal = h_.in_normal(v);
        const auto& unknown = h_.in_unknown(v);

        // Grounded exact feature; neighbors merged in ascending order.
        grounded_.clear();
        {
            auto ni = normal.begin();
            auto ui = unknown.begin();
            while (ni != normal.end() || ui != unknown.end()) {
                if (ui == unknown.end() || (ni != normal.end() && *ni < *ui)) {
                    grounded_.push_back(*ni++);
                } else {
                    if (ref_.has_edge(*ui, v)) {
                        grounded_.push_back(*ui);
                    }
                    ++ui;
                }
            }
        }
        agg_.assign(din, 0.0);
        aggregate_rows(prev.exact, din, grounded_, agg_);
        apply_layer(layer, prev.exact_row(v), agg_, out.exact);

        bool degenerate = prev.degenerate[v] && unknown.empty();
        for (Vertex u : normal) {
            degenerate = degenerate && prev.degenerate[u];
        }
        out.degenerate = degenerate ? 1 : 0;
        if (degenerate) {
            aggregate_rows(prev.upper, din, normal, agg_);
            apply_layer(layer, prev.upper_row(v), agg_, out.upper);
            out.lower = out.upper;
            return;
        }

        std::optional<int> budget;
        in_ref_.clear();
        if (options_.tighten) {
            budget = budget_->for_vertex(v);
            for (Vertex u : unknown) {
                in_ref_.push_back(ref_.has_edge(u, v) ? 1 : 0);
            }
        }

        // Pre-activation bounds. Each enabled refinement is intersected with
        // the variants it refines, computed from the same layer below.
        std::vector<double>& pre_up = pre_up_;
        std::vector<double>& pre_lo = pre_lo_;
        pre_activation(prev, layer, v, options_.reorder, budget, pre_up, pre_lo);
        auto intersect = [&](bool reorder, std::optional<int> b) {
            pre_activation(prev, layer, v, reorder, b, alt_up_, alt_lo_);
            for (std::size_t i = 0; i < dout; ++i) {
                pre_up[i] = std::min(pre_up[i], alt_up_[i]);
                pre_lo[i] = std::max(pre_lo[i], alt_lo_[i]);
            }
        };
        if (options_.reorder) {
            intersect(false, budget);
        }
        if (budget) {
            if (options_.reorder) {
                intersect(true, std::nullopt);
            }
            intersect(false, std::nullopt);
        }
        const auto self_up = prev.upper_row(v);
        const auto self_lo = prev.lower_row(v);

        // Rounding margin.
        mag_.assign(din, 0.0);
        auto add_mag = [&](Vertex u) {
            const auto up = prev.upper_row(u);
            const auto lo = prev.lower_row(u);
            for (std::size_t j = 0; j < din; ++j) {
                mag_[j] += std::max(std::fabs(up[j]), std::fabs(lo[j]));
            }
        };
        for (Vertex u : normal) add_mag(u);
        for (Vertex u : unknown) add_mag(u);
        const double gamma = rounding_slack(normal.size() + unknown.size(), din);
        for (std::size_t i = 0; i < dout; ++i) {
            const auto c = layer.self.row(i);
            const auto a = layer.neighbor.row(i);
            double m = std::fabs(layer.bias[i]);
            for (std::size_t j = 0; j < din; ++j) {
                m += std::fabs(c[j]) * std::max(std::fabs(self_up[j]), std::fabs(self_lo[j]));
                m += std::fabs(a[j]) * mag_[j];
            }
            const double margin = gamma * m;
            out.upper[i] = relu(pre_up[i] + margin);
            out.lower[i] = relu(pre_lo[i] - margin);
        }
    }

    void pre_activation(const PlaneLayer& prev, const Layer& layer, Vertex v, bool reorder, std::optional<int> budget,
                        std::vector<double>& pre_up, std::vector<double>& pre_lo) const {
        const auto& normal = h_.in_normal(v);
        const auto& unknown = h_.in_unknown(v);
        const std::size_t din = prev.dim;
        const std::size_t dout = layer.self.rows();
        const std::span<const std::uint8_t> in_ref = budget ? std::span<const std::uint8_t>(in_ref_)
                                                            : std::span<const std::uint8_t>();
        pre_up.assign(dout, 0.0);
        pre_lo.assign(dout, 0.0);
        const auto self_up = prev.upper_row(v);
        const auto self_lo = prev.lower_row(v);
        if (reorder) {
            for (std::size_t i = 0; i < dout; ++i) {
                gather_messages(prev, normal, i, nu_, nl_);
                gather_messages(prev, unknown, i, uu_, ul_);
                const auto b = aggregate_bounds(model_.aggregation(), nu_, nl_, uu_, ul_, in_ref, budget);
                const auto [cu, cl] = relax_row(layer.self.row(i), self_up, self_lo);
                pre_up[i] = cu + b.upper + layer.bias[i];
                pre_lo[i] = cl + b.lower + layer.bias[i];
            }
            return;
        }
        agg_up_.assign(din, 0.0);
        agg_lo_.assign(din, 0.0);
        for (std::size_t j = 0; j < din; ++j) {
            gather_values(prev, normal, j, nu_, nl_);
            gather_values(prev, unknown, j, uu_, ul_);
            const auto b = aggregate_bounds(model_.aggregation(), nu_, nl_, uu_, ul_, in_ref, budget);
            agg_up_[j] = b.upper;
            agg_lo_[j] = b.lower;
        }
        for (std::size_t i = 0; i < dout; ++i) {
            const auto [cu, cl] = relax_row(layer.self.row(i), self_up, self_lo);
            const auto [au, al] = relax_row(layer.neighbor.row(i), agg_up_, agg_lo_);
            pre_up[i] = cu + au + layer.bias[i];
            pre_lo[i] = cl + al + layer.bias[i];
        }
    }

    // The reordering cache: A^(l+1) times the interval of the entry.
    void fill_message(std::size_t l, PlaneEntry& e) const {
        if (!options_.reorder || l >= model_.num_layers()) {
            e.msg_upper.clear();
            e.msg_lower.clear();
            return;
        }
        const Matrix& a = model_.layer(l + 1).neighbor;
        e.msg_upper.assign(a.rows(), 0.0);
        e.msg_lower.assign(a.rows(), 0.0);
        for (std::size_t i = 0; i < a.rows(); ++i) {
            const auto [u, lo] = relax_row(a.row(i), e.upper, e.lower);
            e.msg_upper[i] = u;
            e.msg_lower[i] = lo;
        }
    }

    static void store(BoundPlanes& planes, std::size_t l, Vertex v, const PlaneEntry& e) {
        PlaneLayer& p = planes.layers[l];
        std::copy(e.exact.begin(), e.exact.end(), p.exact.begin() + v * p.dim);
        std::copy(e.upper.begin(), e.upper.end(), p.upper.begin() + v * p.dim);
        std::copy(e.lower.begin(), e.lower.end(), p.lower.begin() + v * p.dim);
        p.degenerate[v] = e.degenerate;
        store_message(planes, l, v, e);
    }

    static void load(const BoundPlanes& planes, std::size_t l, Vertex v, PlaneEntry& e) {
        const PlaneLayer& p = planes.layers[l];
        e.exact.assign(p.exact_row(v).begin(), p.exact_row(v).end());
        e.upper.assign(p.upper_row(v).begin(), p.upper_row(v).end());
        e.lower.assign(p.lower_row(v).begin(), p.lower_row(v).end());
        e.degenerate = p.degenerate[v];
        e.msg_upper.assign(p.msg_upper_row(v).begin(), p.msg_upper_row(v).end());
        e.msg_lower.assign(p.msg_lower_row(v).begin(), p.msg_lower_row(v).end());
    }

  private:
    static void store_message(BoundPlanes& planes, std::size_t l, Vertex v, const PlaneEntry& e) {
        PlaneLayer& p = planes.layers[l];
        if (p.msg_dim == 0) {
            return;
        }
        std::copy(e.msg_upper.begin(), e.msg_upper.end(), p.msg_upper.begin() + v * p.msg_dim);
        std::copy(e.msg_lower.begin(), e.msg_lower.end(), p.msg_lower.begin() + v * p.msg_dim);
    }

    static std::pair<double, double> relax_row(std::span<const double> r, std::span<const double> up,
                                               std::span<const double> lo) {
        double hi = 0.0;
        double low = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (r[j] >= 0.0) {
                hi += r[j] * up[j];
                low += r[j] * lo[j];
            } else {
                hi += r[j] * lo[j];
                low += r[j] * up[j];
            }
        }
        return {hi, low};
    }

    template <typename Range>
    void aggregate_rows(const std::vector<double>& data, std::size_t dim, const Range& nbrs,
                        std::vector<double>& out) const {
        std::fill(out.begin(), out.end(), 0.0);
        std::size_t count = 0;
        const bool is_max = model_.aggregation() == Aggregation::Max;
        for (Vertex u : nbrs) {
            const double* x = data.data() + u * dim;
            for (std::size_t j = 0; j < dim; ++j) {
                if (is_max) {
                    out[j] = count == 0 ? x[j] : std::max(out[j], x[j]);
                } else {
                    out[j] += x[j];
                }
            }
            ++count;
        }
        if (model_.aggregation() == Aggregation::Mean && count > 0) {
            for (double& x : out) {
                x /= static_cast<double>(count);
            }
        }
    }

    static void gather_values(const PlaneLayer& prev, const std::set<Vertex>& vs, std::size_t j,
                              std::vector<double>& up, std::vector<double>& lo) {
        up.clear();
        lo.clear();
        for (Vertex u : vs) {
            up.push_back(prev.upper[u * prev.dim + j]);
            lo.push_back(prev.lower[u * prev.dim + j]);
        }
    }

    static void gather_messages(const PlaneLayer& prev, const std::set<Vertex>& vs, std::size_t i,
                                std::vector<double>& up, std::vector<double>& lo) {
        up.clear();
        lo.clear();
        for (Vertex u : vs) {
            up.push_back(prev.msg_upper[u * prev.msg_dim + i]);
            lo.push_back(prev.msg_lower[u * prev.msg_dim + i]);
        }
    }

    const GnnModel& model_;
    const IncompleteGraph& h_;
    const FeaturedGraph& ref_;
    BoundOptions options_;
    const BudgetContext* budget_;

    // scratch
    mutable std::vector<Vertex> grounded_;
    mutable std::vector<std::uint8_t> in_ref_;
    mutable std::vector<double> agg_, agg_up_, agg_lo_, pre_up_, pre_lo_, alt_up_, alt_lo_, mag_, nu_, nl_, uu_, ul_;
};

// From-scratch propagation over all layers and vertices.
inline BoundPlanes propagate(const GnnModel& model, const IncompleteGraph& h, const FeaturedGraph& reference,
                             BoundOptions options = {}, const BudgetContext* budget = nullptr) {
    BoundEvaluator eval(model, h, reference, options, budget);
    BoundPlanes planes = eval.allocate();
    PlaneEntry entry;
    for (std::size_t l = 1; l <= model.num_layers(); ++l) {
        for (Vertex v = 0; v < h.num_vertices(); ++v) {
            eval.compute(planes, l, v, entry);
            eval.fill_message(l, entry);
            BoundEvaluator::store(planes, l, v, entry);
        }
    }
    return planes;
}

// ---------------------------------------------------------------------------
// Pooling and the certification test.

inline FeatureInterval pooled_bounds(const GnnModel& model, const BoundPlanes& planes) {
    if (!model.pooling()) {
        throw Error("model has no pooling layer");
    }
    const PlaneLayer& last = planes.layers.back();
    const std::size_t n = last.degenerate.size();
    const Pooling& pool = *model.pooling();
    bool degenerate = true;
    for (std::uint8_t d : last.degenerate) {
        degenerate = degenerate && d;
    }
    if (degenerate) {
        Matrix m(n, last.dim);
        std::copy(last.upper.begin(), last.upper.end(), m.data().begin());
        auto s = pooled_scores(model, m);
        return {s, s};
    }
    std::vector<double> su(last.dim, 0.0), sl(last.dim, 0.0), mag(last.dim, 0.0);
    for (Vertex v = 0; v < n; ++v) {
        for (std::size_t j = 0; j < last.dim; ++j) {
            su[j] += last.upper[v * last.dim + j];
            sl[j] += last.lower[v * last.dim + j];
            mag[j] += std::max(std::fabs(last.upper[v * last.dim + j]), std::fabs(last.lower[v * last.dim + j]));
        }
    }
    FeatureInterval out = relax_mat(pool.weight, su, sl);
    const double gamma = rounding_slack(n, last.dim);
    for (std::size_t i = 0; i < out.upper.size(); ++i) {
        double m = std::fabs(pool.bias[i]);
        for (std::size_t j = 0; j < last.dim; ++j) {
            m += std::fabs(pool.weight(i, j)) * mag[j];
        }
        out.upper[i] += pool.bias[i] + gamma * m;
        out.lower[i] += pool.bias[i] - gamma * m;
    }
    return out;
}

// Score interval of the task: the target vertex's last layer, or the pooled graph score.
inline FeatureInterval task_bounds(const GnnModel& model, const BoundPlanes& planes, const TaskTarget& target) {
    if (target.graph_task()) {
        return pooled_bounds(model, planes);
    }
    return planes.interval(model.num_layers(), *target.vertex);
}

// True when the bounds prove that no competitor can strictly beat the class:
// lower[c] >= upper[c'] for every competitor c' (or the single weak one).
inline bool decide_unsat(const FeatureInterval& scores, const TaskTarget& target) {
    validate_target(target, scores.upper.size());
    const double own = scores.lower[target.cls];
    if (target.competitor) {
        return own >= scores.upper[*target.competitor];
    }
    for (std::size_t c = 0; c < scores.upper.size(); ++c) {
        if (c != target.cls && !(own >= scores.upper[c])) {
            return false;
        }
    }
    return true;
}

} // namespace gnnrv
