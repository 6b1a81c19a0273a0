// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0

#include "test_util.hpp"

namespace gnnrv {
namespace {

using testing::completions;
using testing::dense_layer;
using testing::make_graph;

bool layers_equal(const PlaneLayer& a, const PlaneLayer& b) {
    return a.dim == b.dim && a.exact == b.exact && a.upper == b.upper && a.lower == b.lower &&
           a.degenerate == b.degenerate && a.msg_upper == b.msg_upper && a.msg_lower == b.msg_lower;
}

bool planes_equal(const BoundPlanes& a, const BoundPlanes& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (!layers_equal(a.layers[l], b.layers[l])) return false;
    return true;
}

// Maintained entries of the oracle agree with a from-scratch propagation.
::testing::AssertionResult maintained_match(const Oracle& o) {
    const BoundPlanes fresh = o.recompute();
    const auto& cur = o.planes();
    for (std::size_t l = 0; l < cur.layers.size(); ++l) {
        const auto& a = cur.layers[l];
        const auto& b = fresh.layers[l];
        for (Vertex v = 0; v < o.graph().num_vertices(); ++v) {
            if (!o.maintained(l, v)) continue;
            auto eq = [](std::span<const double> x, std::span<const double> y) {
                return std::equal(x.begin(), x.end(), y.begin(), y.end());
            };
            if (!eq(a.exact_row(v), b.exact_row(v)) || !eq(a.upper_row(v), b.upper_row(v)) ||
                !eq(a.lower_row(v), b.lower_row(v)) || a.degenerate[v] != b.degenerate[v] ||
                !eq(a.msg_upper_row(v), b.msg_upper_row(v)) || !eq(a.msg_lower_row(v), b.msg_lower_row(v))) {
                return ::testing::AssertionFailure() << "entry (" << l << ", " << v << ") differs";
            }
        }
    }
    return ::testing::AssertionSuccess();
}

// a -> b -> c -> t with three layers of positive weights; (a, b) is fragile.
RobustnessInstance path_instance(double bias = 0.0, double weight = 1.0) {
    RobustnessInstance inst;
    const Vertex a = 0, b = 1, c = 2, t = 3;
    inst.graph = make_graph(4, true, {{b, c}, {c, t}}, {{1.0}, {2.0}, {3.0}, {4.0}});
    std::vector<Layer> layers;
    layers.push_back(dense_layer({{1.0}}, {{weight}}, {bias}));
    layers.push_back(dense_layer({{1.0}}, {{1.0}}, {0.0}));
    layers.push_back(dense_layer({{1.0}, {0.0}}, {{1.0}, {0.0}}, {0.0, 0.0}));
    inst.model = GnnModel(Aggregation::Sum, layers);
    inst.fragile = {{a, b}};
    inst.global_budget = 1;
    inst.target = {t, 0, std::nullopt};
    return inst;
}

TEST(OracleUpdate, PathDirtySetsFollowTheFrontier) {
    const auto inst = path_instance();
    Oracle o(inst, {});
    o.apply_edge({0, 1}, EdgeStatus::Normal);
    const auto& dirty = o.last_dirty();
    ASSERT_EQ(dirty.size(), 4U);
    EXPECT_EQ(dirty[1], (std::vector<Vertex>{1}));
    EXPECT_EQ(dirty[2], (std::vector<Vertex>{2}));
    EXPECT_EQ(dirty[3], (std::vector<Vertex>{3}));
    EXPECT_TRUE(maintained_match(o));
}

TEST(OracleUpdate, UnchangedValuesStopThePropagation) {
    // relu(x_b - agg - 100) = 0 whatever b receives; a second unknown
    // in-edge (4, 1) keeps b uncertain after (0, 1) is resolved.
    auto inst = path_instance(-100.0, -1.0);
    inst.graph = make_graph(5, true, {{1, 2}, {2, 3}}, {{1.0}, {2.0}, {3.0}, {4.0}, {5.0}});
    inst.fragile = {{0, 1}, {4, 1}};
    Oracle o(inst, {});
    o.apply_edge({0, 1}, EdgeStatus::Normal);
    EXPECT_EQ(o.last_dirty()[1], (std::vector<Vertex>{1}));
    EXPECT_TRUE(o.last_dirty()[2].empty());
    EXPECT_TRUE(o.last_dirty()[3].empty());
    EXPECT_TRUE(maintained_match(o));
}

TEST(OracleUpdate, VerticesAtDistanceLNeverRecompute) {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        SmallFamily fam;
        fam.max_fragile = 8;
        auto inst = sample_small_instance(rng, static_cast<Aggregation>(trial % 3), fam);
        if (inst.target.graph_task() || inst.fragile.empty()) continue;
        inst.global_budget = inst.fragile.size();
        inst.local_budget.reset();
        Oracle o(inst, {});
        const std::size_t layers = inst.model.num_layers();
        for (const Edge& e : inst.fragile) {
            o.apply_edge(e, coin(rng) ? EdgeStatus::Normal : EdgeStatus::Non);
            for (std::size_t l = 1; l <= layers; ++l) {
                for (Vertex v : o.last_dirty()[l]) {
                    ASSERT_NE(o.distance_to_target(v), Oracle::kUnreachable);
                    ASSERT_LE(o.distance_to_target(v) + l, layers);
                }
            }
        }
    }
}

TEST(OracleJournal, ApplyThenUndoRestoresTheSnapshot) {
    Rng rng(6);
    for (int trial = 0; trial < 60; ++trial) {
        auto inst = sample_small_instance(rng, static_cast<Aggregation>(trial % 3));
        if (inst.fragile.empty()) continue;
        inst.local_budget.reset();
        Oracle o(inst, {});
        const BoundPlanes before = o.planes();
        const Edge e = *inst.fragile.begin();
        o.apply_edge(e, coin(rng) ? EdgeStatus::Normal : EdgeStatus::Non);
        o.query(static_cast<int>(inst.fragile.size()));
        o.undo();
        EXPECT_TRUE(planes_equal(before, o.planes()));
        EXPECT_EQ(o.graph().status(e.src, e.dst), EdgeStatus::Unknown);
        EXPECT_EQ(o.spent(), 0U);
        EXPECT_EQ(o.depth(), 0U);
    }
}

TEST(OracleJournal, NestedUndoIsLifo) {
    Rng rng(7);
    for (int trial = 0; trial < 60; ++trial) {
        SmallFamily fam;
        fam.max_fragile = 10;
        auto inst = sample_small_instance(rng, static_cast<Aggregation>(trial % 3), fam);
        if (inst.fragile.size() < 3) continue;
        inst.local_budget.reset();
        inst.global_budget = inst.fragile.size();
        Oracle o(inst, {});
        std::vector<BoundPlanes> snapshots{o.planes()};
        auto it = inst.fragile.begin();
        for (int i = 0; i < 3; ++i, ++it) {
            o.apply_edge(*it, coin(rng) ? EdgeStatus::Normal : EdgeStatus::Non);
            o.query(static_cast<int>(inst.global_budget - o.spent()));
            snapshots.push_back(o.planes());
        }
        for (int i = 3; i > 0; --i) {
            EXPECT_TRUE(planes_equal(snapshots[static_cast<std::size_t>(i)], o.planes()));
            o.undo();
        }
        EXPECT_TRUE(planes_equal(snapshots[0], o.planes()));
    }
}

TEST(OracleJournal, RandomInterleavingMatchesRecomputation) {
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        SmallFamily fam;
        fam.max_fragile = 10;
        auto inst = sample_small_instance(rng, static_cast<Aggregation>(trial % 3), fam);
        if (inst.fragile.empty()) continue;
        inst.global_budget = uniform_int(rng, 1, inst.fragile.size());
        Oracle o(inst, {true, coin(rng), coin(rng), true});
        const BoundPlanes initial = o.planes();
        for (int op = 0; op < 100; ++op) {
            std::vector<Edge> open;
            for (const Edge& e : o.graph().unknown_slots()) open.push_back(e);
            const bool push = !open.empty() && (o.depth() == 0 || coin(rng, 0.6));
            if (push) {
                const Edge e = open[uniform_int(rng, 0, open.size() - 1)];
                EdgeStatus s = coin(rng) ? EdgeStatus::Normal : EdgeStatus::Non;
                if (s != o.reference_status(e) && (!o.flip_allowed(e) || o.spent() >= inst.global_budget)) {
                    s = o.reference_status(e);
                }
                o.apply_edge(e, s);
            } else if (o.depth() > 0) {
                o.undo();
            }
            if (coin(rng, 0.5)) o.query(static_cast<int>(inst.global_budget - o.spent()));
            ASSERT_TRUE(maintained_match(o)) << "trial " << trial << " op " << op;
        }
        while (o.depth() > 0) o.undo();
        EXPECT_TRUE(planes_equal(initial, o.planes()));
    }
}

TEST(OracleJournal, UnderflowAndMisuseThrow) {
    const auto inst = path_instance();
    Oracle o(inst, {});
    EXPECT_THROW(o.undo(), Error);
    EXPECT_THROW(o.apply_edge({1, 2}, EdgeStatus::Non), Error); // normal, not unknown
    EXPECT_THROW(o.apply_edge({0, 1}, EdgeStatus::Unknown), Error);
    EXPECT_THROW(o.query(-1), Error);
    o.apply_edge({0, 1}, EdgeStatus::Normal);
    EXPECT_THROW(o.apply_edge({0, 1}, EdgeStatus::Non), Error);
}

TEST(OracleJournal, LocalBudgetIsEnforced) {
    auto inst = path_instance();
    inst.fragile = {{0, 1}, {2, 1}};
    inst.global_budget = 2;
    inst.local_budget = 1;
    Oracle o(inst, {});
    o.apply_edge({0, 1}, EdgeStatus::Normal);
    EXPECT_EQ(o.spent_local(1), 1);
    EXPECT_FALSE(o.flip_allowed({2, 1}));
    EXPECT_THROW(o.apply_edge({2, 1}, EdgeStatus::Normal), Error);
    o.apply_edge({2, 1}, EdgeStatus::Non); // agrees with the reference, free
    EXPECT_EQ(o.spent(), 1U);
}

TEST(OracleQuery, NormalGraphIsDecided) {
    auto inst = path_instance();
    inst.fragile.clear();
    Oracle o(inst, {});
    EXPECT_EQ(o.query(3), OracleVerdict::Unsat);
    inst.target.cls = 1; // class 1 scores 0 < class 0
    Oracle o2(inst, {});
    EXPECT_EQ(o2.query(3), OracleVerdict::Sat);
}

TEST(OracleQuery, ZeroBudgetDecidesOnTheGrounding) {
    const auto inst = path_instance();
    Oracle o(inst, {});
    EXPECT_EQ(o.query(0), OracleVerdict::Unsat);
}

TEST(OracleQuery, WithoutBoundPropagationOnlyTheTesterDecides) {
    const auto inst = path_instance();
    Oracle o(inst, {true, true, true, false});
    EXPECT_EQ(o.query(1), OracleVerdict::Unknown);
    EXPECT_EQ(o.counters().unknown, 1U);
}

// Sat: the grounding violates. Unsat: no completion within the remaining budget violates.
TEST(OracleQuery, ContractAgainstEnumeration) {
    Rng rng(9);
    std::size_t decided = 0;
    for (int trial = 0; trial < 400; ++trial) {
        SmallFamily fam;
        fam.max_vertices = 6;
        fam.max_fragile = 7;
        auto inst = sample_small_instance(rng, static_cast<Aggregation>(trial % 3), fam);
        const OracleOptions opts{coin(rng), coin(rng), coin(rng), true};
        Oracle o(inst, opts);
        std::size_t steps = uniform_int(rng, 0, inst.fragile.size());
        for (const Edge& e : inst.fragile) {
            if (steps-- == 0) break;
            EdgeStatus s = coin(rng) ? EdgeStatus::Normal : EdgeStatus::Non;
            if (s != o.reference_status(e) && (!o.flip_allowed(e) || o.spent() >= inst.global_budget)) {
                s = o.reference_status(e);
            }
            o.apply_edge(e, s);
        }
        const int d = static_cast<int>(inst.global_budget - o.spent());
        const auto verdict = o.query(d);
        if (verdict == OracleVerdict::Sat) {
            EXPECT_TRUE(violates(inst.model, o.grounding(), inst.target));
            ++decided;
        } else if (verdict == OracleVerdict::Unsat) {
            for (const auto& c : completions(o.graph())) {
                if (!in_perturbation_space(inst.graph, c, inst.fragile, inst.global_budget, inst.local_budget)) continue;
                ASSERT_FALSE(violates(inst.model, c, inst.target)) << "trial " << trial;
            }
            ++decided;
        }
    }
    EXPECT_GT(decided, 200U);
}

TEST(OracleQuery, IncrementalAndFromScratchAgree) {
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        auto inst = sample_small_instance(rng, static_cast<Aggregation>(trial % 3));
        const bool reorder = coin(rng), tighten = coin(rng);
        Oracle inc(inst, {true, reorder, tighten, true});
        Oracle full(inst, {false, reorder, tighten, true});
        for (int op = 0; op < 12; ++op) {
            const int d = static_cast<int>(inst.global_budget - inc.spent());
            ASSERT_EQ(inc.query(d), full.query(d));
            std::vector<Edge> open(inc.graph().unknown_slots().begin(), inc.graph().unknown_slots().end());
            if (!open.empty() && (inc.depth() == 0 || coin(rng, 0.6))) {
                const Edge e = open[uniform_int(rng, 0, open.size() - 1)];
                EdgeStatus s = coin(rng) ? EdgeStatus::Normal : EdgeStatus::Non;
                if (s != inc.reference_status(e) && (!inc.flip_allowed(e) || inc.spent() >= inst.global_budget)) {
                    s = inc.reference_status(e);
                }
                inc.apply_edge(e, s);
                full.apply_edge(e, s);
            } else if (inc.depth() > 0) {
                inc.undo();
                full.undo();
            }
        }
    }
}

TEST(OracleCounters, MessageProductsOnlyWithReordering) {
    const auto inst = path_instance();
    Oracle plain(inst, {true, false, true, true});
    plain.apply_edge({0, 1}, EdgeStatus::Normal);
    EXPECT_EQ(plain.counters().message_products, 0U);
    Oracle reordered(inst, {true, true, true, true});
    reordered.apply_edge({0, 1}, EdgeStatus::Normal);
    EXPECT_EQ(reordered.counters().message_products, 2U); // b at layer 1, c at layer 2
    EXPECT_EQ(reordered.counters().recomputed[1], 1U);
}

TEST(OracleCounters, MaxAggregationDisablesReordering) {
    auto inst = path_instance();
    inst.model = GnnModel(Aggregation::Max, inst.model.layers());
    Oracle o(inst, {true, true, true, true});
    EXPECT_FALSE(o.options().reorder);
}

} // namespace
} // namespace gnnrv
