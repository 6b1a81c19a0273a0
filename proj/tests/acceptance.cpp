// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks for the verifier. Prints one PASS/FAIL line per
// criterion and exits non-zero if any criterion fails.

#include <gnnrv/gnnrv.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <numeric>
#include <iostream>
#include <sstream>

namespace {

using namespace gnnrv;

struct Outcome {
    bool pass = false;
    std::string detail;
};

SearchConfig config_from_bits(unsigned bits) {
    SearchConfig c;
    c.heuristics = bits & 1U;
    c.incremental = bits & 2U;
    c.reorder = bits & 4U;
    c.budget_tighten = bits & 8U;
    c.local_inference = bits & 16U;
    return c;
}

const Aggregation kAggregations[] = {Aggregation::Sum, Aggregation::Max, Aggregation::Mean};

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::size_t peak_rss_kb() {
    std::ifstream in("/proc/self/status");
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("VmHWM:", 0) == 0) {
            return std::stoul(line.substr(6));
        }
    }
    return 0;
}

// Every completion of h with its flips relative to g, when they fit the budgets.
template <typename F>
void for_each_feasible_completion(const IncompleteGraph& h, const FeaturedGraph& g, const BudgetContext* budget, F&& f) {
    const std::vector<Edge> unknown(h.unknown_slots().begin(), h.unknown_slots().end());
    for (std::size_t mask = 0; mask < (std::size_t{1} << unknown.size()); ++mask) {
        std::vector<Edge> edges(h.normal_slots().begin(), h.normal_slots().end());
        std::vector<Edge> flips;
        for (std::size_t i = 0; i < unknown.size(); ++i) {
            const bool present = (mask >> i & 1U) != 0;
            if (present) {
                edges.push_back(unknown[i]);
            }
            if (present != g.has_edge(unknown[i])) {
                flips.push_back(unknown[i]);
            }
        }
        if (budget != nullptr) {
            if (static_cast<int>(flips.size()) > budget->remaining_global) {
                continue;
            }
            if (!budget->remaining_local.empty()) {
                const auto used = local_conversions(h.num_vertices(), h.directed(), flips);
                bool ok = true;
                for (std::size_t v = 0; v < used.size(); ++v) {
                    ok = ok && used[v] <= budget->remaining_local[v];
                }
                if (!ok) {
                    continue;
                }
            }
        }
        f(FeaturedGraph(h.num_vertices(), h.directed(), edges, h.features()));
    }
}

// A partially resolved relaxation of a random graph, with random remaining budgets.
struct BoundCase {
    GnnModel model;
    FeaturedGraph g;
    IncompleteGraph h;
    BudgetContext budget;
};

BoundCase sample_bound_case(Rng& rng, Aggregation a) {
    const std::size_t n = uniform_int(rng, 2, 7);
    const bool directed = coin(rng);
    std::vector<std::size_t> dims;
    const std::size_t layers = uniform_int(rng, 1, 3);
    for (std::size_t l = 0; l <= layers; ++l) {
        dims.push_back(uniform_int(rng, 1, 4));
    }
    const std::size_t classes = coin(rng) ? uniform_int(rng, 2, 3) : 0;
    BoundCase c{random_model(rng, a, dims, classes), {}, IncompleteGraph(), {}};
    auto [g, unknown] = sample_relaxation(rng, n, directed, dims.front(), 10);
    c.g = std::move(g);
    c.h = relaxation(c.g, unknown);
    // Resolve a few slots, some against the reference, to start mid-search.
    std::size_t spent = 0;
    std::vector<int> spent_local(n, 0);
    for (const Edge& e : unknown) {
        if (coin(rng, 0.25)) {
            const bool flip = coin(rng);
            const bool present = c.g.has_edge(e) != flip;
            c.h.set_status(e, present ? EdgeStatus::Normal : EdgeStatus::Non);
            if (flip) {
                ++spent;
                for (Vertex v : charged_vertices(e, directed)) {
                    ++spent_local[v];
                }
            }
        }
    }
    c.budget.remaining_global = static_cast<int>(uniform_int(rng, 0, 4));
    if (coin(rng, 0.4)) {
        const int local = static_cast<int>(uniform_int(rng, 0, 2)) + *std::max_element(spent_local.begin(), spent_local.end());
        for (std::size_t v = 0; v < n; ++v) {
            c.budget.remaining_local.push_back(local - spent_local[v]);
        }
    }
    return c;
}

// ---------------------------------------------------------------------------

Outcome criterion1(std::size_t per_aggregation, std::vector<double>& ratios) {
    std::size_t total = 0, agree = 0, nonrobust = 0, directed = 0, graph_tasks = 0, weak = 0, local = 0;
    std::size_t combos_used[32] = {};
    Rng rng(1001);
    std::ostringstream bad;
    for (Aggregation a : kAggregations) {
        for (std::size_t i = 0; i < per_aggregation; ++i) {
            const auto inst = sample_small_instance(rng, a);
            const auto bits = static_cast<unsigned>((i + uniform_int(rng, 0, 31)) % 32);
            ++combos_used[bits];
            const auto r = verify(inst, config_from_bits(bits));
            const auto b = brute_check(inst);
            ++total;
            const bool same = (r.verdict.kind == VerdictKind::Robust) == b.robust &&
                              r.verdict.kind != VerdictKind::Timeout;
            agree += same ? 1 : 0;
            if (!same && bad.str().size() < 200) {
                bad << " mismatch(" << to_string(a) << " #" << i << ")";
            }
            nonrobust += b.robust ? 0 : 1;
            directed += inst.graph.directed() ? 1 : 0;
            graph_tasks += inst.target.graph_task() ? 1 : 0;
            weak += inst.target.competitor ? 1 : 0;
            local += inst.local_budget ? 1 : 0;
            ratios.push_back(r.stats.exploration_ratio());
        }
    }
    const bool all_combos = std::all_of(std::begin(combos_used), std::end(combos_used), [](std::size_t c) { return c > 0; });
    std::ostringstream d;
    d << agree << "/" << total << " verdicts agree with enumeration (" << nonrobust << " non-robust, " << directed
      << " directed, " << graph_tasks << " graph tasks, " << weak << " weak, " << local << " with local budgets, "
      << (all_combos ? "all 32" : "not all") << " toggle combinations)" << bad.str();
    return {agree == total && all_combos && per_aggregation >= 1000, d.str()};
}

Outcome criterion2(std::size_t per_aggregation) {
    Rng rng(2002);
    std::size_t graphs = 0, checks = 0, violations = 0, completions = 0;
    for (Aggregation a : kAggregations) {
        for (std::size_t i = 0; i < per_aggregation; ++i) {
            const BoundCase c = sample_bound_case(rng, a);
            ++graphs;
            for (int variant = 0; variant < 4; ++variant) {
                const bool reorder = variant & 1, tighten = variant & 2;
                BudgetContext ctx = c.budget;
                const auto planes = propagate(c.model, c.h, c.g, {reorder, tighten}, tighten ? &ctx : nullptr);
                std::optional<FeatureInterval> pooled;
                if (c.model.pooling()) {
                    pooled = pooled_bounds(c.model, planes);
                }
                for_each_feasible_completion(c.h, c.g, tighten ? &c.budget : nullptr, [&](const FeaturedGraph& comp) {
                    ++completions;
                    const auto acts = forward(c.model, comp);
                    for (std::size_t l = 0; l < acts.size(); ++l) {
                        const auto& p = planes.layers[l];
                        for (Vertex v = 0; v < comp.num_vertices(); ++v) {
                            for (std::size_t j = 0; j < p.dim; ++j) {
                                ++checks;
                                const double x = acts[l](v, j);
                                if (x < p.lower_row(v)[j] || x > p.upper_row(v)[j]) {
                                    ++violations;
                                }
                            }
                        }
                    }
                    if (pooled) {
                        const auto s = pooled_scores(c.model, acts.back());
                        for (std::size_t k = 0; k < s.size(); ++k) {
                            ++checks;
                            if (s[k] < pooled->lower[k] || s[k] > pooled->upper[k]) {
                                ++violations;
                            }
                        }
                    }
                });
            }
        }
    }
    std::ostringstream d;
    d << violations << " violations in " << checks << " feature checks over " << graphs << " incomplete graphs, "
      << completions << " completions, 4 option variants each";
    return {violations == 0 && per_aggregation >= 500, d.str()};
}

Outcome criterion3(std::size_t per_aggregation) {
    Rng rng(3003);
    std::size_t cases = 0, reorder_bad = 0, tighten_bad = 0, reorder_strict = 0, tighten_strict = 0;
    auto within = [](const BoundPlanes& inner, const BoundPlanes& outer, bool& strict) {
        bool ok = true;
        for (std::size_t l = 0; l < inner.layers.size(); ++l) {
            const auto& a = inner.layers[l];
            const auto& b = outer.layers[l];
            for (std::size_t i = 0; i < a.upper.size(); ++i) {
                ok = ok && a.upper[i] <= b.upper[i] && a.lower[i] >= b.lower[i];
                strict = strict || a.upper[i] < b.upper[i] || a.lower[i] > b.lower[i];
            }
        }
        return ok;
    };
    for (Aggregation a : kAggregations) {
        for (std::size_t i = 0; i < per_aggregation; ++i) {
            const BoundCase c = sample_bound_case(rng, a);
            ++cases;
            BudgetContext ctx = c.budget;
            for (bool tighten : {false, true}) {
                const auto plain = propagate(c.model, c.h, c.g, {false, tighten}, tighten ? &ctx : nullptr);
                const auto reordered = propagate(c.model, c.h, c.g, {true, tighten}, tighten ? &ctx : nullptr);
                bool strict = false;
                reorder_bad += within(reordered, plain, strict) ? 0 : 1;
                reorder_strict += strict ? 1 : 0;
            }
            for (bool reorder : {false, true}) {
                const auto loose = propagate(c.model, c.h, c.g, {reorder, false});
                const auto tight = propagate(c.model, c.h, c.g, {reorder, true}, &ctx);
                bool strict = false;
                tighten_bad += within(tight, loose, strict) ? 0 : 1;
                tighten_strict += strict ? 1 : 0;
            }
        }
    }
    std::ostringstream d;
    d << "reordered within unreordered on " << 2 * cases - reorder_bad << "/" << 2 * cases << " (strictly tighter on "
      << reorder_strict << "), tightened within untightened on " << 2 * cases - tighten_bad << "/" << 2 * cases
      << " (strictly tighter on " << tighten_strict << ")";
    return {reorder_bad == 0 && tighten_bad == 0, d.str()};
}

Outcome criterion4(std::size_t per_aggregation) {
    Rng rng(4004);
    std::size_t total = 0, agree = 0, solvable = 0;
    for (Aggregation a : kAggregations) {
        for (std::size_t i = 0; i < per_aggregation; ++i) {
            std::vector<int> s(uniform_int(rng, 1, 8));
            for (int& x : s) {
                x = static_cast<int>(uniform_int(rng, 1, 20));
            }
            int t = 0;
            if (coin(rng)) {
                for (int x : s) {
                    t += coin(rng) ? x : 0;
                }
            }
            if (t == 0) {
                t = static_cast<int>(uniform_int(rng, 1, static_cast<std::size_t>(std::accumulate(s.begin(), s.end(), 0)) + 5));
            }
            const bool expected = subset_sum_solve(s, t);
            const auto r = verify(make_gadget({s, t, a}), config_from_bits(static_cast<unsigned>(i % 32)));
            ++total;
            solvable += expected ? 1 : 0;
            agree += (r.verdict.kind == VerdictKind::NonRobust) == expected ? 1 : 0;
        }
    }
    std::ostringstream d;
    d << agree << "/" << total << " gadgets agree with subset sum (" << solvable << " solvable, n <= 8, values <= 20)";
    return {agree == total && per_aggregation >= 200, d.str()};
}

Outcome criterion5(std::size_t per_aggregation) {
    Rng rng(1001); // the criterion-1 family
    std::size_t total = 0, agree = 0, negative = 0, capped = 0;
    for (Aggregation a : kAggregations) {
        for (std::size_t i = 0; i < per_aggregation; ++i) {
            const auto inst = sample_small_instance(rng, a);
            auto cfg = config_from_bits(static_cast<unsigned>((i + uniform_int(rng, 0, 31)) % 32));
            cfg.max_budget = inst.max_budget;
            const auto r = compute_radius(inst, cfg);
            const int expected = brute_radius(inst, inst.max_budget);
            ++total;
            agree += r.verdict.kind == VerdictKind::Radius && r.verdict.radius == expected ? 1 : 0;
            negative += expected < 0 ? 1 : 0;
            capped += expected == static_cast<int>(inst.max_budget) ? 1 : 0;
        }
    }
    std::ostringstream d;
    d << agree << "/" << total << " radii agree with enumeration (" << negative << " at -1, " << capped
      << " at the cap, " << total - negative - capped << " in between)";
    return {agree == total, d.str()};
}

bool planes_identical(const BoundPlanes& a, const BoundPlanes& b) {
    if (a.layers.size() != b.layers.size()) {
        return false;
    }
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const auto& x = a.layers[l];
        const auto& y = b.layers[l];
        if (x.exact != y.exact || x.upper != y.upper || x.lower != y.lower || x.degenerate != y.degenerate ||
            x.msg_upper != y.msg_upper || x.msg_lower != y.msg_lower) {
            return false;
        }
    }
    return true;
}

bool maintained_identical(const Oracle& o) {
    const BoundPlanes fresh = o.recompute();
    for (std::size_t l = 0; l < fresh.layers.size(); ++l) {
        const auto& a = o.planes().layers[l];
        const auto& b = fresh.layers[l];
        for (Vertex v = 0; v < o.graph().num_vertices(); ++v) {
            if (!o.maintained(l, v)) {
                continue;
            }
            auto eq = [](std::span<const double> x, std::span<const double> y) {
                return std::equal(x.begin(), x.end(), y.begin(), y.end());
            };
            if (!eq(a.exact_row(v), b.exact_row(v)) || !eq(a.upper_row(v), b.upper_row(v)) ||
                !eq(a.lower_row(v), b.lower_row(v)) || a.degenerate[v] != b.degenerate[v] ||
                !eq(a.msg_upper_row(v), b.msg_upper_row(v)) || !eq(a.msg_lower_row(v), b.msg_lower_row(v))) {
                return false;
            }
        }
    }
    return true;
}

Outcome criterion6(std::size_t min_operations) {
    Rng rng(6006);
    std::size_t ops = 0, step_mismatch = 0, final_mismatch = 0, verdict_mismatch = 0, queries = 0, runs = 0;
    while (ops < min_operations) {
        SmallFamily fam;
        fam.min_vertices = 3;
        fam.max_fragile = 10;
        auto inst = sample_small_instance(rng, kAggregations[runs % 3], fam);
        ++runs;
        if (inst.fragile.empty()) {
            continue;
        }
        inst.global_budget = uniform_int(rng, 1, inst.fragile.size());
        const bool reorder = coin(rng), tighten = coin(rng);
        Oracle inc(inst, {true, reorder, tighten, true});
        Oracle full(inst, {false, reorder, tighten, true});
        for (int step = 0; step < 150; ++step, ++ops) {
            std::vector<Edge> open(inc.graph().unknown_slots().begin(), inc.graph().unknown_slots().end());
            if (!open.empty() && (inc.depth() == 0 || coin(rng, 0.55))) {
                std::vector<std::pair<Edge, EdgeStatus>> changes;
                std::shuffle(open.begin(), open.end(), rng);
                const std::size_t k = coin(rng, 0.8) ? 1 : uniform_int(rng, 1, std::min<std::size_t>(3, open.size()));
                std::size_t spent = inc.spent();
                std::vector<int> local(inst.graph.num_vertices());
                for (Vertex v = 0; v < local.size(); ++v) {
                    local[v] = inc.spent_local(v);
                }
                for (std::size_t i = 0; i < k; ++i) {
                    const Edge e = open[i];
                    EdgeStatus s = coin(rng) ? EdgeStatus::Normal : EdgeStatus::Non;
                    if (s != inc.reference_status(e)) {
                        bool ok = spent < inst.global_budget;
                        for (Vertex v : charged_vertices(e, inst.graph.directed())) {
                            ok = ok && (!inst.local_budget || static_cast<std::size_t>(local[v]) < *inst.local_budget);
                        }
                        if (!ok) {
                            s = inc.reference_status(e);
                        } else {
                            ++spent;
                            for (Vertex v : charged_vertices(e, inst.graph.directed())) {
                                ++local[v];
                            }
                        }
                    }
                    changes.emplace_back(e, s);
                }
                inc.apply_edges(changes);
                full.apply_edges(changes);
            } else if (inc.depth() > 0) {
                inc.undo();
                full.undo();
            }
            if (coin(rng, 0.6)) {
                const int d = static_cast<int>(inst.global_budget - inc.spent());
                ++queries;
                verdict_mismatch += inc.query(d) == full.query(d) ? 0 : 1;
            }
            step_mismatch += maintained_identical(inc) ? 0 : 1;
        }
        while (inc.depth() > 0) {
            inc.undo();
            ++ops;
        }
        BudgetContext initial;
        initial.remaining_global = static_cast<int>(inst.global_budget);
        if (inst.local_budget) {
            initial.remaining_local.assign(inst.graph.num_vertices(), static_cast<int>(*inst.local_budget));
        }
        const auto scratch = propagate(inst.model, inst.initial_relaxation(), inst.graph,
                                       {inc.options().reorder, inc.options().tighten}, &initial);
        final_mismatch += planes_identical(inc.planes(), scratch) ? 0 : 1;
    }
    std::ostringstream d;
    d << ops << " apply/undo operations over " << runs << " oracles: " << step_mismatch
      << " cache mismatches against recomputation, " << final_mismatch << " unwound caches differing from scratch, "
      << verdict_mismatch << "/" << queries << " incremental verdicts differing";
    return {ops >= 10000 && step_mismatch == 0 && final_mismatch == 0 && verdict_mismatch == 0, d.str()};
}

Outcome criterion7(const std::vector<double>& ratios) {
    const double worst = ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end());
    Rng rng(7007);
    SmallFamily fam;
    fam.min_vertices = 6;
    fam.max_vertices = 8;
    fam.min_layers = 2;
    fam.max_layers = 2;
    fam.max_fragile = 10;
    double naive_sum = 0.0, full_sum = 0.0, worst_suite = 0.0;
    std::size_t suite = 0;
    while (suite < 100) {
        auto inst = sample_small_instance(rng, kAggregations[suite % 3], fam);
        if (inst.fragile.size() < 6) {
            continue;
        }
        ++suite;
        const auto naive = verify(inst, config_from_bits(0));
        const auto full = verify(inst, config_from_bits(31));
        naive_sum += naive.stats.exploration_ratio();
        full_sum += full.stats.exploration_ratio();
        worst_suite = std::max({worst_suite, naive.stats.exploration_ratio(), full.stats.exploration_ratio()});
    }
    std::ostringstream d;
    d.precision(4);
    d << "max ratio " << std::max(worst, worst_suite) << " over " << ratios.size() + 2 * suite
      << " runs; mean ratio naive " << naive_sum / 100.0 << " vs full " << full_sum / 100.0 << " on 100 instances";
    return {std::max(worst, worst_suite) <= 1.0 && naive_sum > full_sum, d.str()};
}

Outcome criterion8(std::size_t targets, double timeout_s) {
    Rng rng(8008);
    const std::size_t n = 300;
    RobustnessInstance base;
    base.model = random_model(rng, Aggregation::Sum, {16, 32, 32, 32, 32}, 0, true);
    base.graph = random_graph_edges(rng, n, true, 2 * n, 16);
    base.fragile = fragile_delete_only(base.graph);
    base.global_budget = 5;
    SearchConfig cfg;
    cfg.timeout_s = timeout_s;
    std::size_t robust = 0, nonrobust = 0, timeouts = 0, overran = 0;
    double slowest = 0.0, total = 0.0;
    for (std::size_t i = 0; i < targets; ++i) {
        RobustnessInstance inst = base;
        inst.target = predicted_target(inst.model, inst.graph, static_cast<Vertex>(i * n / targets));
        const auto t = std::chrono::steady_clock::now();
        const auto r = verify(inst, cfg);
        const double dt = seconds_since(t);
        slowest = std::max(slowest, dt);
        total += dt;
        overran += dt > timeout_s + 5.0 ? 1 : 0;
        robust += r.verdict.kind == VerdictKind::Robust ? 1 : 0;
        nonrobust += r.verdict.kind == VerdictKind::NonRobust ? 1 : 0;
        timeouts += r.verdict.kind == VerdictKind::Timeout ? 1 : 0;
    }
    const std::size_t peak_mb = peak_rss_kb() / 1024;
    std::ostringstream d;
    d.precision(3);
    d << targets << " targets on " << n << " vertices, " << base.fragile.size() << " fragile edges: " << robust
      << " robust, " << nonrobust << " non-robust, " << timeouts << " timeouts; total " << total << " s, slowest "
      << slowest << " s, peak memory " << peak_mb << " MB";
    return {robust + nonrobust + timeouts == targets && overran == 0 && peak_mb < 8192, d.str()};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::vector<int> only;
    double timeout = 300.0;
    app.add_option("--only", only, "Run only these criteria");
    app.add_option("--timeout", timeout, "Per-target timeout for the scale test");
    CLI11_PARSE(app, argc, argv);

    std::vector<double> ratios;
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, [&] { return criterion1(1000, ratios); }},
        {2, [] { return criterion2(500); }},
        {3, [] { return criterion3(500); }},
        {4, [] { return criterion4(200); }},
        {5, [] { return criterion5(1000); }},
        {6, [] { return criterion6(10000); }},
        {7, [&] { return criterion7(ratios); }},
        {8, [&] { return criterion8(50, timeout); }},
    };
    bool ok = true;
    for (const auto& [id, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        ok = ok && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail << " ["
                  << static_cast<int>(seconds_since(start)) << " s]" << std::endl;
    }
    return ok ? 0 : 1;
}
