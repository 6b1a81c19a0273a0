// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0

// gnnrv: exact structural robustness verification for message-passing GNNs.
//
//   gnnrv verify  --instance inst.json [--out r.jsonl]
//   gnnrv verify  --model m.json --graph g.json --target 3 --budget 2
//   gnnrv radius  --instance inst.json --max-budget 5
//   gnnrv gen-gadget --values 3,5,7 --sum 12 --aggregation mean --out dir
//   gnnrv gen-random --count 100 --seed 1 --out dir
//   gnnrv batch dir/*.instance.json --threads 4 --out results.csv --format csv
//
// Exit status: 0 when every verdict completed, 2 when some instance timed
// out, 1 on usage or validation errors. The summary goes to stderr.

#include <gnnrv/gnnrv.hpp>

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <thread>

namespace {

using namespace gnnrv;
namespace fs = std::filesystem;

constexpr double kVerifyTimeout = 300.0;
constexpr double kRadiusTimeout = 600.0;

struct Toggles {
    bool no_incremental = false;
    bool no_reorder = false;
    bool no_budget_tighten = false;
    bool no_heuristics = false;
    bool no_local_inference = false;
    bool brute_force = false;
    std::optional<double> timeout;
    std::string out;
    std::string format = "jsonl";

    void add(CLI::App& app) {
        app.add_flag("--no-incremental", no_incremental, "Recompute all bounds from scratch at every oracle call");
        app.add_flag("--no-reorder", no_reorder, "Aggregate before the neighbor matrix product");
        app.add_flag("--no-budget-tighten", no_budget_tighten, "Ignore the remaining budget in aggregation bounds");
        app.add_flag("--no-heuristics", no_heuristics, "Lexicographic edge choice, reference-status branch first");
        app.add_flag("--no-local-inference", no_local_inference, "Do not fix edges at exhausted local budgets");
        app.add_flag("--brute-force", brute_force, "Use exhaustive enumeration instead of the search");
        app.add_option("--timeout", timeout, "Per-instance timeout in seconds")->check(CLI::PositiveNumber);
        app.add_option("--out", out, "Results file");
        app.add_option("--format", format, "Results format")->check(CLI::IsMember({"jsonl", "csv"}));
    }

    SearchConfig config(RunMode mode, std::size_t max_budget) const {
        SearchConfig c;
        c.incremental = !no_incremental;
        c.reorder = !no_reorder;
        c.budget_tighten = !no_budget_tighten;
        c.heuristics = !no_heuristics;
        c.local_inference = !no_local_inference;
        c.timeout_s = timeout.value_or(mode == RunMode::Verify ? kVerifyTimeout : kRadiusTimeout);
        c.max_budget = max_budget;
        return c;
    }
};

struct InstanceFlags {
    std::string instance;
    std::string model;
    std::string graph;
    std::optional<std::size_t> target;
    std::optional<std::size_t> cls;
    CLI::Option* weak = nullptr;
    std::optional<std::size_t> weak_class;
    std::string fragile = "delete-only";
    std::optional<std::size_t> budget;
    std::optional<std::size_t> local_budget;
    std::optional<std::size_t> max_budget;
    std::string id;

    void add(CLI::App& app, bool radius) {
        auto* inst = app.add_option("--instance", instance, "Instance file (model and graph paths relative to it)");
        auto* m = app.add_option("--model", model, "Model file");
        auto* g = app.add_option("--graph", graph, "Graph file");
        auto* t = app.add_option("--target", target, "Target vertex (omit for graph classification)");
        auto* c = app.add_option("--class", cls, "Class to keep, 1-based (default: predicted)")
                      ->check(CLI::PositiveNumber);
        weak = app.add_option("--weak", weak_class, "Weak robustness against one class (default: the next class)")
                   ->expected(0, 1);
        auto* f = app.add_option("--fragile", fragile, "delete-only, all-pairs or a JSON file of pairs");
        auto* b = app.add_option("--budget", budget, "Global budget");
        auto* lb = app.add_option("--local-budget", local_budget, "Local budget per vertex");
        auto* mb = app.add_option("--max-budget", max_budget, "Largest budget considered by the radius search");
        app.add_option("--id", id, "Instance id for the results file");
        for (auto* o : {m, g, t, c, weak, f, b, lb}) {
            inst->excludes(o);
        }
        if (!radius) {
            mb->group("");
        }
    }

    RobustnessInstance load(RunMode mode) const {
        if (!instance.empty()) {
            RobustnessInstance inst = load_instance(instance);
            inst.mode = mode;
            if (max_budget) {
                inst.max_budget = *max_budget;
            }
            return inst;
        }
        if (model.empty() || graph.empty()) {
            throw Error("either --instance or both --model and --graph are required");
        }
        InstanceFile f;
        f.target = target ? std::optional<Vertex>(static_cast<Vertex>(*target)) : std::nullopt;
        if (cls) {
            f.cls = *cls - 1;
        }
        f.mode = mode;
        if (weak->count() > 0) {
            f.weak = true;
            if (weak_class) {
                if (*weak_class == 0) {
                    throw Error("--weak: classes are numbered from 1");
                }
                f.competitor = *weak_class - 1;
            }
        }
        if (fragile == "delete-only" || fragile == "all-pairs") {
            f.fragile = fragile_from_json(Json(fragile), "--fragile");
        } else {
            f.fragile = detail::with_context(fragile, [&] { return fragile_from_json(detail::read_json_file(fragile), "fragile"); });
        }
        f.global_budget = budget.value_or(0);
        if (mode == RunMode::Verify && !budget) {
            throw Error("--budget is required");
        }
        f.local_budget = local_budget;
        f.max_budget = max_budget;
        return build_instance(load_model(model), load_graph(graph), f);
    }

    std::string default_id() const {
        if (!id.empty()) {
            return id;
        }
        if (!instance.empty()) {
            return fs::path(instance).stem().string();
        }
        return target ? "v" + std::to_string(*target) : "graph";
    }
};

ResultRecord run_instance(const RobustnessInstance& inst, const SearchConfig& config, bool brute_force,
                          const std::string& id) {
    ResultRecord r;
    r.id = id;
    r.mode = inst.mode;
    r.config = config;
    r.engine = brute_force ? "brute-force" : "search";
    if (brute_force) {
        const auto start = std::chrono::steady_clock::now();
        if (inst.mode == RunMode::Verify) {
            const BruteResult b = brute_check(inst);
            r.verdict = b.robust ? VerdictKind::Robust : VerdictKind::NonRobust;
            if (b.witness) {
                r.witness = witness_diff(inst.graph, *b.witness);
            }
        } else {
            r.verdict = VerdictKind::Radius;
            r.radius = brute_radius(inst, config.max_budget);
        }
        r.stats.fragile = inst.fragile.size();
        r.stats.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return r;
    }
    const SearchResult s = inst.mode == RunMode::Verify ? verify(inst, config) : compute_radius(inst, config);
    r.verdict = s.verdict.kind;
    r.stats = s.stats;
    if (s.verdict.kind == VerdictKind::Radius) {
        r.radius = s.verdict.radius;
    }
    if (s.verdict.witness) {
        r.witness = witness_diff(inst.graph, *s.verdict.witness);
    }
    return r;
}

void print_summary(const ResultRecord& r) {
    std::ostringstream s;
    s << r.id << ": " << to_string(r.verdict);
    if (r.radius) {
        s << " " << *r.radius;
    }
    if (!r.witness.empty()) {
        s << " (" << r.witness.size() << " edge changes)";
    }
    s << "  calls=" << r.stats.recursive_calls << " oracle=" << r.stats.oracle_calls;
    s.setf(std::ios::fixed);
    s.precision(3);
    s << " ratio=" << r.stats.exploration_ratio() << " time=" << r.stats.wall_time_s << "s\n";
    std::cerr << s.str();
}

void emit(const std::vector<ResultRecord>& records, const Toggles& t) {
    if (!t.out.empty()) {
        write_results(records, fs::path(t.out), parse_format(t.format));
    }
}

int exit_code(const std::vector<ResultRecord>& records) {
    for (const auto& r : records) {
        if (r.verdict == VerdictKind::Timeout) {
            return 2;
        }
    }
    return 0;
}

std::size_t default_threads() {
    if (const char* env = std::getenv("GNNRV_THREADS")) {
        try {
            const long n = std::stol(env);
            if (n > 0) {
                return static_cast<std::size_t>(n);
            }
        } catch (const std::exception&) {
        }
        throw Error(std::string("GNNRV_THREADS must be a positive integer, got \"") + env + "\"");
    }
    return 1;
}

int run_single(const InstanceFlags& flags, const Toggles& toggles, RunMode mode) {
    const RobustnessInstance inst = flags.load(mode);
    const SearchConfig config = toggles.config(mode, inst.max_budget);
    const ResultRecord r = run_instance(inst, config, toggles.brute_force, flags.default_id());
    print_summary(r);
    emit({r}, toggles);
    return exit_code({r});
}

int run_batch(const std::vector<std::string>& paths, const Toggles& toggles, std::optional<std::size_t> threads_opt) {
    std::vector<std::string> files;
    for (const auto& p : paths) {
        if (fs::is_directory(p)) {
            std::vector<std::string> found;
            for (const auto& entry : fs::directory_iterator(p)) {
                const std::string name = entry.path().filename().string();
                if (name.size() > 14 && name.ends_with(".instance.json")) {
                    found.push_back(entry.path().string());
                }
            }
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else {
            files.push_back(p);
        }
    }
    // Load everything first so that invalid input fails before any work.
    std::vector<RobustnessInstance> instances;
    for (const auto& f : files) {
        instances.push_back(load_instance(f));
    }
    const std::size_t threads = std::max<std::size_t>(1, std::min(threads_opt.value_or(default_threads()), files.size()));
    std::vector<ResultRecord> records(files.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::optional<std::string> failure;
    auto worker = [&] {
        for (std::size_t i = next++; i < files.size(); i = next++) {
            try {
                const auto& inst = instances[i];
                records[i] = run_instance(inst, toggles.config(inst.mode, inst.max_budget), toggles.brute_force,
                                          fs::path(files[i]).stem().stem().string());
                const std::lock_guard lock(err_mutex);
                print_summary(records[i]);
            } catch (const std::exception& e) {
                const std::lock_guard lock(err_mutex);
                if (!failure) {
                    failure = files[i] + ": " + e.what();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        throw Error(*failure);
    }
    emit(records, toggles);
    return exit_code(records);
}

void write_gadget(const RobustnessInstance& inst, const fs::path& dir, const std::string& stem) {
    fs::create_directories(dir);
    save_model(inst.model, dir / (stem + ".model.json"));
    save_graph(inst.graph, dir / (stem + ".graph.json"));
    InstanceFile f;
    f.model_path = stem + ".model.json";
    f.graph_path = stem + ".graph.json";
    f.target = inst.target.vertex;
    f.cls = inst.target.cls;
    f.mode = inst.mode;
    if (inst.target.competitor) {
        f.weak = true;
        f.competitor = inst.target.competitor;
    }
    f.fragile.policy = FragilePolicy::Explicit;
    f.fragile.pairs.assign(inst.fragile.begin(), inst.fragile.end());
    f.fragile.allow_self_loops = std::any_of(inst.fragile.begin(), inst.fragile.end(),
                                             [](const Edge& e) { return e.src == e.dst; });
    f.global_budget = inst.global_budget;
    f.local_budget = inst.local_budget;
    f.max_budget = inst.max_budget;
    save_instance_file(f, dir / (stem + ".instance.json"));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exact structural robustness verification for message-passing GNNs"};
    app.require_subcommand(1);

    InstanceFlags verify_flags;
    Toggles verify_toggles;
    auto* verify_cmd = app.add_subcommand("verify", "Decide robustness within the global budget");
    verify_flags.add(*verify_cmd, false);
    verify_toggles.add(*verify_cmd);

    InstanceFlags radius_flags;
    Toggles radius_toggles;
    auto* radius_cmd = app.add_subcommand("radius", "Largest budget under which the prediction cannot change");
    radius_flags.add(*radius_cmd, true);
    radius_toggles.add(*radius_cmd);

    std::vector<int> gadget_values;
    int gadget_sum = 0;
    std::string gadget_agg = "sum";
    std::string gadget_out;
    auto* gadget_cmd = app.add_subcommand("gen-gadget", "Write a subset-sum gadget instance");
    gadget_cmd->add_option("--values", gadget_values, "Positive integers S")->delimiter(',')->required();
    gadget_cmd->add_option("--sum", gadget_sum, "Positive target t")->required();
    gadget_cmd->add_option("--aggregation", gadget_agg, "sum, mean or max")
        ->check(CLI::IsMember({"sum", "mean", "max"}));
    gadget_cmd->add_option("--out", gadget_out, "Output directory")->required();

    std::size_t random_count = 10;
    std::uint64_t random_seed = 1;
    std::string random_agg;
    std::string random_out;
    std::string random_mode = "verify";
    auto* random_cmd = app.add_subcommand("gen-random", "Write small random instances");
    random_cmd->add_option("--count", random_count, "Number of instances");
    random_cmd->add_option("--seed", random_seed, "Random seed");
    random_cmd->add_option("--aggregation", random_agg, "sum, mean or max (default: cycle)")
        ->check(CLI::IsMember({"sum", "mean", "max"}));
    random_cmd->add_option("--mode", random_mode, "verify or radius")->check(CLI::IsMember({"verify", "radius"}));
    random_cmd->add_option("--out", random_out, "Output directory")->required();

    std::vector<std::string> batch_paths;
    std::optional<std::size_t> batch_threads;
    Toggles batch_toggles;
    auto* batch_cmd = app.add_subcommand("batch", "Run many instance files");
    batch_cmd->add_option("instances", batch_paths, "Instance files or directories of *.instance.json")->required();
    batch_cmd->add_option("--threads", batch_threads, "Worker threads (default: GNNRV_THREADS or 1)")
        ->check(CLI::PositiveNumber);
    batch_toggles.add(*batch_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (verify_cmd->parsed()) {
            return run_single(verify_flags, verify_toggles, RunMode::Verify);
        }
        if (radius_cmd->parsed()) {
            return run_single(radius_flags, radius_toggles, RunMode::Radius);
        }
        if (gadget_cmd->parsed()) {
            const RobustnessInstance inst = make_gadget({gadget_values, gadget_sum, parse_aggregation(gadget_agg)});
            write_gadget(inst, gadget_out, "gadget");
            std::cerr << "wrote " << (fs::path(gadget_out) / "gadget.instance.json").string()
                      << " (subset sum " << (subset_sum_solve(gadget_values, gadget_sum) ? "solvable" : "unsolvable")
                      << ")\n";
            return 0;
        }
        if (random_cmd->parsed()) {
            Rng rng(random_seed);
            const Aggregation cycle[] = {Aggregation::Sum, Aggregation::Max, Aggregation::Mean};
            for (std::size_t i = 0; i < random_count; ++i) {
                const Aggregation agg = random_agg.empty() ? cycle[i % 3] : parse_aggregation(random_agg);
                RobustnessInstance inst = sample_small_instance(rng, agg);
                inst.mode = random_mode == "verify" ? RunMode::Verify : RunMode::Radius;
                char stem[32];
                std::snprintf(stem, sizeof stem, "r%04zu", i);
                write_gadget(inst, random_out, stem);
            }
            std::cerr << "wrote " << random_count << " instances to " << random_out << "\n";
            return 0;
        }
        if (batch_cmd->parsed()) {
            return run_batch(batch_paths, batch_toggles, batch_threads);
        }
    } catch (const std::exception& e) {
        std::cerr << "gnnrv: error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
