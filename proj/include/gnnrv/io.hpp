// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON interchange for models, graphs and instances; JSONL/CSV results.
//
// Classes are 1-based in files and 0-based in memory. Vertices are 0-based
// everywhere. Doubles are written in the shortest form that parses back to
// the same bits.

#include <gnnrv/bruteforce.hpp>
#include <gnnrv/search.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <variant>

namespace gnnrv {

using Json = nlohmann::json;

namespace detail {

inline Error field_error(const std::string& where, const std::string& what) { return Error(where + ": " + what); }

inline const Json& require(const Json& j, const char* key, const std::string& where) {
    if (!j.is_object()) {
        throw field_error(where, "expected an object");
    }
    const auto it = j.find(key);
    if (it == j.end()) {
        throw field_error(where, std::string("missing field \"") + key + "\"");
    }
    return *it;
}

inline double as_double(const Json& j, const std::string& where) {
    if (!j.is_number()) {
        throw field_error(where, "expected a number");
    }
    return j.get<double>();
}

inline std::size_t as_index(const Json& j, const std::string& where) {
    if (!j.is_number_integer() || j.get<long long>() < 0) {
        throw field_error(where, "expected a non-negative integer");
    }
    return j.get<std::size_t>();
}

inline bool as_bool(const Json& j, const std::string& where) {
    if (!j.is_boolean()) {
        throw field_error(where, "expected true or false");
    }
    return j.get<bool>();
}

inline std::string as_string(const Json& j, const std::string& where) {
    if (!j.is_string()) {
        throw field_error(where, "expected a string");
    }
    return j.get<std::string>();
}

inline std::vector<double> as_vector(const Json& j, const std::string& where) {
    if (!j.is_array()) {
        throw field_error(where, "expected an array of numbers");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(as_double(j[i], where + "[" + std::to_string(i) + "]"));
    }
    return out;
}

inline Matrix as_matrix(const Json& j, const std::string& where, std::size_t rows, std::size_t cols) {
    if (!j.is_array()) {
        throw field_error(where, "expected a matrix (array of rows)");
    }
    if (j.size() != rows) {
        throw field_error(where, "has " + std::to_string(j.size()) + " rows, expected " + std::to_string(rows));
    }
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = as_vector(j[r], where + "[" + std::to_string(r) + "]");
        if (row.size() != cols) {
            throw field_error(where + "[" + std::to_string(r) + "]",
                              "has " + std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
        }
        std::copy(row.begin(), row.end(), m.row(r).begin());
    }
    return m;
}

inline Json matrix_json(const Matrix& m) {
    Json out = Json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    }
    return out;
}

inline Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(path.string() + ": cannot open");
    }
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw Error(path.string() + ": cannot open for writing");
    }
    out << text;
    if (!out) {
        throw Error(path.string() + ": write failed");
    }
}

// Wraps errors with the file name.
template <typename F>
auto with_context(const std::filesystem::path& path, F&& f) {
    try {
        return f();
    } catch (const Json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Models.

inline Aggregation parse_aggregation(const std::string& s) {
    if (s == "sum") return Aggregation::Sum;
    if (s == "max") return Aggregation::Max;
    if (s == "mean") return Aggregation::Mean;
    throw Error("unknown aggregation \"" + s + "\" (expected sum, max or mean)");
}

inline GnnModel model_from_json(const Json& j) {
    using namespace detail;
    const Json& dims_j = require(j, "dims", "model");
    if (!dims_j.is_array() || dims_j.size() < 2) {
        throw field_error("model.dims", "expected at least two dimensions");
    }
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; i < dims_j.size(); ++i) {
        dims.push_back(as_index(dims_j[i], "model.dims[" + std::to_string(i) + "]"));
    }
    const Aggregation agg = parse_aggregation(as_string(require(j, "aggregation", "model"), "model.aggregation"));
    const Json& layers_j = require(j, "layers", "model");
    if (!layers_j.is_array() || layers_j.size() + 1 != dims.size()) {
        throw field_error("model.layers", "expected " + std::to_string(dims.size() - 1) + " layers to match dims");
    }
    std::vector<Layer> layers;
    for (std::size_t l = 0; l < layers_j.size(); ++l) {
        const std::string where = "model.layers[" + std::to_string(l) + "] (layer " + std::to_string(l + 1) + ")";
        const Json& lj = layers_j[l];
        Layer layer;
        layer.self = as_matrix(require(lj, "C", where), where + ".C", dims[l + 1], dims[l]);
        layer.neighbor = as_matrix(require(lj, "A", where), where + ".A", dims[l + 1], dims[l]);
        layer.bias = as_vector(require(lj, "b", where), where + ".b");
        if (layer.bias.size() != dims[l + 1]) {
            throw field_error(where + ".b", "has " + std::to_string(layer.bias.size()) + " entries, expected " +
                                                std::to_string(dims[l + 1]));
        }
        layers.push_back(std::move(layer));
    }
    std::optional<Pooling> pooling;
    const auto pit = j.find("pooling");
    if (pit != j.end() && !pit->is_null()) {
        const Json& pc = require(*pit, "C", "model.pooling");
        if (!pc.is_array() || pc.empty()) {
            throw field_error("model.pooling.C", "expected a non-empty matrix");
        }
        Pooling p;
        p.weight = as_matrix(pc, "model.pooling.C", pc.size(), dims.back());
        p.bias = as_vector(require(*pit, "b", "model.pooling"), "model.pooling.b");
        pooling = std::move(p);
    }
    return GnnModel(agg, std::move(layers), std::move(pooling));
}

inline Json model_to_json(const GnnModel& m) {
    Json out;
    out["dims"] = m.dims();
    out["aggregation"] = to_string(m.aggregation());
    out["layers"] = Json::array();
    for (const Layer& l : m.layers()) {
        out["layers"].push_back({{"C", detail::matrix_json(l.self)}, {"A", detail::matrix_json(l.neighbor)}, {"b", l.bias}});
    }
    out["pooling"] = m.pooling() ? Json{{"C", detail::matrix_json(m.pooling()->weight)}, {"b", m.pooling()->bias}}
                                 : Json(nullptr);
    return out;
}

// ---------------------------------------------------------------------------
// Graphs.

inline Edge edge_from_json(const Json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2) {
        throw detail::field_error(where, "expected a pair [u, v]");
    }
    return {static_cast<Vertex>(detail::as_index(j[0], where + "[0]")),
            static_cast<Vertex>(detail::as_index(j[1], where + "[1]"))};
}

inline FeaturedGraph graph_from_json(const Json& j) {
    using namespace detail;
    const std::size_t n = as_index(require(j, "num_nodes", "graph"), "graph.num_nodes");
    const bool directed = as_bool(require(j, "directed", "graph"), "graph.directed");
    const Json& ej = require(j, "edges", "graph");
    if (!ej.is_array()) {
        throw field_error("graph.edges", "expected an array of pairs");
    }
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < ej.size(); ++i) {
        const std::string where = "graph.edges[" + std::to_string(i) + "]";
        const Edge e = edge_from_json(ej[i], where);
        if (e.src >= n || e.dst >= n) {
            throw field_error(where, "vertex out of range (num_nodes = " + std::to_string(n) + ")");
        }
        edges.push_back(e);
    }
    const Json& fj = require(j, "features", "graph");
    if (!fj.is_array() || fj.size() != n) {
        throw field_error("graph.features", "expected " + std::to_string(n) + " feature rows");
    }
    const std::size_t dim = n == 0 ? 0 : (fj[0].is_array() ? fj[0].size() : 0);
    return FeaturedGraph(n, directed, edges, as_matrix(fj, "graph.features", n, dim));
}

inline Json graph_to_json(const FeaturedGraph& g) {
    Json edges = Json::array();
    for (const Edge& e : g.edge_slots()) {
        edges.push_back({e.src, e.dst});
    }
    return {{"num_nodes", g.num_vertices()},
            {"directed", g.directed()},
            {"edges", edges},
            {"features", detail::matrix_json(g.features())}};
}

inline GnnModel load_model(const std::filesystem::path& path) {
    return detail::with_context(path, [&] { return model_from_json(detail::read_json_file(path)); });
}

inline FeaturedGraph load_graph(const std::filesystem::path& path) {
    return detail::with_context(path, [&] { return graph_from_json(detail::read_json_file(path)); });
}

inline void save_model(const GnnModel& m, const std::filesystem::path& path) {
    detail::write_text_file(path, model_to_json(m).dump(1) + "\n");
}

inline void save_graph(const FeaturedGraph& g, const std::filesystem::path& path) {
    detail::write_text_file(path, graph_to_json(g).dump() + "\n");
}

// ---------------------------------------------------------------------------
// Instances.

enum class FragilePolicy : std::uint8_t { DeleteOnly, AllPairs, Explicit };

struct FragileSpec {
    FragilePolicy policy = FragilePolicy::DeleteOnly;
    std::vector<Edge> pairs; // Explicit
    bool allow_self_loops = false;
};

inline EdgeSet resolve_fragile(const FeaturedGraph& g, const FragileSpec& spec) {
    switch (spec.policy) {
    case FragilePolicy::DeleteOnly: return fragile_delete_only(g);
    case FragilePolicy::AllPairs: return fragile_all_pairs(g);
    case FragilePolicy::Explicit: return fragile_from_pairs(g, spec.pairs, spec.allow_self_loops);
    }
    return {};
}

inline FragileSpec fragile_from_json(const Json& j, const std::string& where) {
    FragileSpec spec;
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "delete-only") {
            spec.policy = FragilePolicy::DeleteOnly;
        } else if (s == "all-pairs") {
            spec.policy = FragilePolicy::AllPairs;
        } else {
            throw detail::field_error(where, "unknown policy \"" + s + "\" (expected delete-only, all-pairs or a pair list)");
        }
        return spec;
    }
    if (!j.is_array()) {
        throw detail::field_error(where, "expected \"delete-only\", \"all-pairs\" or a list of pairs");
    }
    spec.policy = FragilePolicy::Explicit;
    for (std::size_t i = 0; i < j.size(); ++i) {
        spec.pairs.push_back(edge_from_json(j[i], where + "[" + std::to_string(i) + "]"));
    }
    return spec;
}

inline Json fragile_to_json(const FragileSpec& spec) {
    switch (spec.policy) {
    case FragilePolicy::DeleteOnly: return "delete-only";
    case FragilePolicy::AllPairs: return "all-pairs";
    case FragilePolicy::Explicit: break;
    }
    Json out = Json::array();
    for (const Edge& e : spec.pairs) {
        out.push_back({e.src, e.dst});
    }
    return out;
}

// The instance file as written; classes 0-based here.
struct InstanceFile {
    std::string model_path;
    std::string graph_path;
    std::optional<Vertex> target; // empty: graph task
    std::optional<std::size_t> cls;
    RunMode mode = RunMode::Verify;
    bool weak = false;
    std::optional<std::size_t> competitor;
    FragileSpec fragile;
    std::size_t global_budget = 0;
    std::optional<std::size_t> local_budget;
    std::optional<std::size_t> max_budget;
};

inline std::size_t class_from_json(const Json& j, const std::string& where) {
    const std::size_t c = detail::as_index(j, where);
    if (c == 0) {
        throw detail::field_error(where, "classes are numbered from 1");
    }
    return c - 1;
}

inline InstanceFile instance_file_from_json(const Json& j) {
    using namespace detail;
    InstanceFile f;
    f.model_path = as_string(require(j, "model", "instance"), "instance.model");
    f.graph_path = as_string(require(j, "graph", "instance"), "instance.graph");
    const Json& task = require(j, "task", "instance");
    const std::string kind = as_string(require(task, "kind", "instance.task"), "instance.task.kind");
    if (kind == "node") {
        f.target = static_cast<Vertex>(as_index(require(task, "target", "instance.task"), "instance.task.target"));
    } else if (kind != "graph") {
        throw field_error("instance.task.kind", "expected \"node\" or \"graph\"");
    }
    if (const auto it = j.find("class"); it != j.end() && !it->is_null()) {
        f.cls = class_from_json(*it, "instance.class");
    }
    if (const auto it = j.find("mode"); it != j.end()) {
        const std::string m = as_string(*it, "instance.mode");
        if (m == "verify") {
            f.mode = RunMode::Verify;
        } else if (m == "radius") {
            f.mode = RunMode::Radius;
        } else {
            throw field_error("instance.mode", "expected \"verify\" or \"radius\"");
        }
    }
    if (const auto it = j.find("robustness"); it != j.end()) {
        if (it->is_string()) {
            const std::string r = it->get<std::string>();
            if (r == "weak") {
                f.weak = true;
            } else if (r != "general") {
                throw field_error("instance.robustness", "expected \"general\", \"weak\" or {\"weak\": c}");
            }
        } else if (it->is_object()) {
            f.weak = true;
            f.competitor = class_from_json(require(*it, "weak", "instance.robustness"), "instance.robustness.weak");
        } else {
            throw field_error("instance.robustness", "expected \"general\", \"weak\" or {\"weak\": c}");
        }
    }
    f.fragile = fragile_from_json(require(j, "fragile", "instance"), "instance.fragile");
    if (const auto it = j.find("allow_self_loops"); it != j.end()) {
        f.fragile.allow_self_loops = as_bool(*it, "instance.allow_self_loops");
    }
    f.global_budget = as_index(require(j, "global_budget", "instance"), "instance.global_budget");
    if (const auto it = j.find("local_budget"); it != j.end() && !it->is_null()) {
        f.local_budget = as_index(*it, "instance.local_budget");
    }
    if (const auto it = j.find("max_budget"); it != j.end() && !it->is_null()) {
        f.max_budget = as_index(*it, "instance.max_budget");
    }
    return f;
}

inline Json instance_file_to_json(const InstanceFile& f) {
    Json out;
    out["model"] = f.model_path;
    out["graph"] = f.graph_path;
    out["task"] = f.target ? Json{{"kind", "node"}, {"target", *f.target}} : Json{{"kind", "graph"}};
    out["class"] = f.cls ? Json(*f.cls + 1) : Json(nullptr);
    out["mode"] = to_string(f.mode);
    if (!f.weak) {
        out["robustness"] = "general";
    } else if (f.competitor) {
        out["robustness"] = {{"weak", *f.competitor + 1}};
    } else {
        out["robustness"] = "weak";
    }
    out["fragile"] = fragile_to_json(f.fragile);
    if (f.fragile.allow_self_loops) {
        out["allow_self_loops"] = true;
    }
    out["global_budget"] = f.global_budget;
    out["local_budget"] = f.local_budget ? Json(*f.local_budget) : Json(nullptr);
    out["max_budget"] = f.max_budget ? Json(*f.max_budget) : Json(nullptr);
    return out;
}

// Binds an instance description to a loaded model and graph. The class
// defaults to the prediction on the unperturbed graph; the weak competitor
// defaults to the next class; the radius bound defaults to the global budget.
inline RobustnessInstance build_instance(GnnModel model, FeaturedGraph graph, const InstanceFile& f) {
    RobustnessInstance inst;
    inst.model = std::move(model);
    inst.graph = std::move(graph);
    if (f.target) {
        inst.graph.check_vertex(*f.target);
    }
    inst.target = f.cls ? TaskTarget{f.target, *f.cls, std::nullopt} : predicted_target(inst.model, inst.graph, f.target);
    if (f.weak) {
        inst.target.competitor = f.competitor ? *f.competitor : default_competitor(inst.target.cls, inst.num_classes());
    }
    inst.fragile = resolve_fragile(inst.graph, f.fragile);
    inst.global_budget = f.global_budget;
    inst.local_budget = f.local_budget;
    inst.mode = f.mode;
    inst.max_budget = f.max_budget.value_or(f.global_budget);
    inst.validate();
    return inst;
}

// Model and graph paths are relative to the instance file.
inline RobustnessInstance load_instance(const std::filesystem::path& path) {
    return detail::with_context(path, [&] {
        const InstanceFile f = instance_file_from_json(detail::read_json_file(path));
        const auto base = path.parent_path();
        return build_instance(load_model(base / f.model_path), load_graph(base / f.graph_path), f);
    });
}

inline void save_instance_file(const InstanceFile& f, const std::filesystem::path& path) {
    detail::write_text_file(path, instance_file_to_json(f).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// Results.

struct WitnessChange {
    Edge edge;
    bool added = false;

    bool operator==(const WitnessChange&) const = default;
};

inline std::vector<WitnessChange> witness_diff(const FeaturedGraph& g, const FeaturedGraph& witness) {
    std::vector<WitnessChange> out;
    for (const Edge& e : changed_slots(g, witness)) {
        out.push_back({e, witness.has_edge(e)});
    }
    return out;
}

enum class ResultFormat : std::uint8_t { Jsonl, Csv };

struct ResultRecord {
    std::string id;
    RunMode mode = RunMode::Verify;
    std::string engine = "search"; // or "brute-force"
    VerdictKind verdict = VerdictKind::Robust;
    std::optional<int> radius;
    std::vector<WitnessChange> witness;
    SearchStats stats;
    SearchConfig config;
};

inline const std::vector<std::string>& result_fields() {
    static const std::vector<std::string> fields{
        "id",          "mode",           "engine",     "verdict",         "radius",
        "witness",     "calls",          "oracle_calls", "sat",           "unsat",
        "unknown",     "fragile",        "exploration_ratio", "wall_time_s", "heuristics",
        "incremental", "reorder",        "budget_tighten", "local_inference"};
    return fields;
}

inline Json witness_to_json(const std::vector<WitnessChange>& w) {
    Json out = Json::array();
    for (const auto& c : w) {
        out.push_back({{"edge", {c.edge.src, c.edge.dst}}, {"change", c.added ? "add" : "del"}});
    }
    return out;
}

inline std::vector<WitnessChange> witness_from_json(const Json& j) {
    std::vector<WitnessChange> out;
    if (!j.is_array()) {
        throw Error("witness: expected an array");
    }
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string where = "witness[" + std::to_string(i) + "]";
        WitnessChange c;
        c.edge = edge_from_json(detail::require(j[i], "edge", where), where + ".edge");
        const std::string ch = detail::as_string(detail::require(j[i], "change", where), where + ".change");
        if (ch != "add" && ch != "del") {
            throw detail::field_error(where + ".change", "expected \"add\" or \"del\"");
        }
        c.added = ch == "add";
        out.push_back(c);
    }
    return out;
}

// Ordered as result_fields().
inline Json record_to_json(const ResultRecord& r) {
    Json out = Json::object();
    out["id"] = r.id;
    out["mode"] = to_string(r.mode);
    out["engine"] = r.engine;
    out["verdict"] = to_string(r.verdict);
    out["radius"] = r.radius ? Json(*r.radius) : Json(nullptr);
    out["witness"] = witness_to_json(r.witness);
    out["calls"] = r.stats.recursive_calls;
    out["oracle_calls"] = r.stats.oracle_calls;
    out["sat"] = r.stats.sat;
    out["unsat"] = r.stats.unsat;
    out["unknown"] = r.stats.unknown;
    out["fragile"] = r.stats.fragile;
    out["exploration_ratio"] = r.stats.exploration_ratio();
    out["wall_time_s"] = r.stats.wall_time_s;
    out["heuristics"] = r.config.heuristics;
    out["incremental"] = r.config.incremental;
    out["reorder"] = r.config.reorder;
    out["budget_tighten"] = r.config.budget_tighten;
    out["local_inference"] = r.config.local_inference;
    return out;
}

namespace detail {

inline std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

inline std::string json_cell(const Json& j) {
    if (j.is_null()) {
        return "";
    }
    if (j.is_string()) {
        return j.get<std::string>();
    }
    return j.dump();
}

} // namespace detail

inline std::string csv_header() {
    std::string out;
    for (const auto& f : result_fields()) {
        out += (out.empty() ? "" : ",") + f;
    }
    return out + "\n";
}

// One line: a JSON object (jsonl) or a CSV row, newline-terminated.
inline std::string format_record(const ResultRecord& r, ResultFormat format) {
    const Json j = record_to_json(r);
    if (format == ResultFormat::Jsonl) {
        std::ostringstream out;
        out << "{";
        bool first = true;
        for (const auto& f : result_fields()) {
            out << (first ? "" : ",") << Json(f).dump() << ":" << j.at(f).dump();
            first = false;
        }
        out << "}\n";
        return out.str();
    }
    std::string out;
    bool first = true;
    for (const auto& f : result_fields()) {
        out += (first ? "" : ",") + detail::csv_cell(detail::json_cell(j.at(f)));
        first = false;
    }
    return out + "\n";
}

inline void write_results(const std::vector<ResultRecord>& records, std::ostream& out, ResultFormat format) {
    if (format == ResultFormat::Csv) {
        out << csv_header();
    }
    for (const auto& r : records) {
        out << format_record(r, format);
    }
}

inline void write_results(const std::vector<ResultRecord>& records, const std::filesystem::path& path,
                          ResultFormat format) {
    std::ostringstream s;
    write_results(records, s, format);
    detail::write_text_file(path, s.str());
}

inline ResultFormat parse_format(const std::string& s) {
    if (s == "jsonl") return ResultFormat::Jsonl;
    if (s == "csv") return ResultFormat::Csv;
    throw Error("unknown result format \"" + s + "\" (expected jsonl or csv)");
}

} // namespace gnnrv
