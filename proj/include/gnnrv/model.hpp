// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Message-passing GNNs and their exact forward evaluation.
//
//   x^l(v) = relu( C^l x^(l-1)(v) + A^l aggr{ x^(l-1)(u) : u in N(v) } + b^l )
//
// Aggregation over an empty neighborhood yields the zero vector for every
// aggregation function. Class indices are 0-based in this API.

#include <gnnrv/graph.hpp>

#include <optional>
#include <string>
#include <vector>

namespace gnnrv {

enum class Aggregation : std::uint8_t { Sum, Max, Mean };

inline const char* to_string(Aggregation a) {
    switch (a) {
    case Aggregation::Sum: return "sum";
    case Aggregation::Max: return "max";
    case Aggregation::Mean: return "mean";
    }
    return "?";
}

struct Layer {
    Matrix self;     // d^l x d^(l-1), the C coefficients
    Matrix neighbor; // d^l x d^(l-1), the A coefficients
    std::vector<double> bias;

    bool operator==(const Layer&) const = default;
};

struct Pooling {
    Matrix weight; // classes x d^L
    std::vector<double> bias;

    bool operator==(const Pooling&) const = default;
};

class GnnModel {
  public:
    GnnModel() = default;

    GnnModel(Aggregation aggregation, std::vector<Layer> layers, std::optional<Pooling> pooling = std::nullopt)
        : aggregation_(aggregation), layers_(std::move(layers)), pooling_(std::move(pooling)) {
        validate();
    }

    Aggregation aggregation() const { return aggregation_; }
    std::size_t num_layers() const { return layers_.size(); }
    const Layer& layer(std::size_t l) const { return layers_.at(l - 1); } // 1-based, as in x^l
    const std::vector<Layer>& layers() const { return layers_; }
    const std::optional<Pooling>& pooling() const { return pooling_; }

    // d^0 .. d^L.
    std::vector<std::size_t> dims() const {
        std::vector<std::size_t> d{layers_.front().self.cols()};
        for (const Layer& l : layers_) {
            d.push_back(l.self.rows());
        }
        return d;
    }
    std::size_t dim(std::size_t l) const { return l == 0 ? layers_.front().self.cols() : layer(l).self.rows(); }
    std::size_t input_dim() const { return dim(0); }
    std::size_t output_dim() const { return dim(num_layers()); }
    std::size_t graph_classes() const { return pooling_ ? pooling_->weight.rows() : 0; }

    bool operator==(const GnnModel&) const = default;

  private:
    void validate() const {
        if (layers_.empty()) {
            throw Error("model needs at least one layer");
        }
        std::size_t prev = layers_.front().self.cols();
        if (prev == 0) {
            throw Error("layer 1: input dimension must be positive");
        }
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const Layer& l = layers_[i];
            const std::string where = "layer " + std::to_string(i + 1) + ": ";
            const std::size_t rows = l.self.rows();
            if (rows == 0) {
                throw Error(where + "output dimension must be positive");
            }
            if (l.self.cols() != prev) {
                throw Error(where + "C has " + std::to_string(l.self.cols()) + " columns, expected " +
                            std::to_string(prev));
            }
            if (l.neighbor.rows() != rows || l.neighbor.cols() != prev) {
                throw Error(where + "A has shape " + std::to_string(l.neighbor.rows()) + "x" +
                            std::to_string(l.neighbor.cols()) + ", expected " + std::to_string(rows) + "x" +
                            std::to_string(prev));
            }
            if (l.bias.size() != rows) {
                throw Error(where + "b has " + std::to_string(l.bias.size()) + " entries, expected " +
                            std::to_string(rows));
            }
            prev = rows;
        }
        if (pooling_) {
            if (pooling_->weight.rows() == 0 || pooling_->weight.cols() != prev) {
                throw Error("pooling: C has shape " + std::to_string(pooling_->weight.rows()) + "x" +
                            std::to_string(pooling_->weight.cols()) + ", expected kx" + std::to_string(prev));
            }
            if (pooling_->bias.size() != pooling_->weight.rows()) {
                throw Error("pooling: b has " + std::to_string(pooling_->bias.size()) + " entries, expected " +
                            std::to_string(pooling_->weight.rows()));
            }
        }
    }

    Aggregation aggregation_ = Aggregation::Sum;
    std::vector<Layer> layers_;
    std::optional<Pooling> pooling_;
};

// Aggregates rows `neighbors` of `prev` into out (dimension prev.cols()).
// Neighbors are visited in the given order; callers pass ascending ids.
template <typename Range>
void aggregate_exact(Aggregation aggregation, const Matrix& prev, const Range& neighbors, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    std::size_t count = 0;
    for (Vertex u : neighbors) {
        const auto x = prev.row(u);
        for (std::size_t j = 0; j < out.size(); ++j) {
            if (aggregation == Aggregation::Max) {
                out[j] = count == 0 ? x[j] : std::max(out[j], x[j]);
            } else {
                out[j] += x[j];
            }
        }
        ++count;
    }
    if (aggregation == Aggregation::Mean && count > 0) {
        for (double& v : out) {
            v /= static_cast<double>(count);
        }
    }
}

// relu(C self + A agg + b), the one place the layer rule is evaluated.
inline void apply_layer(const Layer& layer, std::span<const double> self, std::span<const double> agg,
                        std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto c = layer.self.row(i);
        const auto a = layer.neighbor.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j) {
            s += c[j] * self[j];
        }
        double t = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            t += a[j] * agg[j];
        }
        out[i] = relu(s + t + layer.bias[i]);
    }
}

// Features of every vertex at every layer: result[l] is n x d^l.
using Activations = std::vector<Matrix>;

inline Activations forward(const GnnModel& model, const FeaturedGraph& g) {
    if (g.feature_dim() != model.input_dim()) {
        throw Error("graph features have dimension " + std::to_string(g.feature_dim()) + ", model expects " +
                    std::to_string(model.input_dim()));
    }
    const std::size_t n = g.num_vertices();
    Activations acts{g.features()};
    std::vector<double> agg;
    for (std::size_t l = 1; l <= model.num_layers(); ++l) {
        const Layer& layer = model.layer(l);
        const Matrix& prev = acts.back();
        Matrix next(n, layer.self.rows());
        agg.assign(prev.cols(), 0.0);
        for (Vertex v = 0; v < n; ++v) {
            aggregate_exact(model.aggregation(), prev, g.in_neighbors(v), agg);
            apply_layer(layer, prev.row(v), agg, next.row(v));
        }
        acts.push_back(std::move(next));
    }
    return acts;
}

// C^(L+1) * sum_v x^L(v) + b^(L+1); vertices summed in ascending order.
inline std::vector<double> pooled_scores(const GnnModel& model, const Matrix& last) {
    if (!model.pooling()) {
        throw Error("model has no pooling layer");
    }
    std::vector<double> total(last.cols(), 0.0);
    for (std::size_t v = 0; v < last.rows(); ++v) {
        const auto x = last.row(v);
        for (std::size_t j = 0; j < total.size(); ++j) {
            total[j] += x[j];
        }
    }
    const Pooling& p = *model.pooling();
    std::vector<double> out(p.weight.rows());
    matvec(p.weight, total, out);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += p.bias[i];
    }
    return out;
}

// Ties go to the smallest index.
inline std::size_t argmax(std::span<const double> scores) {
    if (scores.empty()) {
        throw Error("argmax of an empty score vector");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) {
            best = i;
        }
    }
    return best;
}

inline std::vector<double> node_scores(const GnnModel& model, const FeaturedGraph& g, Vertex v) {
    g.check_vertex(v);
    const auto acts = forward(model, g);
    const auto row = acts.back().row(v);
    return {row.begin(), row.end()};
}

inline std::vector<double> graph_scores(const GnnModel& model, const FeaturedGraph& g) {
    if (!model.pooling()) {
        throw Error("graph classification requires a pooling layer");
    }
    return pooled_scores(model, forward(model, g).back());
}

inline std::size_t predict_node(const GnnModel& model, const FeaturedGraph& g, Vertex v) {
    return argmax(node_scores(model, g, v));
}

inline std::size_t predict_graph(const GnnModel& model, const FeaturedGraph& g) {
    return argmax(graph_scores(model, g));
}

// What is being classified and which class must survive.
struct TaskTarget {
    std::optional<Vertex> vertex; // empty for graph classification
    std::size_t cls = 0;
    std::optional<std::size_t> competitor; // weak robustness: the one class that must not win

    bool graph_task() const { return !vertex.has_value(); }
};

// Default competitor for weak robustness: the next class, cyclically.
inline std::size_t default_competitor(std::size_t cls, std::size_t num_classes) { return (cls + 1) % num_classes; }

inline void validate_target(const TaskTarget& t, std::size_t num_classes) {
    if (t.cls >= num_classes) {
        throw Error("class " + std::to_string(t.cls + 1) + " out of range (1.." + std::to_string(num_classes) + ")");
    }
    if (t.competitor) {
        if (*t.competitor >= num_classes) {
            throw Error("competitor class " + std::to_string(*t.competitor + 1) + " out of range (1.." +
                        std::to_string(num_classes) + ")");
        }
        if (*t.competitor == t.cls) {
            throw Error("competitor class must differ from the robust class");
        }
    }
}

// True iff some competing class strictly beats target.cls.
inline bool violates(std::span<const double> scores, const TaskTarget& target) {
    validate_target(target, scores.size());
    const double own = scores[target.cls];
    if (target.competitor) {
        return scores[*target.competitor] > own;
    }
    for (std::size_t c = 0; c < scores.size(); ++c) {
        if (c != target.cls && scores[c] > own) {
            return true;
        }
    }
    return false;
}

inline std::vector<double> task_scores(const GnnModel& model, const FeaturedGraph& g, const TaskTarget& target) {
    return target.graph_task() ? graph_scores(model, g) : node_scores(model, g, *target.vertex);
}

inline bool violates(const GnnModel& model, const FeaturedGraph& g, const TaskTarget& target) {
    return violates(task_scores(model, g, target), target);
}

} // namespace gnnrv
