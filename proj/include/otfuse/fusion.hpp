#pragma once

// Layer-sequential activation-based alignment of a source model onto an
// anchor model, and weighted parameter fusion. The alignment map for a
// layer is W~ = diag(1/beta) T^t W^, applied after the incoming side has
// been aligned with the previous layer's plan.

#include "otfuse/common.hpp"
#include "otfuse/net.hpp"
#include "otfuse/ot.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace otfuse::fusion {

struct FusionConfig {
    double lambda_pt = 0.9;         // weight on the anchor model
    std::size_t probe_samples = 64; // contexts sampled for activation measures
    ot::SolverTag solver;           // exact by default
    ot::Metric metric = ot::Metric::Euclidean;
    std::uint64_t seed = 0;         // drives probe-context sampling
    std::size_t sinkhorn_max_iters = 1000000;
    double sinkhorn_tol = 1e-9;
};

struct LayerAlignment {
    ot::TransportPlan plan;
    bool scaled_permutation = false;
};

/// Per-hidden-layer record of the alignment pipeline, in layer order.
struct AlignmentTrace {
    std::vector<LayerAlignment> layers;
};

/// True when T is (up to tol) a permutation matrix scaled by its row
/// masses: one dominant entry per row and column, nothing else.
inline bool is_scaled_permutation(const Matrix& t, double tol = 1e-9) {
    if (t.rows != t.cols) return false;
    std::vector<bool> col_taken(t.cols, false);
    for (std::size_t i = 0; i < t.rows; ++i) {
        std::size_t arg = 0;
        double row_sum = 0.0;
        for (std::size_t j = 0; j < t.cols; ++j) {
            row_sum += t(i, j);
            if (t(i, j) > t(i, arg)) arg = j;
        }
        if (col_taken[arg]) return false;
        col_taken[arg] = true;
        if (std::abs(t(i, arg) - row_sum) > tol) return false;
        for (std::size_t j = 0; j < t.cols; ++j)
            if (j != arg && std::abs(t(i, j)) > tol) return false;
    }
    return true;
}

/// W~ = diag(1/beta) T^t W^. Rows of the result live in the target
/// model's neuron order. Computed as (T with rows of T^t pre-scaled by
/// 1/beta) times W^, which keeps pure permutation plans exact.
inline Matrix align_layer(const Matrix& w_hat, const Matrix& t, const std::vector<double>& beta) {
    const std::string op = "fusion.align_layer";
    if (t.rows != w_hat.rows)
        throw Error(op, "plan has " + std::to_string(t.rows) + " rows but weights have " +
                            std::to_string(w_hat.rows));
    if (t.cols != beta.size())
        throw Error(op, "plan has " + std::to_string(t.cols) + " columns but beta has length " +
                            std::to_string(beta.size()));
    for (std::size_t j = 0; j < beta.size(); ++j)
        if (!(beta[j] > 0.0))
            throw Error(op, "beta[" + std::to_string(j) + "] = " + fmt_g12(beta[j]) +
                                ", division by zero in diag(1/beta)");

    Matrix map(t.cols, t.rows);  // diag(1/beta) T^t
    for (std::size_t j = 0; j < t.cols; ++j)
        for (std::size_t i = 0; i < t.rows; ++i) map(j, i) = t(i, j) / beta[j];
    return matmul(map, w_hat);
}

/// Same map applied to a bias vector.
inline std::vector<double> align_bias(const std::vector<double>& b_hat, const Matrix& t,
                                      const std::vector<double>& beta) {
    Matrix column(b_hat.size(), 1);
    for (std::size_t i = 0; i < b_hat.size(); ++i) column(i, 0) = b_hat[i];
    Matrix aligned = align_layer(column, t, beta);
    std::vector<double> out(aligned.rows);
    for (std::size_t i = 0; i < aligned.rows; ++i) out[i] = aligned(i, 0);
    return out;
}

/// W^ = W T_prev diag(1/column-marginals of T_prev): the incoming side of
/// a layer re-expressed as a convex combination in the previous target
/// basis. The first layer passes an identity plan (inputs correspond).
inline Matrix pre_align_incoming(const Matrix& w, const Matrix& t_prev,
                                 const std::vector<double>& col_marginals) {
    const std::string op = "fusion.pre_align_incoming";
    if (t_prev.rows != w.cols)
        throw Error(op, "previous plan has " + std::to_string(t_prev.rows) +
                            " rows but weights have input width " + std::to_string(w.cols));
    if (t_prev.cols != col_marginals.size())
        throw Error(op, "previous plan has " + std::to_string(t_prev.cols) +
                            " columns but marginal vector has length " +
                            std::to_string(col_marginals.size()));
    for (std::size_t j = 0; j < col_marginals.size(); ++j)
        if (!(col_marginals[j] > 0.0))
            throw Error(op, "column marginal " + std::to_string(j) + " is " +
                                fmt_g12(col_marginals[j]) + ", cannot normalize");

    Matrix combination = t_prev;  // columns scaled to sum to one
    for (std::size_t j = 0; j < combination.cols; ++j)
        for (std::size_t i = 0; i < combination.rows; ++i)
            combination(i, j) /= col_marginals[j];
    return matmul(w, combination);
}

// --- fixtures ---------------------------------------------------------------

/// Rearrange hidden neurons by one permutation per hidden layer; the
/// result is functionally identical. sigma[l][i] gives the old index of
/// the neuron that lands at position i.
inline net::LayeredNet permute_hidden(const net::LayeredNet& model,
                                      const std::vector<std::vector<std::size_t>>& sigmas) {
    const std::string op = "fusion.permute_hidden";
    net::validate_shapes(model, op);
    if (sigmas.size() != model.hidden.size())
        throw Error(op, "need one permutation per hidden layer");
    for (std::size_t l = 0; l < sigmas.size(); ++l) {
        const std::size_t width = model.hidden[l].weight.rows;
        if (sigmas[l].size() != width)
            throw Error(op, "permutation " + std::to_string(l) + " has length " +
                                std::to_string(sigmas[l].size()) + ", layer width is " +
                                std::to_string(width));
        std::vector<bool> seen(width, false);
        for (std::size_t v : sigmas[l]) {
            if (v >= width || seen[v])
                throw Error(op, "permutation " + std::to_string(l) + " is not a bijection");
            seen[v] = true;
        }
    }

    net::LayeredNet out = model;
    for (std::size_t l = 0; l < model.hidden.size(); ++l) {
        const auto& src = model.hidden[l];
        auto& dst = out.hidden[l];
        for (std::size_t i = 0; i < src.weight.rows; ++i) {
            for (std::size_t j = 0; j < src.weight.cols; ++j) {
                std::size_t src_col = l == 0 ? j : sigmas[l - 1][j];
                dst.weight(i, j) = src.weight(sigmas[l][i], src_col);
            }
            dst.bias[i] = src.bias[sigmas[l][i]];
        }
    }
    const auto& last_sigma = sigmas.back();
    for (std::size_t v = 0; v < model.out_proj.rows; ++v)
        for (std::size_t j = 0; j < model.out_proj.cols; ++j)
            out.out_proj(v, j) = model.out_proj(v, last_sigma[j]);
    return out;
}

// --- the fusion pipeline -------------------------------------------------------

namespace detail {

inline void check_same_architecture(const net::LayeredNet& a, const net::LayeredNet& b,
                                    const std::string& op = "fusion.fuse_models") {
    if (a.vocab.size() != b.vocab.size())
        throw Error(op, "vocabulary sizes differ: " + std::to_string(a.vocab.size()) + " vs " +
                            std::to_string(b.vocab.size()));
    if (a.context_width != b.context_width)
        throw Error(op, "context widths differ: " + std::to_string(a.context_width) + " vs " +
                            std::to_string(b.context_width));
    if (a.embed_dim() != b.embed_dim())
        throw Error(op, "embedding dims differ: " + std::to_string(a.embed_dim()) + " vs " +
                            std::to_string(b.embed_dim()));
    if (a.hidden.size() != b.hidden.size())
        throw Error(op, "hidden layer counts differ: " + std::to_string(a.hidden.size()) +
                            " vs " + std::to_string(b.hidden.size()));
    for (std::size_t l = 0; l < a.hidden.size(); ++l) {
        if (a.hidden[l].weight.rows != b.hidden[l].weight.rows)
            throw Error(op, "hidden layer " + std::to_string(l) + " widths differ: " +
                                std::to_string(a.hidden[l].weight.rows) + " vs " +
                                std::to_string(b.hidden[l].weight.rows));
        if (a.hidden[l].activation != b.hidden[l].activation)
            throw Error(op, "hidden layer " + std::to_string(l) + " activations differ");
    }
}

}  // namespace detail

/// Error when the two nets cannot be fused or compared parameter-wise.
inline void require_same_architecture(const net::LayeredNet& a, const net::LayeredNet& b,
                                      const std::string& op) {
    detail::check_same_architecture(a, b, op);
}

namespace detail {

/// Per-neuron activation vectors over the probe contexts, one matrix row
/// per neuron, for every hidden layer.
inline std::vector<std::vector<std::vector<double>>> collect_activations(
    const net::LayeredNet& model, const std::vector<net::ContextPair>& probes) {
    std::vector<std::vector<std::vector<double>>> acts(model.hidden.size());
    for (std::size_t l = 0; l < model.hidden.size(); ++l)
        acts[l].assign(model.hidden[l].weight.rows, std::vector<double>(probes.size(), 0.0));
    for (std::size_t s = 0; s < probes.size(); ++s) {
        auto result = net::forward_with_activations(model, probes[s].context);
        for (std::size_t l = 0; l < result.activations.size(); ++l)
            for (std::size_t i = 0; i < result.activations[l].size(); ++i)
                acts[l][i][s] = result.activations[l][i];
    }
    return acts;
}

/// Scale each activation vector to unit norm so no neuron dominates the
/// cost by magnitude alone; all-zero vectors are left untouched.
inline std::vector<std::vector<double>> unit_normalized(
    const std::vector<std::vector<double>>& vectors) {
    std::vector<std::vector<double>> out = vectors;
    for (auto& v : out) {
        double sq = 0.0;
        for (double x : v) sq += x * x;
        if (sq == 0.0) continue;
        double inv = 1.0 / std::sqrt(sq);
        for (double& x : v) x *= inv;
    }
    return out;
}

inline Matrix scaled_identity_plan(std::size_t n) {
    Matrix t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0 / static_cast<double>(n);
    return t;
}

inline std::vector<double> column_sums(const Matrix& t) {
    std::vector<double> sums(t.cols, 0.0);
    for (std::size_t i = 0; i < t.rows; ++i)
        for (std::size_t j = 0; j < t.cols; ++j) sums[j] += t(i, j);
    return sums;
}

}  // namespace detail

struct FusionResult {
    net::LayeredNet model;
    AlignmentTrace trace;
};

/// Align `source` onto `anchor` layer by layer via optimal transport over
/// activation measures, then blend parameters as
/// lambda_pt * anchor + (1 - lambda_pt) * aligned source.
/// The embedding keeps its natural token correspondence; the output
/// projection is pre-aligned on its input side by the last hidden plan.
inline FusionResult fuse_models(const net::LayeredNet& anchor, const net::LayeredNet& source,
                                const net::Corpus& probe, const FusionConfig& cfg) {
    const std::string op = "fusion.fuse_models";
    net::validate_shapes(anchor, op);
    net::validate_shapes(source, op);
    detail::check_same_architecture(anchor, source);
    if (cfg.lambda_pt < 0.0 || cfg.lambda_pt > 1.0)
        throw Error(op, "lambda_pt must lie in [0,1], got " + fmt_g12(cfg.lambda_pt));
    if (cfg.probe_samples == 0) throw Error(op, "probe_samples must be positive");

    // Seeded probe contexts from the corpus windows.
    auto pairs = net::extract_pairs(probe, anchor.context_width, op);
    Rng rng(derive_seed(cfg.seed, "fusion.probe"));
    std::vector<net::ContextPair> probes;
    probes.reserve(cfg.probe_samples);
    for (std::size_t s = 0; s < cfg.probe_samples; ++s)
        probes.push_back(pairs[uniform_index(rng, pairs.size())]);

    auto anchor_acts = detail::collect_activations(anchor, probes);
    auto source_acts = detail::collect_activations(source, probes);

    FusionResult result;
    result.model = anchor;  // shapes and vocab; parameters overwritten below

    Matrix prev_plan = detail::scaled_identity_plan(source.input_width());
    std::vector<net::HiddenLayer> aligned_hidden;
    for (std::size_t l = 0; l < source.hidden.size(); ++l) {
        auto cost = ot::build_cost_matrix(detail::unit_normalized(source_acts[l]),
                                          detail::unit_normalized(anchor_acts[l]), cfg.metric);
        auto marginals = ot::Marginals::uniform(cost.c.rows, cost.c.cols);
        ot::TransportPlan plan =
            cfg.solver.kind == ot::SolverTag::Kind::Exact
                ? ot::solve_exact(cost, marginals)
                : ot::solve_sinkhorn(cost, marginals, cfg.solver.epsilon,
                                     cfg.sinkhorn_max_iters, cfg.sinkhorn_tol);

        Matrix w_hat =
            pre_align_incoming(source.hidden[l].weight, prev_plan, detail::column_sums(prev_plan));
        net::HiddenLayer aligned;
        aligned.activation = source.hidden[l].activation;
        aligned.weight = align_layer(w_hat, plan.t, marginals.beta);
        aligned.bias = align_bias(source.hidden[l].bias, plan.t, marginals.beta);
        aligned_hidden.push_back(std::move(aligned));

        LayerAlignment record;
        record.scaled_permutation = is_scaled_permutation(plan.t);
        record.plan = plan;
        result.trace.layers.push_back(std::move(record));
        prev_plan = std::move(plan.t);
    }
    Matrix out_hat =
        pre_align_incoming(source.out_proj, prev_plan, detail::column_sums(prev_plan));

    // Convex blend of anchor and aligned-source parameters.
    const double lam = cfg.lambda_pt, mu = 1.0 - cfg.lambda_pt;
    auto blend_into = [lam, mu](Matrix& dst, const Matrix& a, const Matrix& b) {
        for (std::size_t i = 0; i < dst.data.size(); ++i)
            dst.data[i] = lam * a.data[i] + mu * b.data[i];
    };
    blend_into(result.model.embed, anchor.embed, source.embed);
    for (std::size_t l = 0; l < anchor.hidden.size(); ++l) {
        blend_into(result.model.hidden[l].weight, anchor.hidden[l].weight,
                   aligned_hidden[l].weight);
        for (std::size_t i = 0; i < anchor.hidden[l].bias.size(); ++i)
            result.model.hidden[l].bias[i] =
                lam * anchor.hidden[l].bias[i] + mu * aligned_hidden[l].bias[i];
    }
    blend_into(result.model.out_proj, anchor.out_proj, out_hat);
    return result;
}

// --- JSON export ------------------------------------------------------------

/// Trace as JSON; plan_csv_paths, when given, are recorded per layer so a
/// consumer can find the exported plan matrices.
inline nlohmann::json trace_to_json(const AlignmentTrace& trace,
                                    const std::vector<std::string>& plan_csv_paths = {}) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < trace.layers.size(); ++l) {
        const auto& entry = trace.layers[l];
        nlohmann::json j{{"layer", l},
                         {"realized_cost", entry.plan.realized_cost},
                         {"scaled_permutation", entry.scaled_permutation},
                         {"solver", entry.plan.solver.str()},
                         {"iterations", entry.plan.iterations}};
        if (l < plan_csv_paths.size()) j["plan_csv"] = plan_csv_paths[l];
        layers.push_back(std::move(j));
    }
    return nlohmann::json{{"layers", layers}};
}

}  // namespace otfuse::fusion
