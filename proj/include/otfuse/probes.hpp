#pragma once

// Analysis instruments: a 2D loss-landscape slice spanned by two trained
// directions from a shared start point, and the lexical-entropy histogram
// of a model's predictive distributions.

#include "otfuse/common.hpp"
#include "otfuse/net.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace otfuse::probes {

// --- loss landscape ------------------------------------------------------

/// f(alpha, beta) = loss(theta0 + alpha*d1 + beta*d2) with d1 = theta1-theta0
/// and d2 = (|theta1-theta0| / |theta2-theta0|) * (theta2-theta0). The
/// `base` net donates the architecture that the parameter vectors are
/// materialized into.
struct LandscapeSpec {
    net::LayeredNet base;
    net::ParamVector theta0;
    net::ParamVector theta1;  // trained on the target data
    net::ParamVector theta2;  // trained on the auxiliary data
    double alpha_lo = -0.5, alpha_hi = 1.5;
    double beta_lo = -0.5, beta_hi = 1.5;
    std::size_t grid_n = 25;  // points per axis
    net::Corpus eval_corpus;
};

struct GridPoint {
    double alpha = 0.0;
    double beta = 0.0;
    double loss = 0.0;  // NaN when the evaluation was non-finite
};

struct LandscapeGrid {
    std::vector<GridPoint> points;  // grid_n^2 rows, alpha-major
    std::size_t grid_n = 0;
    double alpha_lo = 0.0, alpha_hi = 0.0, beta_lo = 0.0, beta_hi = 0.0;
    double norm_delta1 = 0.0;        // |theta1 - theta0|
    double norm_delta2_raw = 0.0;    // |theta2 - theta0| before scaling
    double norm_delta2_scaled = 0.0; // after scaling; equals norm_delta1
    double start_loss = 0.0;         // f(0, 0)
    double end_loss = 0.0;           // f(1, 0)
};

inline LandscapeGrid loss_surface(const LandscapeSpec& spec) {
    const std::string op = "probes.loss_surface";
    const std::size_t n_params = net::param_count(spec.base);
    if (spec.theta0.size() != n_params || spec.theta1.size() != n_params ||
        spec.theta2.size() != n_params)
        throw Error(op, "snapshots must all have " + std::to_string(n_params) + " parameters");
    if (spec.grid_n < 2) throw Error(op, "grid_n must be at least 2");
    if (!(spec.alpha_hi > spec.alpha_lo) || !(spec.beta_hi > spec.beta_lo))
        throw Error(op, "ranges must have positive extent");

    net::ParamVector delta1(n_params), delta2(n_params);
    double sq1 = 0.0, sq2 = 0.0;
    for (std::size_t i = 0; i < n_params; ++i) {
        delta1[i] = spec.theta1[i] - spec.theta0[i];
        delta2[i] = spec.theta2[i] - spec.theta0[i];
        sq1 += delta1[i] * delta1[i];
        sq2 += delta2[i] * delta2[i];
    }
    const double norm1 = std::sqrt(sq1), norm2_raw = std::sqrt(sq2);
    if (norm1 == 0.0) throw Error(op, "theta1 equals theta0, target direction undefined");
    if (norm2_raw == 0.0) throw Error(op, "theta2 equals theta0, auxiliary direction undefined");
    const double scale = norm1 / norm2_raw;
    double sq2s = 0.0;
    for (auto& x : delta2) {
        x *= scale;
        sq2s += x * x;
    }

    auto eval_at = [&](double alpha, double beta) {
        net::ParamVector p(n_params);
        for (std::size_t i = 0; i < n_params; ++i)
            p[i] = spec.theta0[i] + alpha * delta1[i] + beta * delta2[i];
        try {
            return net::loss(net::from_params(spec.base, p), spec.eval_corpus);
        } catch (const Error&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };

    LandscapeGrid grid;
    grid.grid_n = spec.grid_n;
    grid.alpha_lo = spec.alpha_lo;
    grid.alpha_hi = spec.alpha_hi;
    grid.beta_lo = spec.beta_lo;
    grid.beta_hi = spec.beta_hi;
    grid.norm_delta1 = norm1;
    grid.norm_delta2_raw = norm2_raw;
    grid.norm_delta2_scaled = std::sqrt(sq2s);
    grid.start_loss = eval_at(0.0, 0.0);
    grid.end_loss = eval_at(1.0, 0.0);

    auto coord = [](double lo, double hi, std::size_t i, std::size_t n) {
        return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    grid.points.reserve(spec.grid_n * spec.grid_n);
    for (std::size_t ia = 0; ia < spec.grid_n; ++ia) {
        double alpha = coord(spec.alpha_lo, spec.alpha_hi, ia, spec.grid_n);
        for (std::size_t ib = 0; ib < spec.grid_n; ++ib) {
            double beta = coord(spec.beta_lo, spec.beta_hi, ib, spec.grid_n);
            grid.points.push_back({alpha, beta, eval_at(alpha, beta)});
        }
    }
    return grid;
}

inline void write_landscape_csv(const LandscapeGrid& grid, std::ostream& out,
                                const std::string& config_line = "") {
    if (!config_line.empty()) out << "# " << config_line << '\n';
    out << "alpha,beta,loss\n";
    for (const auto& p : grid.points)
        out << fmt_g17(p.alpha) << ',' << fmt_g17(p.beta) << ','
            << (std::isfinite(p.loss) ? fmt_g17(p.loss) : "nan") << '\n';
}

inline nlohmann::json landscape_metadata(const LandscapeGrid& grid) {
    return nlohmann::json{{"grid_n", grid.grid_n},
                          {"alpha_range", {grid.alpha_lo, grid.alpha_hi}},
                          {"beta_range", {grid.beta_lo, grid.beta_hi}},
                          {"norm_delta1", grid.norm_delta1},
                          {"norm_delta2_raw", grid.norm_delta2_raw},
                          {"norm_delta2_scaled", grid.norm_delta2_scaled},
                          {"start_loss", grid.start_loss},
                          {"end_loss", grid.end_loss}};
}

// --- lexical entropy ------------------------------------------------------

/// Shannon entropy (natural log) of the predictive distribution at every
/// (context, next-token) position of the corpus. Values are clamped into
/// [0, ln V] against round-off at the boundaries.
inline std::vector<double> token_entropies(const net::LayeredNet& model,
                                           const net::Corpus& corpus) {
    const std::string op = "probes.token_entropies";
    auto pairs = net::extract_pairs(corpus, model.context_width, op);
    const double h_max = std::log(static_cast<double>(model.vocab.size()));
    std::vector<double> values;
    values.reserve(pairs.size());
    for (const auto& pair : pairs) {
        std::vector<double> p = net::forward(model, pair.context);
        double h = 0.0;
        for (double x : p)
            if (x > 0.0) h -= x * std::log(x);
        values.push_back(std::clamp(h, 0.0, h_max));
    }
    return values;
}

struct EntropyHistogram {
    std::vector<double> bin_edges;    // ascending, starts at 0, last >= ln V
    std::vector<double> token_ratio;  // one per bin, sums to 1
    std::size_t total_tokens = 0;
};

/// `bins` uniform edges over [0, ln V].
inline std::vector<double> uniform_bin_edges(std::size_t vocab_size, std::size_t bins = 10) {
    if (bins == 0) throw Error("probes.uniform_bin_edges", "need at least one bin");
    const double h_max = std::log(static_cast<double>(vocab_size));
    std::vector<double> edges(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        edges[i] = h_max * static_cast<double>(i) / static_cast<double>(bins);
    return edges;
}

/// Bin the per-position entropies. Bins are half-open [lo, hi) except the
/// last, which is closed so H = ln V lands inside.
inline EntropyHistogram entropy_histogram(const net::LayeredNet& model,
                                          const net::Corpus& corpus,
                                          const std::vector<double>& bin_edges) {
    const std::string op = "probes.entropy_histogram";
    if (bin_edges.size() < 2) throw Error(op, "need at least two bin edges");
    if (bin_edges.front() != 0.0) throw Error(op, "bin edges must start at 0");
    for (std::size_t i = 1; i < bin_edges.size(); ++i)
        if (!(bin_edges[i] > bin_edges[i - 1])) throw Error(op, "bin edges must be ascending");
    const double h_max = std::log(static_cast<double>(model.vocab.size()));
    if (bin_edges.back() < h_max)
        throw Error(op, "last bin edge " + fmt_g12(bin_edges.back()) + " is below ln V = " +
                            fmt_g12(h_max));

    auto values = token_entropies(model, corpus);
    const std::size_t bins = bin_edges.size() - 1;
    std::vector<std::size_t> counts(bins, 0);
    for (double h : values) {
        auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), h);
        std::size_t idx = static_cast<std::size_t>(it - bin_edges.begin());
        idx = idx == 0 ? 0 : idx - 1;
        ++counts[std::min(idx, bins - 1)];
    }

    EntropyHistogram hist;
    hist.bin_edges = bin_edges;
    hist.total_tokens = values.size();
    hist.token_ratio.resize(bins);
    for (std::size_t b = 0; b < bins; ++b)
        hist.token_ratio[b] =
            static_cast<double>(counts[b]) / static_cast<double>(values.size());
    return hist;
}

inline EntropyHistogram entropy_histogram(const net::LayeredNet& model,
                                          const net::Corpus& corpus) {
    return entropy_histogram(model, corpus, uniform_bin_edges(model.vocab.size()));
}

/// Mean of the per-position entropies; lies in [0, ln V].
inline double mean_entropy(const net::LayeredNet& model, const net::Corpus& corpus) {
    auto values = token_entropies(model, corpus);
    double total = 0.0;
    for (double h : values) total += h;
    return total / static_cast<double>(values.size());
}

inline void write_entropy_csv(const EntropyHistogram& hist, std::ostream& out,
                              const std::string& config_line = "") {
    if (!config_line.empty()) out << "# " << config_line << '\n';
    out << "bin_lo,bin_hi,ratio\n";
    for (std::size_t b = 0; b + 1 < hist.bin_edges.size(); ++b)
        out << fmt_g17(hist.bin_edges[b]) << ',' << fmt_g17(hist.bin_edges[b + 1]) << ','
            << fmt_g17(hist.token_ratio[b]) << '\n';
}

}  // namespace otfuse::probes
