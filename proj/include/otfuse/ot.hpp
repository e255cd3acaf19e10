#pragma once

// Discrete optimal transport between activation measures: cost matrix
// construction, an exact assignment solver for the uniform equal-width
// case, a log-domain Sinkhorn solver, and plan validation. All solvers
// are pure functions of their inputs.

#include "otfuse/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace otfuse::ot {

// --- marginals ------------------------------------------------------------

struct Marginals {
    std::vector<double> alpha;  // length n, rows
    std::vector<double> beta;   // length m, columns

    static Marginals uniform(std::size_t n, std::size_t m) {
        Marginals r;
        r.alpha.assign(n, 1.0 / static_cast<double>(n));
        r.beta.assign(m, 1.0 / static_cast<double>(m));
        return r;
    }
};

inline void validate_marginals(const Marginals& m, const std::string& op) {
    if (m.alpha.empty() || m.beta.empty()) throw Error(op, "empty marginals");
    double sa = 0.0, sb = 0.0;
    for (double a : m.alpha) {
        if (!(a >= 0.0)) throw Error(op, "negative or non-finite entry in alpha");
        sa += a;
    }
    for (double b : m.beta) {
        if (!(b >= 0.0)) throw Error(op, "negative or non-finite entry in beta");
        sb += b;
    }
    if (std::abs(sa - sb) > 1e-9)
        throw Error(op, "infeasible marginals: mass " + fmt_g12(sa) + " vs " + fmt_g12(sb));
    if (std::abs(sa - 1.0) > 1e-9 || std::abs(sb - 1.0) > 1e-9)
        throw Error(op, "marginals must each sum to 1, got " + fmt_g12(sa) + " and " +
                            fmt_g12(sb));
}

// --- cost matrices ----------------------------------------------------------

enum class Metric { Euclidean, SquaredEuclidean, OneMinusCosine };

inline const char* metric_name(Metric m) {
    switch (m) {
        case Metric::Euclidean: return "euclidean";
        case Metric::SquaredEuclidean: return "squared_euclidean";
        case Metric::OneMinusCosine: return "one_minus_cosine";
    }
    return "?";
}

inline std::optional<Metric> metric_from_name(const std::string& s) {
    if (s == "euclidean") return Metric::Euclidean;
    if (s == "squared_euclidean") return Metric::SquaredEuclidean;
    if (s == "one_minus_cosine") return Metric::OneMinusCosine;
    return std::nullopt;
}

struct CostMatrix {
    Matrix c;  // n x m, nonnegative
    Metric metric = Metric::Euclidean;
};

namespace detail {

inline double pair_cost(Metric metric, const std::vector<double>& a,
                        const std::vector<double>& b) {
    switch (metric) {
        case Metric::Euclidean:
        case Metric::SquaredEuclidean: {
            double sq = 0.0;
            for (std::size_t s = 0; s < a.size(); ++s) {
                double d = a[s] - b[s];
                sq += d * d;
            }
            return metric == Metric::Euclidean ? std::sqrt(sq) : sq;
        }
        case Metric::OneMinusCosine: {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t s = 0; s < a.size(); ++s) {
                dot += a[s] * b[s];
                na += a[s] * a[s];
                nb += b[s] * b[s];
            }
            if (na == 0.0 && nb == 0.0) return 0.0;  // both silent: treat as identical
            if (na == 0.0 || nb == 0.0) return 1.0;
            double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
            return std::max(0.0, 1.0 - cosine);
        }
    }
    return 0.0;
}

}  // namespace detail

/// C[i][j] = metric(acts_a[i], acts_b[j]). Each activation vector is one
/// neuron's response over the same S probe samples.
inline CostMatrix build_cost_matrix(const std::vector<std::vector<double>>& acts_a,
                                    const std::vector<std::vector<double>>& acts_b,
                                    Metric metric = Metric::Euclidean) {
    const std::string op = "ot.build_cost_matrix";
    if (acts_a.empty() || acts_b.empty()) throw Error(op, "no activation vectors");
    const std::size_t samples = acts_a.front().size();
    if (samples == 0) throw Error(op, "activation vectors need at least one sample");
    for (const auto& v : acts_a)
        if (v.size() != samples)
            throw Error(op, "mismatched sample counts: " + std::to_string(v.size()) + " vs " +
                                std::to_string(samples));
    for (const auto& v : acts_b)
        if (v.size() != samples)
            throw Error(op, "mismatched sample counts: " + std::to_string(v.size()) + " vs " +
                                std::to_string(samples));

    CostMatrix cost;
    cost.metric = metric;
    cost.c = Matrix(acts_a.size(), acts_b.size());
    for (std::size_t i = 0; i < acts_a.size(); ++i)
        for (std::size_t j = 0; j < acts_b.size(); ++j)
            cost.c(i, j) = detail::pair_cost(metric, acts_a[i], acts_b[j]);
    return cost;
}

// --- transport plans ----------------------------------------------------------

struct SolverTag {
    enum class Kind { Exact, Sinkhorn } kind = Kind::Exact;
    double epsilon = 0.0;  // Sinkhorn regularization

    std::string str() const {
        if (kind == Kind::Exact) return "exact";
        return "sinkhorn(eps=" + fmt_g12(epsilon) + ")";
    }
};

struct TransportPlan {
    Matrix t;                   // n x m, nonnegative, marginals alpha/beta
    double realized_cost = 0.0; // <T, C> Frobenius product
    SolverTag solver;
    std::size_t iterations = 0; // 0 for the exact solver
};

inline double frobenius(const Matrix& t, const Matrix& c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.data.size(); ++i) acc += t.data[i] * c.data[i];
    return acc;
}

namespace detail {

inline void check_cost(const CostMatrix& cost, const Marginals& m, const std::string& op) {
    if (cost.c.rows != m.alpha.size() || cost.c.cols != m.beta.size())
        throw Error(op, "cost is " + std::to_string(cost.c.rows) + "x" +
                            std::to_string(cost.c.cols) + " but marginals have lengths " +
                            std::to_string(m.alpha.size()) + "/" + std::to_string(m.beta.size()));
    for (double x : cost.c.data)
        if (!std::isfinite(x) || x < 0.0) throw Error(op, "cost entries must be finite and >= 0");
}

/// Min-cost perfect assignment on the sub-matrix cost[rows x cols]
/// (shortest augmenting paths with potentials, O(n^3)). If `match` is
/// given, match[i] is the index into `cols` assigned to rows[i].
inline double assignment_min_cost(const Matrix& cost, const std::vector<std::size_t>& rows,
                                  const std::vector<std::size_t>& cols,
                                  std::vector<std::size_t>* match = nullptr) {
    const std::size_t n = rows.size();
    if (match) match->assign(n, 0);
    if (n == 0) return 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            std::size_t i0 = p[j0], j1 = 0;
            double delta = inf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(rows[i0 - 1], cols[j - 1]) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
        total += cost(rows[p[j] - 1], cols[j - 1]);
        if (match) (*match)[p[j] - 1] = j - 1;
    }
    return total;
}

}  // namespace detail

/// Exact solution of the discrete OT problem for uniform marginals with
/// n == m, where the optimum sits at an assignment vertex (1/n times a
/// permutation matrix). Near-ties in cost resolve to the lexicographically
/// smallest assignment. Unequal or non-uniform marginals are rejected.
inline TransportPlan solve_exact(const CostMatrix& cost, const Marginals& m) {
    const std::string op = "ot.solve_exact";
    validate_marginals(m, op);
    detail::check_cost(cost, m, op);

    const std::size_t n = m.alpha.size();
    if (n != m.beta.size())
        throw Error(op, "only equal-size marginals supported (got " + std::to_string(n) + " and " +
                            std::to_string(m.beta.size()) + ")");
    const double unif = 1.0 / static_cast<double>(n);
    for (double a : m.alpha)
        if (std::abs(a - unif) > 1e-9)
            throw Error(op, "only uniform marginals supported; alpha is not uniform");
    for (double b : m.beta)
        if (std::abs(b - unif) > 1e-9)
            throw Error(op, "only uniform marginals supported; beta is not uniform");

    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    const double optimum = detail::assignment_min_cost(cost.c, all, all);
    const double tie_tol = 1e-12 * std::max(1.0, std::abs(optimum));

    // Fix the assignment row by row, always taking the smallest column
    // that still admits an optimal completion.
    std::vector<std::size_t> sigma(n);
    std::vector<std::size_t> free_cols = all;
    double fixed_cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> rest_rows(all.begin() + i + 1, all.end());
        bool placed = false;
        for (std::size_t pos = 0; pos < free_cols.size(); ++pos) {
            std::size_t j = free_cols[pos];
            std::vector<std::size_t> rest_cols = free_cols;
            rest_cols.erase(rest_cols.begin() + pos);
            double completion = detail::assignment_min_cost(cost.c, rest_rows, rest_cols);
            if (fixed_cost + cost.c(i, j) + completion <= optimum + tie_tol) {
                sigma[i] = j;
                fixed_cost += cost.c(i, j);
                free_cols = std::move(rest_cols);
                placed = true;
                break;
            }
        }
        if (!placed) throw Error(op, "internal: no optimal completion found");
    }

    TransportPlan plan;
    plan.solver.kind = SolverTag::Kind::Exact;
    plan.t = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) plan.t(i, sigma[i]) = m.alpha[i];
    plan.realized_cost = frobenius(plan.t, cost.c);
    return plan;
}

/// Entropic OT via Sinkhorn iterations on the dual potentials, kept in the
/// log domain so small epsilon does not underflow. Convergence is reached
/// when the max-norm marginal violation drops to tol.
inline TransportPlan solve_sinkhorn(const CostMatrix& cost, const Marginals& m, double epsilon,
                                    std::size_t max_iters = 1000000, double tol = 1e-9) {
    const std::string op = "ot.solve_sinkhorn";
    if (!(epsilon > 0.0)) throw Error(op, "epsilon must be positive");
    if (!(tol > 0.0)) throw Error(op, "tol must be positive");
    if (max_iters == 0) throw Error(op, "max_iters must be positive");
    validate_marginals(m, op);
    detail::check_cost(cost, m, op);

    const std::size_t n = m.alpha.size(), cols = m.beta.size();
    const double neg_inf = -std::numeric_limits<double>::infinity();
    auto safe_log = [neg_inf](double x) { return x > 0.0 ? std::log(x) : neg_inf; };

    std::vector<double> log_alpha(n), log_beta(cols);
    for (std::size_t i = 0; i < n; ++i) log_alpha[i] = safe_log(m.alpha[i]);
    for (std::size_t j = 0; j < cols; ++j) log_beta[j] = safe_log(m.beta[j]);

    auto log_sum_exp = [neg_inf](const std::vector<double>& terms) {
        double mx = neg_inf;
        for (double t : terms) mx = std::max(mx, t);
        if (mx == neg_inf) return neg_inf;
        double sum = 0.0;
        for (double t : terms) sum += std::exp(t - mx);
        return mx + std::log(sum);
    };

    std::vector<double> f(n, 0.0), g(cols, 0.0);
    Matrix t(n, cols);
    double violation = std::numeric_limits<double>::infinity();
    std::size_t iter = 0;
    std::vector<double> terms(std::max(n, cols));

    while (iter < max_iters) {
        ++iter;
        for (std::size_t i = 0; i < n; ++i) {
            terms.resize(cols);
            for (std::size_t j = 0; j < cols; ++j) terms[j] = (g[j] - cost.c(i, j)) / epsilon;
            f[i] = log_alpha[i] == neg_inf ? neg_inf
                                           : epsilon * (log_alpha[i] - log_sum_exp(terms));
        }
        for (std::size_t j = 0; j < cols; ++j) {
            terms.resize(n);
            for (std::size_t i = 0; i < n; ++i) terms[i] = (f[i] - cost.c(i, j)) / epsilon;
            g[j] = log_beta[j] == neg_inf ? neg_inf
                                          : epsilon * (log_beta[j] - log_sum_exp(terms));
        }

        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                double e = f[i] == neg_inf || g[j] == neg_inf
                               ? neg_inf
                               : (f[i] + g[j] - cost.c(i, j)) / epsilon;
                t(i, j) = e == neg_inf ? 0.0 : std::exp(e);
            }
        violation = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double rs = 0.0;
            for (std::size_t j = 0; j < cols; ++j) rs += t(i, j);
            violation = std::max(violation, std::abs(rs - m.alpha[i]));
        }
        for (std::size_t j = 0; j < cols; ++j) {
            double cs = 0.0;
            for (std::size_t i = 0; i < n; ++i) cs += t(i, j);
            violation = std::max(violation, std::abs(cs - m.beta[j]));
        }
        if (violation <= tol) {
            TransportPlan plan;
            plan.solver.kind = SolverTag::Kind::Sinkhorn;
            plan.solver.epsilon = epsilon;
            plan.iterations = iter;
            plan.t = std::move(t);
            plan.realized_cost = frobenius(plan.t, cost.c);
            return plan;
        }
    }
    throw Error(op, "no convergence in " + std::to_string(max_iters) +
                        " iterations, marginal violation " + fmt_g12(violation));
}

// --- plan validation -----------------------------------------------------------

struct FeasibilityReport {
    double tol = 0.0;
    std::vector<double> row_violation;  // |row sum - alpha_i|
    std::vector<double> col_violation;  // |col sum - beta_j|
    double max_row_violation = 0.0;
    double max_col_violation = 0.0;
    std::vector<std::size_t> bad_rows;  // violations above tol
    std::vector<std::size_t> bad_cols;
    std::size_t negative_entries = 0;   // entries below -tol
    double most_negative = 0.0;
    bool feasible = false;
};

inline FeasibilityReport validate_plan(const Matrix& t, const Marginals& m, double tol = 1e-8) {
    const std::string op = "ot.validate_plan";
    if (t.rows != m.alpha.size() || t.cols != m.beta.size())
        throw Error(op, "plan is " + std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                            " but marginals have lengths " + std::to_string(m.alpha.size()) + "/" +
                            std::to_string(m.beta.size()));
    FeasibilityReport r;
    r.tol = tol;
    r.row_violation.resize(t.rows);
    r.col_violation.assign(t.cols, 0.0);
    std::vector<double> col_sums(t.cols, 0.0);
    for (std::size_t i = 0; i < t.rows; ++i) {
        double rs = 0.0;
        for (std::size_t j = 0; j < t.cols; ++j) {
            double x = t(i, j);
            rs += x;
            col_sums[j] += x;
            if (x < -tol) {
                ++r.negative_entries;
                r.most_negative = std::min(r.most_negative, x);
            }
        }
        r.row_violation[i] = std::abs(rs - m.alpha[i]);
        if (r.row_violation[i] > tol) r.bad_rows.push_back(i);
        r.max_row_violation = std::max(r.max_row_violation, r.row_violation[i]);
    }
    for (std::size_t j = 0; j < t.cols; ++j) {
        r.col_violation[j] = std::abs(col_sums[j] - m.beta[j]);
        if (r.col_violation[j] > tol) r.bad_cols.push_back(j);
        r.max_col_violation = std::max(r.max_col_violation, r.col_violation[j]);
    }
    r.feasible = r.bad_rows.empty() && r.bad_cols.empty() && r.negative_entries == 0;
    return r;
}

inline FeasibilityReport validate_plan(const TransportPlan& plan, const Marginals& m,
                                       double tol = 1e-8) {
    return validate_plan(plan.t, m, tol);
}

// --- CSV export -------------------------------------------------------------

namespace detail {

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j) out << ',';
            out << fmt_g17(m(i, j));
        }
        out << '\n';
    }
}

}  // namespace detail

inline void write_cost_csv(const CostMatrix& cost, std::ostream& out) {
    out << "# cost-matrix rows=" << cost.c.rows << " cols=" << cost.c.cols
        << " metric=" << metric_name(cost.metric) << '\n';
    detail::write_matrix_csv(out, cost.c);
}

inline void write_plan_csv(const TransportPlan& plan, std::ostream& out) {
    out << "# transport-plan rows=" << plan.t.rows << " cols=" << plan.t.cols
        << " solver=" << plan.solver.str() << " realized_cost=" << fmt_g17(plan.realized_cost)
        << " iterations=" << plan.iterations << '\n';
    detail::write_matrix_csv(out, plan.t);
}

inline void write_plan_csv(const TransportPlan& plan, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("ot.write_plan_csv", "cannot open '" + path + "' for writing");
    write_plan_csv(plan, out);
}

}  // namespace otfuse::ot
