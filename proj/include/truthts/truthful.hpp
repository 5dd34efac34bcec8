#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/SVD>

#include "truthts/linprog.hpp"
#include "truthts/model.hpp"
#include "truthts/tsprob.hpp"
#include "truthts/union_find.hpp"

namespace truthts {

/// Arm-choice distribution for every context; row n belongs to context n.
struct PolicyTable {
    Matrix probs;  // N x K

    std::size_t N() const { return static_cast<std::size_t>(probs.rows()); }
    std::size_t K() const { return static_cast<std::size_t>(probs.cols()); }
    ChoiceDistribution row(std::size_t n) const { return {probs.row(static_cast<Eigen::Index>(n)).transpose()}; }
    void set_row(std::size_t n, const ChoiceDistribution& c) {
        probs.row(static_cast<Eigen::Index>(n)) = c.probs.transpose();
    }
};

/// entry (i, j) is true iff context i strictly prefers context j's row.
struct ConflictGraph {
    std::size_t N = 0;
    std::vector<char> edges;  // row-major N x N

    bool operator()(std::size_t i, std::size_t j) const { return edges[i * N + j] != 0; }
    bool any() const { return std::any_of(edges.begin(), edges.end(), [](char e) { return e != 0; }); }
    std::size_t count() const { return static_cast<std::size_t>(std::count(edges.begin(), edges.end(), char{1})); }
};

struct Clustering {
    std::vector<std::size_t> cluster_of;
    std::size_t count = 0;
};

enum class MechanismMode { LpWithFallback, FallbackOnly };
enum class BetaSource { Known, EmpiricalLaplaceSmoothed };

inline const char* to_string(MechanismMode m) { return m == MechanismMode::LpWithFallback ? "LpWithFallback" : "FallbackOnly"; }
inline const char* to_string(BetaSource b) { return b == BetaSource::Known ? "Known" : "EmpiricalLaplaceSmoothed"; }

struct MechanismConfig {
    double ic_margin = 0.0;
    double conflict_tol = 1e-12;
    MechanismMode mode = MechanismMode::LpWithFallback;
    BetaSource beta_source = BetaSource::Known;
};

/// x_true^T Theta dist: the expected reward a context anticipates from a row.
inline double expected_report_value(const Vector& x_true, const Matrix& theta, const Vector& dist) {
    return x_true.dot(theta * dist);
}

/// U(i, j) = chi_i^T Theta table_j for all context pairs.
inline Matrix report_values(const PolicyTable& table, const Matrix& theta, const Matrix& contexts) {
    return (contexts * theta) * table.probs.transpose();
}

inline ConflictGraph detect_conflicts(const PolicyTable& table, const Matrix& theta, const Matrix& contexts,
                                      double tol) {
    const std::size_t N = table.N();
    const Matrix U = report_values(table, theta, contexts);
    ConflictGraph g{N, std::vector<char>(N * N, 0)};
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const auto ii = static_cast<Eigen::Index>(i);
            if (i != j && U(ii, static_cast<Eigen::Index>(j)) - U(ii, ii) > tol) g.edges[i * N + j] = 1;
        }
    return g;
}

/// Connected components of the symmetrised conflict graph.
inline Clustering conflict_clusters(const ConflictGraph& g) {
    DisjointSets ds(g.N);
    for (std::size_t i = 0; i < g.N; ++i)
        for (std::size_t j = 0; j < g.N; ++j)
            if (g(i, j)) ds.unite(i, j);
    Clustering c{ds.labels(), 0};
    for (auto id : c.cluster_of) c.count = std::max(c.count, id + 1);
    return c;
}

/// Every context receives the beta-weighted average of its cluster's rows.
inline PolicyTable fallback_policy(const PolicyTable& p, const Vector& beta, const Clustering& clusters) {
    const auto K = static_cast<Eigen::Index>(p.K());
    Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(clusters.count), K);
    Vector mass = Vector::Zero(static_cast<Eigen::Index>(clusters.count));
    for (std::size_t n = 0; n < p.N(); ++n) {
        const auto c = static_cast<Eigen::Index>(clusters.cluster_of[n]);
        const auto nn = static_cast<Eigen::Index>(n);
        sums.row(c) += beta[nn] * p.probs.row(nn);
        mass[c] += beta[nn];
    }
    PolicyTable q{Matrix(p.probs.rows(), K)};
    for (std::size_t n = 0; n < p.N(); ++n) {
        const auto c = static_cast<Eigen::Index>(clusters.cluster_of[n]);
        q.probs.row(static_cast<Eigen::Index>(n)) = sums.row(c) / mass[c];
    }
    return q;
}

struct FallbackResult {
    PolicyTable q;
    Clustering clusters;
    std::size_t merge_rounds = 0;
};

/// Cluster averaging, re-checked against the averaged rows: any conflict the
/// averaging creates between clusters merges them, and the averages are
/// recomputed from p. Terminates because clusters only grow; a single cluster
/// gives identical rows everywhere.
inline FallbackResult stable_fallback(const PolicyTable& p, const Matrix& theta, const Matrix& contexts,
                                      const Vector& beta, double tol) {
    const std::size_t N = p.N();
    DisjointSets ds(N);
    ConflictGraph g = detect_conflicts(p, theta, contexts, tol);
    FallbackResult out;
    while (true) {
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j)
                if (g(i, j)) ds.unite(i, j);
        out.clusters = {ds.labels(), 0};
        for (auto id : out.clusters.cluster_of) out.clusters.count = std::max(out.clusters.count, id + 1);
        out.q = fallback_policy(p, beta, out.clusters);
        g = detect_conflicts(out.q, theta, contexts, tol);
        if (!g.any()) return out;
        ++out.merge_rounds;
    }
}

/// Rank test on the N x (K-1) matrix with rows chi_n^T (Theta_{1:K-1} - theta_K 1^T).
inline bool independence_condition(const Matrix& theta, const Matrix& contexts, double tol) {
    const auto N = contexts.rows();
    const auto K = theta.cols();
    if (K < 2 || N > K - 1) return false;
    const Matrix diff = theta.leftCols(K - 1).colwise() - theta.col(K - 1);
    const Matrix M = contexts * diff;
    Eigen::JacobiSVD<Matrix> svd(M);
    const Vector sv = svd.singularValues();
    if (sv.size() < N || !(sv[0] > 0.0)) return false;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > tol * sv[0]) ++rank;
    return rank == N;
}

/// Variable layout of the IC linear program.
struct IcLpLayout {
    std::size_t N = 0;
    std::size_t K = 0;
    Eigen::Index q(std::size_t n, std::size_t k) const { return static_cast<Eigen::Index>(n * K + k); }
    Eigen::Index s() const { return static_cast<Eigen::Index>(N * K); }
    Eigen::Index vars() const { return static_cast<Eigen::Index>(N * K + 1); }
};

/// min s  subject to
///   chi_i^T Theta (q_i - q_j) >= eps          (i != j)
///   sum_n beta_n q_n = sum_n beta_n p_n
///   sum_k q_{n,k} = 1
///   -s <= p_{n,k} - q_{n,k} <= s
///   0 <= q <= 1, s >= 0
inline lp::LpProblem build_lp(const PolicyTable& p, const Matrix& theta, const Matrix& contexts, const Vector& beta,
                              double eps) {
    const std::size_t N = p.N();
    const std::size_t K = p.K();
    const IcLpLayout L{N, K};
    lp::LpProblem prob = lp::LpProblem::with_vars(L.vars());
    prob.c[L.s()] = 1.0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) prob.upper[L.q(n, k)] = 1.0;

    const Matrix values = contexts * theta;  // row i = (Theta^T chi_i)^T
    const auto n_ic = static_cast<Eigen::Index>(N * (N - 1));
    const auto n_env = static_cast<Eigen::Index>(2 * N * K);
    prob.A_ub = Matrix::Zero(n_ic + n_env, L.vars());
    prob.b_ub = Vector::Zero(n_ic + n_env);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            if (i == j) continue;
            for (std::size_t k = 0; k < K; ++k) {
                const double v = values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
                prob.A_ub(row, L.q(i, k)) -= v;
                prob.A_ub(row, L.q(j, k)) += v;
            }
            prob.b_ub[row++] = -eps;
        }
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) {
            const double pk = p.probs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
            prob.A_ub(row, L.q(n, k)) = 1.0;
            prob.A_ub(row, L.s()) = -1.0;
            prob.b_ub[row++] = pk;
            prob.A_ub(row, L.q(n, k)) = -1.0;
            prob.A_ub(row, L.s()) = -1.0;
            prob.b_ub[row++] = -pk;
        }

    prob.A_eq = Matrix::Zero(static_cast<Eigen::Index>(K + N), L.vars());
    prob.b_eq = Vector::Zero(static_cast<Eigen::Index>(K + N));
    const Vector target = p.probs.transpose() * beta;
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t n = 0; n < N; ++n) prob.A_eq(static_cast<Eigen::Index>(k), L.q(n, k)) = beta[static_cast<Eigen::Index>(n)];
        prob.b_eq[static_cast<Eigen::Index>(k)] = target[static_cast<Eigen::Index>(k)];
    }
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t k = 0; k < K; ++k) prob.A_eq(static_cast<Eigen::Index>(K + n), L.q(n, k)) = 1.0;
        prob.b_eq[static_cast<Eigen::Index>(K + n)] = 1.0;
    }
    return prob;
}

/// The same program in the shifted variables a = q - p + s 1 (so a, s >= 0):
///   -chi_i^T Theta (a_i - a_j) <= chi_i^T Theta (p_i - p_j) - eps   (i != j)
///   s - a_{n,k} <= p_{n,k}            (q >= 0)
///   a_{n,k} - 2 s <= 0                (q - p <= s)
///   sum_n beta_n a_{n,k} - (sum beta) s = 0,   sum_k a_{n,k} - K s = 0
/// The origin is q = p, so phase 1 only has to repair the conflicting IC
/// rows; q <= 1 is implied by the row and sign constraints.
/// `ic_rows`, when given, selects the IC pairs (row-major N x N mask) to include.
inline lp::LpProblem build_shifted_lp(const PolicyTable& p, const Matrix& theta, const Matrix& contexts,
                                      const Vector& beta, double eps, const std::vector<char>* ic_rows = nullptr) {
    const std::size_t N = p.N();
    const std::size_t K = p.K();
    const IcLpLayout L{N, K};
    lp::LpProblem prob = lp::LpProblem::with_vars(L.vars());
    prob.c[L.s()] = 1.0;
    const Matrix values = contexts * theta;
    const Matrix U = values * p.probs.transpose();
    auto selected = [&](std::size_t i, std::size_t j) { return i != j && (!ic_rows || (*ic_rows)[i * N + j]); };
    Eigen::Index n_ic = 0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) n_ic += selected(i, j) ? 1 : 0;
    const auto n_env = static_cast<Eigen::Index>(2 * N * K);
    prob.A_ub = Matrix::Zero(n_ic + n_env, L.vars());
    prob.b_ub = Vector::Zero(n_ic + n_env);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            if (!selected(i, j)) continue;
            const auto ii = static_cast<Eigen::Index>(i);
            for (std::size_t k = 0; k < K; ++k) {
                const double v = values(ii, static_cast<Eigen::Index>(k));
                prob.A_ub(row, L.q(i, k)) -= v;
                prob.A_ub(row, L.q(j, k)) += v;
            }
            prob.b_ub[row++] = U(ii, ii) - U(ii, static_cast<Eigen::Index>(j)) - eps;
        }
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) {
            prob.A_ub(row, L.s()) = 1.0;
            prob.A_ub(row, L.q(n, k)) = -1.0;
            prob.b_ub[row++] = p.probs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
            prob.A_ub(row, L.q(n, k)) = 1.0;
            prob.A_ub(row, L.s()) = -2.0;
            prob.b_ub[row++] = 0.0;
        }
    prob.A_eq = Matrix::Zero(static_cast<Eigen::Index>(K + N), L.vars());
    prob.b_eq = Vector::Zero(static_cast<Eigen::Index>(K + N));
    for (std::size_t k = 0; k < K; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        for (std::size_t n = 0; n < N; ++n) prob.A_eq(kk, L.q(n, k)) = beta[static_cast<Eigen::Index>(n)];
        prob.A_eq(kk, L.s()) = -beta.sum();
    }
    for (std::size_t n = 0; n < N; ++n) {
        const auto r = static_cast<Eigen::Index>(K + n);
        for (std::size_t k = 0; k < K; ++k) prob.A_eq(r, L.q(n, k)) = 1.0;
        prob.A_eq(r, L.s()) = -static_cast<double>(K);
    }
    return prob;
}

/// Maps a solution of build_shifted_lp back to z = (q, s) of build_lp.
inline Vector unshift_lp_solution(const PolicyTable& p, const Vector& z_shifted) {
    const IcLpLayout L{p.N(), p.K()};
    Vector z(L.vars());
    const double s = z_shifted[L.s()];
    for (std::size_t n = 0; n < p.N(); ++n)
        for (std::size_t k = 0; k < p.K(); ++k)
            z[L.q(n, k)] = p.probs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) + z_shifted[L.q(n, k)] - s;
    z[L.s()] = s;
    return z;
}

/// An LP solution is published only if it satisfies every row of the
/// original program to this tolerance; otherwise the fallback is used.
inline constexpr double kLpAcceptTol = 1e-9;

enum class MechanismPath { Identity, Lp, Fallback };

inline const char* to_string(MechanismPath p) {
    switch (p) {
        case MechanismPath::Identity: return "Identity";
        case MechanismPath::Lp: return "Lp";
        case MechanismPath::Fallback: return "Fallback";
    }
    return "?";
}

struct MechanismDiagnostics {
    MechanismPath path = MechanismPath::Identity;
    bool conflict = false;           // some context strictly preferred another row of p
    bool independence = false;
    bool lp_ran = false;
    lp::LpStatus lp_status = lp::LpStatus::Optimal;
    std::size_t lp_iterations = 0;
    double lp_objective = std::numeric_limits<double>::quiet_NaN();
    double fallback_objective = 0.0;  // max_n ||p_n - q_n^fb||_inf
    double objective = 0.0;           // max_n ||p_n - q_n||_inf of the returned table
    double ic_min_slack = 0.0;        // min_{i != j} chi_i^T Theta (q_i - q_j)
    double mass_error = 0.0;
    double simplex_error = 0.0;
};

inline double max_row_deviation(const PolicyTable& a, const PolicyTable& b) {
    return a.probs.size() == 0 ? 0.0 : (a.probs - b.probs).cwiseAbs().maxCoeff();
}

inline double ic_min_slack(const PolicyTable& q, const Matrix& theta, const Matrix& contexts) {
    const Matrix U = report_values(q, theta, contexts);
    double slack = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < U.rows(); ++i)
        for (Eigen::Index j = 0; j < U.cols(); ++j)
            if (i != j) slack = std::min(slack, U(i, i) - U(i, j));
    return U.rows() < 2 ? 0.0 : slack;
}

struct TruthfulResult {
    PolicyTable q;
    MechanismDiagnostics diag;
};

/// Turns Thompson probabilities p into an incentive-compatible table q.
/// The LP path is taken only when it returns a verified-feasible optimum;
/// otherwise the stable cluster fallback is returned.
inline TruthfulResult solve_truthful_policy(const PolicyTable& p, const Matrix& theta, const Matrix& contexts,
                                            const Vector& beta, const MechanismConfig& cfg) {
    TruthfulResult out;
    auto& diag = out.diag;
    const ConflictGraph g = detect_conflicts(p, theta, contexts, cfg.conflict_tol);
    diag.conflict = g.any();
    diag.independence = independence_condition(theta, contexts, 1e-9);

    const FallbackResult fb = stable_fallback(p, theta, contexts, beta, cfg.conflict_tol);
    diag.fallback_objective = max_row_deviation(p, fb.q);

    if (!diag.conflict && cfg.ic_margin == 0.0) {
        // q = p is feasible with s = 0, which is the LP optimum.
        out.q = p;
        diag.path = MechanismPath::Identity;
        diag.lp_objective = 0.0;
    } else if (cfg.mode == MechanismMode::FallbackOnly) {
        out.q = fb.q;
        diag.path = MechanismPath::Fallback;
    } else {
        // Solved in shifted variables; acceptance is judged on the original program.
        const lp::LpSolution sol = lp::solve(build_shifted_lp(p, theta, contexts, beta, cfg.ic_margin));
        diag.lp_ran = true;
        diag.lp_iterations = sol.iterations;
        const Vector z = sol.status == lp::LpStatus::Optimal ? unshift_lp_solution(p, sol.z) : Vector();
        diag.lp_status = sol.status;
        if (sol.status == lp::LpStatus::Optimal &&
            lp::check_feasible(build_lp(p, theta, contexts, beta, cfg.ic_margin), z, kLpAcceptTol)) {
            const IcLpLayout L{p.N(), p.K()};
            out.q.probs.resize(p.probs.rows(), p.probs.cols());
            for (std::size_t n = 0; n < p.N(); ++n)
                for (std::size_t k = 0; k < p.K(); ++k)
                    out.q.probs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) =
                        std::clamp(z[L.q(n, k)], 0.0, 1.0);
            diag.lp_objective = z[L.s()];
            diag.path = MechanismPath::Lp;
        } else {
            out.q = fb.q;
            diag.path = MechanismPath::Fallback;
        }
    }

    diag.objective = max_row_deviation(p, out.q);
    diag.ic_min_slack = ic_min_slack(out.q, theta, contexts);
    diag.mass_error = ((out.q.probs - p.probs).transpose() * beta).cwiseAbs().maxCoeff();
    diag.simplex_error = (out.q.probs.rowwise().sum().array() - 1.0).abs().maxCoeff();
    return out;
}

}  // namespace truthts
