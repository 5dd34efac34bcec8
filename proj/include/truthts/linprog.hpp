#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace truthts::lp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// minimize c^T z  s.t.  A_eq z = b_eq,  A_ub z <= b_ub,  lower <= z <= upper.
/// A lower bound of -inf and an upper bound of +inf are allowed.
struct LpProblem {
    Vector c;
    Matrix A_eq;
    Vector b_eq;
    Matrix A_ub;
    Vector b_ub;
    Vector lower;
    Vector upper;

    /// n nonnegative variables with empty constraint sets.
    static LpProblem with_vars(Eigen::Index n) {
        LpProblem p;
        p.c = Vector::Zero(n);
        p.A_eq.resize(0, n);
        p.b_eq.resize(0);
        p.A_ub.resize(0, n);
        p.b_ub.resize(0);
        p.lower = Vector::Zero(n);
        p.upper = Vector::Constant(n, kInf);
        return p;
    }

    Eigen::Index num_vars() const { return c.size(); }

    bool consistent() const {
        const auto n = c.size();
        return A_eq.cols() == n && A_ub.cols() == n && A_eq.rows() == b_eq.size() && A_ub.rows() == b_ub.size() &&
               lower.size() == n && upper.size() == n && b_eq.allFinite() && b_ub.allFinite();
    }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, NumericalBreakdown };

inline const char* to_string(LpStatus s) {
    switch (s) {
        case LpStatus::Optimal: return "Optimal";
        case LpStatus::Infeasible: return "Infeasible";
        case LpStatus::Unbounded: return "Unbounded";
        case LpStatus::NumericalBreakdown: return "NumericalBreakdown";
    }
    return "?";
}

struct LpSolution {
    LpStatus status = LpStatus::NumericalBreakdown;
    Vector z;
    double objective = 0.0;
    std::size_t iterations = 0;
    /// Smallest phase-2 reduced cost over eligible columns at termination.
    double min_reduced_cost = 0.0;
    /// Multipliers (>= 0) of the A_ub rows at an optimum: the reduced costs
    /// of their slack columns.
    Vector ub_duals;
};

/// Largest violation of any equality, inequality or bound at z.
inline double max_violation(const LpProblem& p, const Vector& z) {
    double v = 0.0;
    if (p.A_eq.rows() > 0) v = std::max(v, (p.A_eq * z - p.b_eq).cwiseAbs().maxCoeff());
    if (p.A_ub.rows() > 0) v = std::max(v, (p.A_ub * z - p.b_ub).maxCoeff());
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        if (std::isfinite(p.lower[j])) v = std::max(v, p.lower[j] - z[j]);
        if (std::isfinite(p.upper[j])) v = std::max(v, z[j] - p.upper[j]);
    }
    return v;
}

inline bool check_feasible(const LpProblem& p, const Vector& z, double tol) {
    return z.size() == p.num_vars() && z.allFinite() && max_violation(p, z) <= tol;
}

struct SimplexOptions {
    double optimality_tol = 1e-9;
    double pivot_tol = 1e-9;
    double breakdown_pivot = 1e-11;
    double feasibility_tol = 1e-9;
    /// Basic values are re-solved from the original rows when the tableau
    /// solution's constraint residual exceeds this.
    double refine_tol = 1e-12;
    /// Largest change to any basic value a polishing pass may make.
    double refine_max_step = 1e-7;
    /// Consecutive degenerate pivots before switching to Bland's rule for good.
    std::size_t degenerate_limit = 50;
};

namespace detail {

/// Dense two-phase tableau. Row layout: m constraint rows, then the phase-1
/// and phase-2 reduced-cost rows. The last column is the right-hand side.
using TableauMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tableau {
public:
    Tableau(TableauMatrix t, std::vector<Eigen::Index> basis, Eigen::Index first_artificial, const SimplexOptions& opt)
        : t_(std::move(t)), basis_(std::move(basis)), first_art_(first_artificial), opt_(opt),
          active_cols_(t_.cols() - 1) {}

    Eigen::Index rows() const { return t_.rows() - 2; }
    Eigen::Index cols() const { return t_.cols() - 1; }
    Eigen::Index phase1_row() const { return t_.rows() - 2; }
    Eigen::Index phase2_row() const { return t_.rows() - 1; }
    double rhs(Eigen::Index i) const { return t_(i, cols()); }
    const std::vector<Eigen::Index>& basis() const { return basis_; }
    std::size_t iterations() const { return iterations_; }

    enum class Outcome { Optimal, Unbounded, Breakdown };

    Outcome run(Eigen::Index cost_row, Eigen::Index eligible_cols) {
        const std::size_t max_iter = 50 * static_cast<std::size_t>(rows() + cols()) + 1000;
        std::size_t degenerate_run = 0;
        while (true) {
            if (iterations_ > max_iter) return Outcome::Breakdown;
            const Eigen::Index e = entering(cost_row, eligible_cols);
            if (e < 0) return Outcome::Optimal;

            Eigen::Index leave = -1;
            double best_ratio = kInf;
            bool tiny_only = false;
            for (Eigen::Index i = 0; i < rows(); ++i) {
                const double a = t_(i, e);
                if (a > opt_.pivot_tol) {
                    const double ratio = std::max(0.0, rhs(i)) / a;
                    if (leave < 0 || ratio < best_ratio - 1e-12) {
                        best_ratio = ratio;
                        leave = i;
                    } else if (ratio <= best_ratio + 1e-12 &&
                               basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]) {
                        // lowest basic index among ties
                        best_ratio = std::min(best_ratio, ratio);
                        leave = i;
                    }
                } else if (a > opt_.breakdown_pivot) {
                    tiny_only = true;
                }
            }
            if (leave < 0) return tiny_only ? Outcome::Breakdown : Outcome::Unbounded;

            if (best_ratio <= 0.0) {
                if (++degenerate_run > opt_.degenerate_limit) bland_ = true;
            } else {
                degenerate_run = 0;
            }
            pivot(leave, e);
        }
    }

    void pivot(Eigen::Index r, Eigen::Index e) {
        ++iterations_;
        const double piv = t_(r, e);
        t_.row(r) /= piv;
        t_(r, e) = 1.0;
        const Eigen::Index rhs_col = cols();
        const auto prow = t_.row(r).head(active_cols_);
        const double prhs = t_(r, rhs_col);
        nz_.clear();
        for (Eigen::Index j = 0; j < active_cols_; ++j)
            if (prow[j] != 0.0) nz_.push_back(j);
        const bool sparse = nz_.size() * 3 < static_cast<std::size_t>(active_cols_);
        for (Eigen::Index i = 0; i < t_.rows(); ++i) {
            if (i == r) continue;
            const double f = t_(i, e);
            if (f == 0.0) continue;
            if (sparse) {
                double* row = &t_(i, 0);
                const double* src = &t_(r, 0);
                for (Eigen::Index j : nz_) row[j] -= f * src[j];
            } else {
                t_.row(i).head(active_cols_) -= f * prow;
            }
            t_(i, rhs_col) -= f * prhs;
            t_(i, e) = 0.0;
        }
        for (Eigen::Index i = 0; i < rows(); ++i)
            if (t_(i, cols()) < 0.0 && t_(i, cols()) > -1e-12) t_(i, cols()) = 0.0;
        basis_[static_cast<std::size_t>(r)] = e;
    }

    /// Pivots basic artificials out after phase 1 where possible; rows with no
    /// usable structural entry are redundant and keep their zero artificial.
    void expel_artificials() {
        for (Eigen::Index i = 0; i < rows(); ++i) {
            if (basis_[static_cast<std::size_t>(i)] < first_art_) continue;
            Eigen::Index best = -1;
            double best_abs = opt_.pivot_tol;
            for (Eigen::Index j = 0; j < first_art_; ++j) {
                if (std::abs(t_(i, j)) > best_abs) {
                    best_abs = std::abs(t_(i, j));
                    best = j;
                }
            }
            if (best >= 0) pivot(i, best);
        }
        // Artificial columns never re-enter, so later pivots leave them stale.
        active_cols_ = first_art_;
    }

    double value(Eigen::Index row) const { return t_(row, cols()); }
    double reduced_cost(Eigen::Index cost_row, Eigen::Index j) const { return t_(cost_row, j); }

private:
    Eigen::Index entering(Eigen::Index cost_row, Eigen::Index eligible_cols) const {
        Eigen::Index best = -1;
        double best_rc = -opt_.optimality_tol;
        for (Eigen::Index j = 0; j < eligible_cols; ++j) {
            const double rc = t_(cost_row, j);
            if (rc < best_rc) {
                best = j;
                if (bland_) break;
                best_rc = rc;
            }
        }
        return best;
    }

    TableauMatrix t_;
    std::vector<Eigen::Index> basis_;
    Eigen::Index first_art_;
    SimplexOptions opt_;
    Eigen::Index active_cols_;
    std::vector<Eigen::Index> nz_;  // nonzero columns of the pivot row
    std::size_t iterations_ = 0;
    bool bland_ = false;
};

/// How an original variable maps onto nonnegative tableau columns:
/// z = offset + sign * y[col] - (neg_col >= 0 ? y[neg_col] : 0).
struct VarMap {
    Eigen::Index col = -1;
    Eigen::Index neg_col = -1;
    double sign = 1.0;
    double offset = 0.0;
};

}  // namespace detail

/// Two-phase primal simplex on a dense tableau. Pricing is Dantzig's rule
/// until a run of degenerate pivots, after which Bland's rule is used for the
/// rest of the solve. Fully deterministic.
inline LpSolution solve(const LpProblem& p, const SimplexOptions& opt = {}) {
    using Eigen::Index;
    const Index n = p.num_vars();
    LpSolution sol;

    // Column mapping for original variables.
    std::vector<detail::VarMap> vars(static_cast<std::size_t>(n));
    std::vector<std::pair<Index, double>> upper_rows;  // (structural col, bound) rows y <= u
    Index ny = 0;
    for (Index j = 0; j < n; ++j) {
        auto& v = vars[static_cast<std::size_t>(j)];
        const bool lo_fin = std::isfinite(p.lower[j]);
        const bool hi_fin = std::isfinite(p.upper[j]);
        if (lo_fin && hi_fin && p.upper[j] < p.lower[j]) {
            sol.status = LpStatus::Infeasible;
            return sol;
        }
        if (lo_fin) {
            v = {ny++, -1, 1.0, p.lower[j]};
            if (hi_fin) upper_rows.emplace_back(v.col, p.upper[j] - p.lower[j]);
        } else if (hi_fin) {
            v = {ny++, -1, -1.0, p.upper[j]};
        } else {
            v.col = ny++;
            v.neg_col = ny++;
        }
    }

    // Constraint rows in terms of y, before sign normalisation.
    const Index m_eq = p.A_eq.rows();
    const Index m_ub = p.A_ub.rows() + static_cast<Index>(upper_rows.size());
    const Index m = m_eq + m_ub;
    Matrix A = Matrix::Zero(m, ny);
    Vector b(m);
    auto fill_row = [&](Index row, const Eigen::Ref<const Eigen::RowVectorXd>& a, double rhs) {
        double shift = 0.0;
        for (Index j = 0; j < n; ++j) {
            const auto& v = vars[static_cast<std::size_t>(j)];
            const double aj = a[j];
            if (aj == 0.0) continue;
            A(row, v.col) += v.sign * aj;
            if (v.neg_col >= 0) A(row, v.neg_col) -= aj;
            shift += aj * v.offset;
        }
        b[row] = rhs - shift;
    };
    for (Index i = 0; i < m_eq; ++i) fill_row(i, p.A_eq.row(i), p.b_eq[i]);
    for (Index i = 0; i < p.A_ub.rows(); ++i) fill_row(m_eq + i, p.A_ub.row(i), p.b_ub[i]);
    for (std::size_t u = 0; u < upper_rows.size(); ++u) {
        const Index row = m_eq + p.A_ub.rows() + static_cast<Index>(u);
        A(row, upper_rows[u].first) = 1.0;
        b[row] = upper_rows[u].second;
    }

    // Slack per inequality; artificial per equality and per inequality whose
    // right-hand side had to be negated.
    std::vector<Index> needs_art;
    std::vector<Index> basis(static_cast<std::size_t>(m), -1);
    const Index slack0 = ny;
    for (Index i = 0; i < m; ++i) {
        const bool is_ub = i >= m_eq;
        if (b[i] < 0.0 || !is_ub) needs_art.push_back(i);
        else basis[static_cast<std::size_t>(i)] = slack0 + (i - m_eq);
    }
    const Index art0 = slack0 + m_ub;
    const Index ncols = art0 + static_cast<Index>(needs_art.size());

    detail::TableauMatrix t = detail::TableauMatrix::Zero(m + 2, ncols + 1);
    t.topLeftCorner(m, ny) = A;
    for (Index i = m_eq; i < m; ++i) t(i, slack0 + (i - m_eq)) = 1.0;
    t.col(ncols).head(m) = b;
    for (Index i = 0; i < m; ++i) {
        if (b[i] < 0.0) t.row(i).head(art0) *= -1.0, t(i, ncols) = -b[i];
    }
    for (std::size_t a = 0; a < needs_art.size(); ++a) {
        const Index row = needs_art[a];
        t(row, art0 + static_cast<Index>(a)) = 1.0;
        basis[static_cast<std::size_t>(row)] = art0 + static_cast<Index>(a);
    }
    // Phase-1 costs priced out over the artificial rows.
    for (Index row : needs_art) t.row(m).head(art0) -= t.row(row).head(art0), t(m, ncols) -= t(row, ncols);
    // Phase-2 costs (all basics start at cost zero).
    for (Index j = 0; j < n; ++j) {
        const auto& v = vars[static_cast<std::size_t>(j)];
        t(m + 1, v.col) += v.sign * p.c[j];
        if (v.neg_col >= 0) t(m + 1, v.neg_col) -= p.c[j];
    }

    detail::Tableau tab(std::move(t), std::move(basis), art0, opt);

    if (!needs_art.empty()) {
        const auto out = tab.run(tab.phase1_row(), ncols);
        if (out == detail::Tableau::Outcome::Breakdown) {
            sol.status = LpStatus::NumericalBreakdown;
            sol.iterations = tab.iterations();
            return sol;
        }
        const double infeas = -tab.value(tab.phase1_row());
        const double scale = std::max(1.0, b.size() > 0 ? b.cwiseAbs().maxCoeff() : 0.0);
        if (infeas > opt.feasibility_tol * scale) {
            sol.status = LpStatus::Infeasible;
            sol.iterations = tab.iterations();
            return sol;
        }
        tab.expel_artificials();
    }

    const auto out = tab.run(tab.phase2_row(), art0);
    sol.iterations = tab.iterations();
    if (out == detail::Tableau::Outcome::Breakdown) {
        sol.status = LpStatus::NumericalBreakdown;
        return sol;
    }
    if (out == detail::Tableau::Outcome::Unbounded) {
        sol.status = LpStatus::Unbounded;
        return sol;
    }

    Vector y = Vector::Zero(ncols);
    for (Index i = 0; i < m; ++i) y[tab.basis()[static_cast<std::size_t>(i)]] = std::max(0.0, tab.rhs(i));

    // Polish the basic values against the original rows: the tableau's
    // right-hand side accumulates round-off over many pivots. The correction
    // is the least-squares solution over all rows (rows left holding a
    // near-zero artificial included), applied twice and kept only while the
    // residual does not grow and the step stays small. A cheap residual check
    // skips clean solutions.
    const auto residual = [&](const Vector& v) {
        double r = 0.0;
        for (Index i = 0; i < m; ++i) {
            double lhs = A.row(i).dot(v.head(ny));
            if (i >= m_eq) lhs += v[slack0 + (i - m_eq)];
            r = std::max(r, std::abs(lhs - b[i]));
        }
        return r;
    };
    if (m > 0 && residual(y) > opt.refine_tol) {
        std::vector<Index> cols;
        for (Index c : tab.basis())
            if (c < art0) cols.push_back(c);
        const Index r = static_cast<Index>(cols.size());
        Matrix B = Matrix::Zero(m, r);
        Vector yb(r);
        for (Index k = 0; k < r; ++k) {
            const Index c = cols[static_cast<std::size_t>(k)];
            if (c < ny) B.col(k) = A.col(c);
            else B(m_eq + (c - slack0), k) = 1.0;
            yb[k] = y[c];
        }
        const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(B);
        for (int pass = 0; pass < 2; ++pass) {
            yb += cod.solve(b - B * yb);
            Vector y2 = Vector::Zero(ncols);
            for (Index k = 0; k < r; ++k) y2[cols[static_cast<std::size_t>(k)]] = std::max(0.0, yb[k]);
            if (!(y2.allFinite() && yb.minCoeff() > -opt.feasibility_tol && residual(y2) <= residual(y))) break;
            // A round-off correction is tiny; a large one moved along a
            // weakly determined direction of a near-singular basis.
            if ((y2 - y).cwiseAbs().maxCoeff() > opt.refine_max_step) break;
            y = y2;
        }
    }
    sol.z.resize(n);
    for (Index j = 0; j < n; ++j) {
        const auto& v = vars[static_cast<std::size_t>(j)];
        sol.z[j] = v.offset + v.sign * y[v.col] - (v.neg_col >= 0 ? y[v.neg_col] : 0.0);
    }
    sol.objective = p.c.dot(sol.z);
    sol.ub_duals.resize(p.A_ub.rows());
    for (Index i = 0; i < p.A_ub.rows(); ++i) sol.ub_duals[i] = tab.reduced_cost(tab.phase2_row(), slack0 + i);
    sol.min_reduced_cost = kInf;
    for (Index j = 0; j < art0; ++j) sol.min_reduced_cost = std::min(sol.min_reduced_cost, tab.reduced_cost(tab.phase2_row(), j));
    sol.status = LpStatus::Optimal;
    return sol;
}

}  // namespace truthts::lp
