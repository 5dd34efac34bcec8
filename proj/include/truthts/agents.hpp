#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "truthts/model.hpp"
#include "truthts/posterior.hpp"
#include "truthts/rng.hpp"
#include "truthts/truthful.hpp"
#include "truthts/tsprob.hpp"

namespace truthts {

enum class PolicyKind { TruthfulTS, StandardTS, ETC, EpsGreedy, LinUCB, Greedy };
enum class AgentKind { Truthful, Strategic };
enum class Tiebreak { PreferTruth };

inline constexpr PolicyKind kAllPolicies[] = {PolicyKind::TruthfulTS, PolicyKind::StandardTS, PolicyKind::ETC,
                                              PolicyKind::EpsGreedy,  PolicyKind::LinUCB,     PolicyKind::Greedy};

inline const char* to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::TruthfulTS: return "TruthfulTS";
        case PolicyKind::StandardTS: return "StandardTS";
        case PolicyKind::ETC: return "ETC";
        case PolicyKind::EpsGreedy: return "EpsGreedy";
        case PolicyKind::LinUCB: return "LinUCB";
        case PolicyKind::Greedy: return "Greedy";
    }
    return "?";
}

inline const char* to_string(AgentKind k) { return k == AgentKind::Truthful ? "Truthful" : "Strategic"; }

inline std::optional<PolicyKind> parse_policy_kind(std::string_view s) {
    for (auto k : kAllPolicies)
        if (s == to_string(k)) return k;
    return std::nullopt;
}

inline std::optional<AgentKind> parse_agent_kind(std::string_view s) {
    if (s == "Truthful") return AgentKind::Truthful;
    if (s == "Strategic") return AgentKind::Strategic;
    return std::nullopt;
}

struct AgentModel {
    AgentKind kind = AgentKind::Truthful;
    Tiebreak tiebreak = Tiebreak::PreferTruth;
    /// Gains at or below this are not worth a misreport.
    double indifference = 1e-8;
};

struct PolicyConfig {
    PolicyKind kind = PolicyKind::TruthfulTS;
    MechanismConfig mechanism;
    QuadratureConfig quadrature;
    GridConfig grid;
    /// Thompson Monte Carlo draws per context for grid posteriors.
    std::size_t mc_samples = 4000;
    /// LinUCB exploration weight; NaN selects 1 + sqrt(ln(2T)/2).
    double linucb_alpha = std::numeric_limits<double>::quiet_NaN();
    /// ETC pulls per arm; 0 selects ceil((T/K)^(2/3)).
    std::size_t etc_pulls = 0;
};

inline double default_linucb_alpha(std::size_t horizon) {
    return 1.0 + std::sqrt(std::log(2.0 * static_cast<double>(horizon)) / 2.0);
}

inline std::size_t default_etc_pulls(std::size_t horizon, std::size_t K) {
    return static_cast<std::size_t>(
        std::ceil(std::pow(static_cast<double>(horizon) / static_cast<double>(K), 2.0 / 3.0) - 1e-12));
}

/// e_t = min(1, t^(-1/3)).
inline double eps_greedy_rate(std::size_t t) { return std::min(1.0, std::pow(static_cast<double>(t), -1.0 / 3.0)); }

/// Per-arm ridge statistics with unit regularisation.
struct RidgeArm {
    Matrix A;
    Vector b;
    Matrix A_inv;
    Vector theta;
};

/// Sufficient statistics of the history plus the step counter (t starts at 1).
struct PolicyState {
    PolicyConfig cfg;
    std::size_t K = 0;
    std::size_t d = 0;
    std::size_t horizon = 1;
    NoiseSpec noise;
    std::variant<std::monostate, GaussianPosterior, GridPosterior> posterior;
    std::vector<RidgeArm> ridge;
    std::vector<std::size_t> report_counts;
    std::size_t t = 1;
    std::size_t etc_pulls = 0;
    std::optional<std::size_t> etc_commit;

    bool uses_posterior() const {
        return cfg.kind == PolicyKind::TruthfulTS || cfg.kind == PolicyKind::StandardTS || cfg.kind == PolicyKind::Greedy;
    }
    bool deterministic() const {
        return cfg.kind == PolicyKind::ETC || cfg.kind == PolicyKind::LinUCB || cfg.kind == PolicyKind::Greedy;
    }
    bool uses_grid() const { return std::holds_alternative<GridPosterior>(posterior); }

    /// d x K matrix of the point estimates agents see.
    Matrix theta_matrix() const {
        if (auto* g = std::get_if<GaussianPosterior>(&posterior)) return g->theta_matrix();
        if (auto* g = std::get_if<GridPosterior>(&posterior)) return g->theta_matrix();
        Matrix out(d, K);
        for (std::size_t k = 0; k < K; ++k) out.col(static_cast<Eigen::Index>(k)) = ridge[k].theta;
        return out;
    }
};

/// Laplace noise selects the grid posterior for the posterior-based policies.
inline PolicyState make_policy(const BanditInstance& inst, const PolicyConfig& cfg) {
    PolicyState ps;
    ps.cfg = cfg;
    ps.K = inst.K;
    ps.d = inst.d;
    ps.horizon = inst.horizon;
    ps.noise = inst.noise;
    ps.report_counts.assign(inst.N(), 0);
    if (ps.uses_posterior()) {
        if (inst.noise.kind == NoiseKind::Laplace) ps.posterior = init_grid(inst, cfg.grid);
        else ps.posterior = init_gaussian(inst, inst.noise.variance);
    } else {
        const auto d = static_cast<Eigen::Index>(inst.d);
        ps.ridge.assign(inst.K, RidgeArm{Matrix::Identity(d, d), Vector::Zero(d), Matrix::Identity(d, d), Vector::Zero(d)});
    }
    if (std::isnan(ps.cfg.linucb_alpha)) ps.cfg.linucb_alpha = default_linucb_alpha(inst.horizon);
    ps.etc_pulls = cfg.etc_pulls > 0 ? cfg.etc_pulls : default_etc_pulls(inst.horizon, inst.K);
    return ps;
}

/// Arrival probabilities the mechanism works with: the known beta, or
/// add-one smoothed frequencies of the contexts reported so far.
inline Vector mechanism_beta(const PolicyState& ps, const BanditInstance& inst) {
    if (ps.cfg.mechanism.beta_source == BetaSource::Known && inst.beta_known) return inst.beta;
    const auto N = static_cast<Eigen::Index>(inst.N());
    Vector b(N);
    for (Eigen::Index n = 0; n < N; ++n) b[n] = static_cast<double>(ps.report_counts[static_cast<std::size_t>(n)]) + 1.0;
    return b / b.sum();
}

/// Streams used while publishing at step t; row n of a Monte Carlo policy
/// gets its own sub-stream so rows never share draws.
struct StepStreams {
    std::uint64_t seed = 0;
    std::uint64_t replication = 0;
    std::uint64_t step = 0;

    RngStream make(Purpose p, std::uint64_t sub = 0) const { return RngStream(seed, {replication, step, p, sub}); }
};

namespace detail {

inline std::size_t argmax_lowest(const Vector& v) {
    std::size_t best = 0;
    for (Eigen::Index k = 1; k < v.size(); ++k)
        if (v[k] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(k);
    return best;
}

inline std::size_t context_free_greedy_arm(const PolicyState& ps, const BanditInstance& inst) {
    const Vector mean_ctx = inst.contexts.transpose() * inst.beta;
    return argmax_lowest(ps.theta_matrix().transpose() * mean_ctx);
}

inline std::size_t etc_arm(PolicyState& ps, const BanditInstance& inst) {
    if (ps.t <= ps.K * ps.etc_pulls) return (ps.t - 1) % ps.K;
    if (!ps.etc_commit) ps.etc_commit = context_free_greedy_arm(ps, inst);
    return *ps.etc_commit;
}

}  // namespace detail

/// Thompson probabilities for one context under the current posterior.
inline ChoiceDistribution thompson_row(const PolicyState& ps, const Vector& x, std::size_t n, const StepStreams& streams) {
    if (auto* g = std::get_if<GaussianPosterior>(&ps.posterior)) return ts_probabilities_gaussian(*g, x, ps.cfg.quadrature);
    if (auto* g = std::get_if<GridPosterior>(&ps.posterior)) {
        RngStream rng = streams.make(Purpose::ThompsonMc, n);
        return ts_probabilities_grid(*g, x, ps.cfg.mc_samples, rng);
    }
    throw std::logic_error("thompson_row needs a posterior");
}

/// Row of the published table for context n, for every policy except the
/// mechanism (whose rows depend on each other).
inline ChoiceDistribution policy_row(PolicyState& ps, const BanditInstance& inst, std::size_t n,
                                     const StepStreams& streams) {
    const Vector x = inst.context(n);
    switch (ps.cfg.kind) {
        case PolicyKind::TruthfulTS:
        case PolicyKind::StandardTS: return thompson_row(ps, x, n, streams);
        case PolicyKind::Greedy: return one_hot(ps.K, detail::argmax_lowest(ps.theta_matrix().transpose() * x));
        case PolicyKind::LinUCB: {
            Vector score(static_cast<Eigen::Index>(ps.K));
            for (std::size_t k = 0; k < ps.K; ++k) {
                const RidgeArm& a = ps.ridge[k];
                score[static_cast<Eigen::Index>(k)] = x.dot(a.theta) + ps.cfg.linucb_alpha * std::sqrt(x.dot(a.A_inv * x));
            }
            return one_hot(ps.K, detail::argmax_lowest(score));
        }
        case PolicyKind::ETC: return one_hot(ps.K, detail::etc_arm(ps, inst));
        case PolicyKind::EpsGreedy: {
            const double e = eps_greedy_rate(ps.t);
            ChoiceDistribution c = uniform_choice(ps.K);
            c.probs *= e;
            c.probs[static_cast<Eigen::Index>(detail::context_free_greedy_arm(ps, inst))] += 1.0 - e;
            return c;
        }
    }
    throw std::logic_error("unknown policy kind");
}

struct Published {
    PolicyTable table;
    /// Thompson probabilities before the mechanism (TruthfulTS only).
    PolicyTable thompson;
    std::optional<MechanismDiagnostics> mechanism;
};

inline Published publish_policy(PolicyState& ps, const BanditInstance& inst, const StepStreams& streams) {
    Published out;
    const std::size_t N = inst.N();
    out.table.probs.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(ps.K));
    for (std::size_t n = 0; n < N; ++n) out.table.set_row(n, policy_row(ps, inst, n, streams));
    if (ps.cfg.kind == PolicyKind::TruthfulTS) {
        out.thompson = out.table;
        auto res = solve_truthful_policy(out.thompson, ps.theta_matrix(), inst.contexts, mechanism_beta(ps, inst),
                                         ps.cfg.mechanism);
        out.table = std::move(res.q);
        out.mechanism = res.diag;
    }
    return out;
}

/// Context index maximising chi_true^T Theta table_n. The true context wins
/// unless another row is better by more than the agent's indifference; among
/// better rows the lowest index wins ties.
inline std::size_t best_response_report(std::size_t true_index, const Matrix& contexts, const Matrix& theta,
                                        const PolicyTable& table, const AgentModel& agent = {}) {
    const Vector x = contexts.row(static_cast<Eigen::Index>(true_index)).transpose();
    const Vector values = table.probs * (theta.transpose() * x);
    const double truthful = values[static_cast<Eigen::Index>(true_index)];
    std::size_t best = true_index;
    double best_value = truthful + agent.indifference;
    for (Eigen::Index n = 0; n < values.size(); ++n) {
        if (values[n] > best_value) {
            best = static_cast<std::size_t>(n);
            best_value = values[n];
        }
    }
    return best;
}

inline std::size_t select_arm(const PolicyState& ps, const ChoiceDistribution& row, RngStream& rng) {
    if (ps.deterministic()) return detail::argmax_lowest(row.probs);
    return sample_index(row.probs, rng.uniform());
}

/// Feeds (reported context, arm, reward) back into the policy and advances t.
inline void update_policy(PolicyState& ps, const Vector& x_reported, std::size_t reported_index, std::size_t arm,
                          double reward) {
    if (auto* g = std::get_if<GaussianPosterior>(&ps.posterior)) {
        g->update_in_place(arm, x_reported, reward);
    } else if (auto* g = std::get_if<GridPosterior>(&ps.posterior)) {
        update_grid_in_place(*g, arm, x_reported, reward, ps.noise);
    } else {
        if (!std::isfinite(reward)) throw PosteriorError(PosteriorErrc::NonFiniteReward, "reward is not finite");
        RidgeArm& a = ps.ridge.at(arm);
        a.A.noalias() += x_reported * x_reported.transpose();
        a.b.noalias() += reward * x_reported;
        Eigen::LLT<Matrix> llt(a.A);
        a.A_inv = llt.solve(Matrix::Identity(a.A.rows(), a.A.cols()));
        a.theta = llt.solve(a.b);
    }
    if (reported_index < ps.report_counts.size()) ++ps.report_counts[reported_index];
    ++ps.t;
}

}  // namespace truthts
