#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "truthts/agents.hpp"
#include "truthts/model.hpp"
#include "truthts/posterior.hpp"
#include "truthts/rng.hpp"

namespace truthts {

inline constexpr std::size_t kCheckpointGrid[] = {10, 20, 50, 100, 200, 500, 1000, 2000};

/// Diagnostic checkpoints that fall inside [1, T]; T itself is always included.
inline std::vector<std::size_t> checkpoints(std::size_t T) {
    std::vector<std::size_t> out;
    for (auto c : kCheckpointGrid)
        if (c <= T) out.push_back(c);
    if (out.empty() || out.back() != T) out.push_back(T);
    return out;
}

struct StepRecord {
    std::size_t true_index = 0;
    std::size_t reported_index = 0;
    std::size_t arm = 0;
    double reward = 0.0;
    double regret = 0.0;
    bool conflict = false;
    bool mechanism_ran = false;
    MechanismPath path = MechanismPath::Identity;
    std::size_t lp_iterations = 0;
    double lp_objective = std::numeric_limits<double>::quiet_NaN();
    double fallback_objective = std::numeric_limits<double>::quiet_NaN();
    /// max_n ||p_n - q_n||_inf of the table actually published.
    double objective = std::numeric_limits<double>::quiet_NaN();
    double ic_min_slack = std::numeric_limits<double>::quiet_NaN();
    double mass_error = 0.0;
    /// Worst row-sum error or negative entry over the published rows.
    double simplex_error = 0.0;

    bool misreport() const { return true_index != reported_index; }
};

struct Trace {
    PolicyKind policy = PolicyKind::TruthfulTS;
    AgentKind agent = AgentKind::Truthful;
    std::uint64_t replication = 0;
    std::vector<StepRecord> steps;
    /// d x K posterior (or ridge) point estimates after the last update.
    Matrix final_theta;
};

struct EpisodeOptions {
    std::uint64_t seed = 0;
    std::uint64_t replication = 0;
    /// When set, every agent reports this context index regardless of truth.
    std::optional<std::size_t> forced_report;
};

namespace detail {

inline double table_simplex_error(const PolicyTable& t) {
    if (t.probs.size() == 0) return 0.0;
    const double sum_err = (t.probs.rowwise().sum().array() - 1.0).abs().maxCoeff();
    const double neg = std::max(0.0, -t.probs.minCoeff());
    return std::max(sum_err, neg);
}

}  // namespace detail

/// One run of the publish -> report -> select -> reward -> update loop.
/// The reward uses the true context; the policy learns from the report.
inline Trace run_episode(const BanditInstance& inst, const GroundTruth& gt, const PolicyConfig& policy,
                         const AgentModel& agent, const EpisodeOptions& opt) {
    PolicyState ps = make_policy(inst, policy);
    Trace trace;
    trace.policy = policy.kind;
    trace.agent = agent.kind;
    trace.replication = opt.replication;
    trace.steps.reserve(inst.horizon);

    // A truthful agent facing a non-mechanism policy only needs its own row.
    const bool full_table = agent.kind == AgentKind::Strategic || policy.kind == PolicyKind::TruthfulTS;

    for (std::size_t t = 1; t <= inst.horizon; ++t) {
        const StepStreams streams{opt.seed, opt.replication, t};
        StepRecord rec;
        RngStream ctx_rng = streams.make(Purpose::Context);
        rec.true_index = sample_context(inst, ctx_rng);

        ChoiceDistribution row;
        if (full_table) {
            Published pub = publish_policy(ps, inst, streams);
            const Matrix theta = ps.theta_matrix();
            if (opt.forced_report) rec.reported_index = *opt.forced_report;
            else if (agent.kind == AgentKind::Strategic)
                rec.reported_index = best_response_report(rec.true_index, inst.contexts, theta, pub.table, agent);
            else rec.reported_index = rec.true_index;
            if (pub.mechanism) {
                const MechanismDiagnostics& m = *pub.mechanism;
                rec.mechanism_ran = true;
                rec.conflict = m.conflict;
                rec.path = m.path;
                rec.lp_iterations = m.lp_iterations;
                rec.lp_objective = m.lp_objective;
                rec.fallback_objective = m.fallback_objective;
                rec.objective = m.objective;
                rec.ic_min_slack = m.ic_min_slack;
                rec.mass_error = m.mass_error;
            } else {
                rec.conflict = detect_conflicts(pub.table, theta, inst.contexts, policy.mechanism.conflict_tol).any();
            }
            rec.simplex_error = detail::table_simplex_error(pub.table);
            row = pub.table.row(rec.reported_index);
        } else {
            rec.reported_index = opt.forced_report ? *opt.forced_report : rec.true_index;
            row = policy_row(ps, inst, rec.reported_index, streams);
            rec.simplex_error = std::max(std::abs(row.probs.sum() - 1.0), std::max(0.0, -row.probs.minCoeff()));
        }

        RngStream arm_rng = streams.make(Purpose::Arm);
        rec.arm = select_arm(ps, row, arm_rng);

        const Vector x_true = inst.context(rec.true_index);
        RngStream noise_rng = streams.make(Purpose::Noise);
        rec.reward = sample_reward(gt, rec.arm, x_true, inst.noise, noise_rng);
        rec.regret = gt.mean_reward(gt.best_arm(x_true), x_true) - gt.mean_reward(rec.arm, x_true);

        update_policy(ps, inst.context(rec.reported_index), rec.reported_index, rec.arm, rec.reward);
        trace.steps.push_back(rec);
    }
    trace.final_theta = ps.theta_matrix();
    return trace;
}

/// Running sum of max_k x_t^T theta_k - x_t^T theta_{a_t} over the true contexts.
inline std::vector<double> cumulative_regret(const Trace& trace, const GroundTruth& gt, const BanditInstance& inst) {
    std::vector<double> out;
    out.reserve(trace.steps.size());
    double acc = 0.0;
    for (const auto& s : trace.steps) {
        const Vector x = inst.context(s.true_index);
        acc += (gt.thetas * x).maxCoeff() - gt.mean_reward(s.arm, x);
        out.push_back(acc);
    }
    return out;
}

/// Gap table Delta(n, j) = max_k chi_n^T theta_k - chi_n^T theta_j.
inline Matrix gap_table(const GroundTruth& gt, const BanditInstance& inst) {
    const Matrix values = inst.contexts * gt.thetas.transpose();  // N x K
    Matrix gaps(values.rows(), values.cols());
    for (Eigen::Index n = 0; n < values.rows(); ++n)
        gaps.row(n) = values.row(n).maxCoeff() - values.row(n).array();
    return gaps;
}

struct RegretReport {
    std::string label;
    std::size_t replications = 0;
    std::vector<double> mean_cum_regret;
    std::vector<double> ci95;
    std::vector<double> frac_misreport;
    std::vector<double> frac_conflict;
    std::vector<double> frac_lp_path;
    /// Mean over replications of the mechanism's objective at step t (NaN when
    /// the mechanism never ran at t).
    std::vector<double> lp_objective_mean;
    std::vector<std::size_t> checkpoint_steps;
    /// suboptimal_pulls[c](n, j): mean count of pulls of arm j at true context
    /// n up to checkpoint c, counted only where j is suboptimal for n.
    std::vector<Matrix> suboptimal_pulls;
    /// Mean mechanism objective over all mechanism steps up to each checkpoint.
    std::vector<double> checkpoint_objective_mean;
    Matrix mean_gaps;
};

inline double ci95_half_width(double sum, double sum_sq, std::size_t n) {
    if (n < 2) return 0.0;
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1));
    return 1.96 * std::sqrt(var / static_cast<double>(n));
}

inline RegretReport aggregate(const std::vector<Trace>& traces, const std::vector<GroundTruth>& gts,
                              const BanditInstance& inst, std::string label = {}) {
    RegretReport rep;
    rep.label = std::move(label);
    rep.replications = traces.size();
    if (traces.empty()) return rep;
    const std::size_t T = traces.front().steps.size();
    const std::size_t N = inst.N();
    const std::size_t K = inst.K;
    const double R = static_cast<double>(traces.size());

    std::vector<double> sum(T, 0.0), sum_sq(T, 0.0), mis(T, 0.0), conf(T, 0.0), lp(T, 0.0), obj(T, 0.0);
    std::vector<std::size_t> obj_n(T, 0);
    rep.checkpoint_steps = checkpoints(T);
    rep.suboptimal_pulls.assign(rep.checkpoint_steps.size(), Matrix::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(K)));
    rep.mean_gaps = Matrix::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(K));
    std::vector<double> cp_obj(rep.checkpoint_steps.size(), 0.0);
    std::vector<std::size_t> cp_obj_n(rep.checkpoint_steps.size(), 0);

    for (std::size_t r = 0; r < traces.size(); ++r) {
        const Trace& tr = traces[r];
        const Matrix gaps = gap_table(gts[r], inst);
        rep.mean_gaps += gaps / R;
        const std::vector<double> cum = cumulative_regret(tr, gts[r], inst);
        Matrix pulls = Matrix::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(K));
        std::size_t next_cp = 0;
        double cum_obj = 0.0;
        std::size_t cum_obj_n = 0;
        for (std::size_t t = 0; t < T; ++t) {
            const StepRecord& s = tr.steps[t];
            sum[t] += cum[t];
            sum_sq[t] += cum[t] * cum[t];
            mis[t] += s.misreport() ? 1.0 : 0.0;
            conf[t] += s.conflict ? 1.0 : 0.0;
            lp[t] += (s.mechanism_ran && s.path == MechanismPath::Lp) ? 1.0 : 0.0;
            if (s.mechanism_ran) {
                obj[t] += s.objective;
                ++obj_n[t];
            }
            const auto n = static_cast<Eigen::Index>(s.true_index);
            const auto a = static_cast<Eigen::Index>(s.arm);
            if (gaps(n, a) > 0.0) pulls(n, a) += 1.0;
            if (s.mechanism_ran) {
                cum_obj += s.objective;
                ++cum_obj_n;
            }
            while (next_cp < rep.checkpoint_steps.size() && rep.checkpoint_steps[next_cp] == t + 1) {
                cp_obj[next_cp] += cum_obj;
                cp_obj_n[next_cp] += cum_obj_n;
                rep.suboptimal_pulls[next_cp] += pulls / R;
                ++next_cp;
            }
        }
    }

    rep.checkpoint_objective_mean.resize(rep.checkpoint_steps.size());
    for (std::size_t c = 0; c < cp_obj.size(); ++c)
        rep.checkpoint_objective_mean[c] =
            cp_obj_n[c] > 0 ? cp_obj[c] / static_cast<double>(cp_obj_n[c]) : std::numeric_limits<double>::quiet_NaN();
    rep.mean_cum_regret.resize(T);
    rep.ci95.resize(T);
    rep.frac_misreport.resize(T);
    rep.frac_conflict.resize(T);
    rep.frac_lp_path.resize(T);
    rep.lp_objective_mean.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        rep.mean_cum_regret[t] = sum[t] / R;
        rep.ci95[t] = ci95_half_width(sum[t], sum_sq[t], traces.size());
        rep.frac_misreport[t] = mis[t] / R;
        rep.frac_conflict[t] = conf[t] / R;
        rep.frac_lp_path[t] = lp[t] / R;
        rep.lp_objective_mean[t] =
            obj_n[t] > 0 ? obj[t] / static_cast<double>(obj_n[t]) : std::numeric_limits<double>::quiet_NaN();
    }
    return rep;
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
/// processed exactly once, so results written to slot i are independent of
/// scheduling. The first exception thrown by any body is rethrown.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(count);
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline GroundTruth replication_ground_truth(const BanditInstance& inst, std::uint64_t seed, std::uint64_t replication) {
    RngStream rng(seed, {replication, 0, Purpose::GroundTruth, 0});
    return sample_ground_truth(inst, rng);
}

struct ReplicatedRun {
    std::vector<GroundTruth> gts;
    std::vector<Trace> traces;
};

/// Replication r draws its own ground truth from the prior; every policy run
/// with the same seed sees the same ground truths, contexts and noise.
inline ReplicatedRun run_replications(const BanditInstance& inst, const PolicyConfig& policy, const AgentModel& agent,
                                      std::uint64_t seed, std::size_t replications, std::size_t threads,
                                      std::optional<std::size_t> forced_report = std::nullopt,
                                      const std::function<GroundTruth(std::size_t)>& truth = {}) {
    ReplicatedRun out;
    out.gts.resize(replications);
    out.traces.resize(replications);
    parallel_for(replications, threads, [&](std::size_t r) {
        out.gts[r] = truth ? truth(r) : replication_ground_truth(inst, seed, r);
        out.traces[r] = run_episode(inst, out.gts[r], policy, agent, {seed, r, forced_report});
    });
    return out;
}

// ---------------------------------------------------------------------------
// Martingale diagnostic for the two-context instance under forced misreports.

struct MartingaleSeries {
    std::size_t arm = 0;
    /// Expected Y_1, i.e. -b_k with b_k = sum_n beta_n chi_n^T theta_k.
    double drift_target = 0.0;
    double y1_mean = 0.0;
    double y1_se = 0.0;
    std::vector<std::size_t> pull_index;     // checkpoint s (count of pulls of arm k so far + 1)
    std::vector<std::size_t> samples;        // replications reaching s + 1
    std::vector<double> y_mean;              // mean of Y_s
    std::vector<double> increment_mean;      // mean of Y_{s+1} - Y_s
    std::vector<double> increment_se;
    std::vector<double> increment_slope;     // OLS slope of the increment on Y_s
    std::vector<double> increment_slope_se;
};

struct MartingaleDiagnostic {
    std::size_t replications = 0;
    std::size_t horizon = 0;
    std::vector<MartingaleSeries> arms;
};

/// Pull-index checkpoints for the martingale test.
inline std::vector<std::size_t> martingale_checkpoints(std::size_t T) {
    std::vector<std::size_t> out{1, 2, 5};
    for (auto c : kCheckpointGrid)
        if (c < T) out.push_back(c);
    return out;
}

/// Y^k_s = (chi_2^T theta_hat_k - chi_2^T mu_k + (s-1)/s chi_1^T mu_k - b_k) s,
/// evaluated on the posterior held before the s-th pull of arm k. The posterior
/// has unit likelihood variance and every update uses the design vector chi_1.
/// Thompson draws sample the projected posteriors directly.
inline MartingaleDiagnostic martingale_diagnostic(const BanditInstance& inst, const GroundTruth& gt,
                                                  std::size_t replications, std::uint64_t seed, std::size_t threads = 1,
                                                  std::size_t min_samples = 50) {
    if (inst.N() != 2 || inst.K != 2) throw std::invalid_argument("martingale_diagnostic needs N = K = 2");
    const std::size_t T = inst.horizon;
    const Vector chi1 = inst.context(0);
    const Vector chi2 = inst.context(1);
    const std::vector<std::size_t> cps = martingale_checkpoints(T);
    Vector b(2);
    for (std::size_t k = 0; k < 2; ++k) b[static_cast<Eigen::Index>(k)] = inst.beta.dot(inst.contexts * gt.theta(k));

    // ys[r][k][s-1] = Y^k_s for s = 1 .. pulls+1
    std::vector<std::array<std::vector<double>, 2>> ys(replications);
    parallel_for(replications, threads, [&](std::size_t r) {
        GaussianPosterior post = init_gaussian(inst, 1.0);
        std::array<std::vector<double>, 2>& y = ys[r];
        auto record = [&](std::size_t k) {
            const double s = static_cast<double>(y[k].size() + 1);
            const Vector mu = inst.prior_mean(k);
            const double v = (chi2.dot(post.arms[k].theta_hat) - chi2.dot(mu) + (s - 1.0) / s * chi1.dot(mu) -
                              b[static_cast<Eigen::Index>(k)]) * s;
            y[k].push_back(v);
        };
        record(0);
        record(1);
        for (std::size_t t = 1; t <= T; ++t) {
            const StepStreams streams{seed, r, t};
            RngStream ctx_rng = streams.make(Purpose::Context);
            const std::size_t n_true = sample_context(inst, ctx_rng);
            RngStream ts_rng = streams.make(Purpose::ThompsonMc);
            const auto proj = project_all(post, chi1);
            double best = -std::numeric_limits<double>::infinity();
            std::size_t arm = 0;
            for (std::size_t k = 0; k < 2; ++k) {
                const double draw = proj[k].mean + std::sqrt(proj[k].variance) * ts_rng.normal();
                if (draw > best) {
                    best = draw;
                    arm = k;
                }
            }
            RngStream noise_rng = streams.make(Purpose::Noise);
            const double reward = sample_reward(gt, arm, inst.context(n_true), inst.noise, noise_rng);
            post.update_in_place(arm, chi1, reward);
            record(arm);
        }
    });

    MartingaleDiagnostic out;
    out.replications = replications;
    out.horizon = T;
    for (std::size_t k = 0; k < 2; ++k) {
        MartingaleSeries ser;
        ser.arm = k;
        ser.drift_target = -b[static_cast<Eigen::Index>(k)];
        double s1 = 0.0, s2 = 0.0;
        for (const auto& y : ys) {
            s1 += y[k][0];
            s2 += y[k][0] * y[k][0];
        }
        const double Rd = static_cast<double>(replications);
        ser.y1_mean = s1 / Rd;
        ser.y1_se = replications > 1 ? std::sqrt(std::max(0.0, (s2 - Rd * ser.y1_mean * ser.y1_mean) / (Rd - 1.0)) / Rd) : 0.0;
        for (std::size_t s : cps) {
            std::vector<double> yv, dv;
            for (const auto& y : ys) {
                if (y[k].size() < s + 1) continue;
                yv.push_back(y[k][s - 1]);
                dv.push_back(y[k][s] - y[k][s - 1]);
            }
            if (yv.size() < min_samples) continue;
            const double n = static_cast<double>(yv.size());
            double my = 0.0, md = 0.0;
            for (std::size_t i = 0; i < yv.size(); ++i) {
                my += yv[i];
                md += dv[i];
            }
            my /= n;
            md /= n;
            double syy = 0.0, sdd = 0.0, syd = 0.0;
            for (std::size_t i = 0; i < yv.size(); ++i) {
                syy += (yv[i] - my) * (yv[i] - my);
                sdd += (dv[i] - md) * (dv[i] - md);
                syd += (yv[i] - my) * (dv[i] - md);
            }
            ser.pull_index.push_back(s);
            ser.samples.push_back(yv.size());
            ser.y_mean.push_back(my);
            ser.increment_mean.push_back(md);
            ser.increment_se.push_back(std::sqrt(sdd / (n - 1.0) / n));
            if (syy > 0.0) {
                const double slope = syd / syy;
                const double resid = std::max(0.0, sdd - slope * syd);
                ser.increment_slope.push_back(slope);
                ser.increment_slope_se.push_back(std::sqrt(resid / (n - 2.0) / syy));
            } else {
                ser.increment_slope.push_back(0.0);
                ser.increment_slope_se.push_back(0.0);
            }
        }
        out.arms.push_back(std::move(ser));
    }
    return out;
}

}  // namespace truthts
