#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "truthts/rng.hpp"

namespace truthts {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class NoiseKind { Gaussian, Laplace };

inline const char* to_string(NoiseKind k) { return k == NoiseKind::Gaussian ? "Gaussian" : "Laplace"; }

/// Reward noise law, parameterised by its variance so that Gaussian and
/// Laplace runs are variance-matched.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::Gaussian;
    double variance = 1.0;

    static NoiseSpec gaussian(double variance = 1.0) { return {NoiseKind::Gaussian, variance}; }
    static NoiseSpec laplace(double variance = 1.0) { return {NoiseKind::Laplace, variance}; }

    /// Standard deviation for Gaussian, b for Laplace (variance = 2 b^2).
    double scale() const {
        return kind == NoiseKind::Gaussian ? std::sqrt(variance) : std::sqrt(variance / 2.0);
    }
};

struct BanditInstance {
    std::size_t K = 0;
    std::size_t d = 0;
    Matrix contexts;                // N x d, row n is context n
    Vector beta;                    // arrival probabilities
    Matrix prior_means;             // K x d, row k is mu_k
    std::vector<Matrix> prior_covs; // K matrices, d x d
    NoiseSpec noise;
    std::size_t horizon = 1;
    bool beta_known = true;

    std::size_t N() const { return static_cast<std::size_t>(contexts.rows()); }
    Vector context(std::size_t n) const { return contexts.row(static_cast<Eigen::Index>(n)).transpose(); }
    Vector prior_mean(std::size_t k) const { return prior_means.row(static_cast<Eigen::Index>(k)).transpose(); }
};

/// One realisation of the arm parameters; row k is theta_k.
struct GroundTruth {
    Matrix thetas;

    Vector theta(std::size_t k) const { return thetas.row(static_cast<Eigen::Index>(k)).transpose(); }
    double mean_reward(std::size_t k, const Vector& x) const {
        return thetas.row(static_cast<Eigen::Index>(k)).dot(x);
    }
    std::size_t best_arm(const Vector& x) const {
        Eigen::Index best = 0;
        (thetas * x).maxCoeff(&best);
        return static_cast<std::size_t>(best);
    }
};

enum class IssueKind { BetaNotSimplex, CovNotSPD, DuplicateContext, BadDimensions, BadParameter };

inline const char* to_string(IssueKind k) {
    switch (k) {
        case IssueKind::BetaNotSimplex: return "BetaNotSimplex";
        case IssueKind::CovNotSPD: return "CovNotSPD";
        case IssueKind::DuplicateContext: return "DuplicateContext";
        case IssueKind::BadDimensions: return "BadDimensions";
        case IssueKind::BadParameter: return "BadParameter";
    }
    return "?";
}

struct ValidationIssue {
    IssueKind kind;
    std::string message;
};

class InvalidInstance : public std::runtime_error {
public:
    explicit InvalidInstance(std::vector<ValidationIssue> issues)
        : std::runtime_error(describe(issues)), issues_(std::move(issues)) {}

    const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }

    static std::string describe(const std::vector<ValidationIssue>& issues) {
        std::ostringstream os;
        os << "invalid bandit instance:";
        for (const auto& i : issues) os << " [" << to_string(i.kind) << "] " << i.message << ';';
        return os.str();
    }

private:
    std::vector<ValidationIssue> issues_;
};

/// Returns every violated invariant; an empty list means the instance is valid.
inline std::vector<ValidationIssue> validate_instance(const BanditInstance& inst) {
    std::vector<ValidationIssue> out;
    auto add = [&](IssueKind k, std::string msg) { out.push_back({k, std::move(msg)}); };

    const auto N = inst.contexts.rows();
    const auto d = static_cast<Eigen::Index>(inst.d);
    const auto K = static_cast<Eigen::Index>(inst.K);

    bool dims_ok = true;
    if (inst.K < 2) { add(IssueKind::BadDimensions, "K must be at least 2"); dims_ok = false; }
    if (inst.d < 1) { add(IssueKind::BadDimensions, "d must be at least 1"); dims_ok = false; }
    if (N < 1) { add(IssueKind::BadDimensions, "need at least one context"); dims_ok = false; }
    if (inst.contexts.cols() != d) { add(IssueKind::BadDimensions, "contexts must have d columns"); dims_ok = false; }
    if (inst.beta.size() != N) { add(IssueKind::BadDimensions, "beta must have one entry per context"); dims_ok = false; }
    if (inst.prior_means.rows() != K || inst.prior_means.cols() != d) {
        add(IssueKind::BadDimensions, "prior_means must be K x d");
        dims_ok = false;
    }
    if (inst.prior_covs.size() != inst.K) {
        add(IssueKind::BadDimensions, "need one prior covariance per arm");
        dims_ok = false;
    }
    for (std::size_t k = 0; k < inst.prior_covs.size(); ++k) {
        if (inst.prior_covs[k].rows() != d || inst.prior_covs[k].cols() != d) {
            add(IssueKind::BadDimensions, "prior covariance " + std::to_string(k) + " must be d x d");
            dims_ok = false;
        }
    }
    if (!(inst.noise.variance > 0.0) || !std::isfinite(inst.noise.variance))
        add(IssueKind::BadParameter, "noise variance must be positive and finite");
    if (inst.horizon < 1) add(IssueKind::BadParameter, "horizon must be at least 1");
    if (!inst.contexts.allFinite() || !inst.prior_means.allFinite())
        add(IssueKind::BadParameter, "contexts and prior means must be finite");
    if (!dims_ok) return out;

    if ((inst.beta.array() <= 0.0).any() || std::abs(inst.beta.sum() - 1.0) > 1e-12)
        add(IssueKind::BetaNotSimplex, "beta must be positive and sum to 1 within 1e-12");

    for (std::size_t k = 0; k < inst.K; ++k) {
        const Matrix& V = inst.prior_covs[k];
        if ((V - V.transpose()).cwiseAbs().maxCoeff() >= 1e-12) {
            add(IssueKind::CovNotSPD, "prior covariance " + std::to_string(k) + " is not symmetric");
            continue;
        }
        Eigen::SelfAdjointEigenSolver<Matrix> eig(V, Eigen::EigenvaluesOnly);
        if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0)
            add(IssueKind::CovNotSPD, "prior covariance " + std::to_string(k) + " is not positive definite");
    }

    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = i + 1; j < N; ++j)
            if ((inst.contexts.row(i) - inst.contexts.row(j)).cwiseAbs().maxCoeff() <= 1e-12)
                add(IssueKind::DuplicateContext,
                    "contexts " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
    return out;
}

inline const BanditInstance& require_valid(const BanditInstance& inst) {
    auto issues = validate_instance(inst);
    if (!issues.empty()) throw InvalidInstance(std::move(issues));
    return inst;
}

/// theta_k ~ N(mu_k, V_k) independently per arm.
inline GroundTruth sample_ground_truth(const BanditInstance& inst, RngStream& rng) {
    GroundTruth gt{Matrix(inst.K, inst.d)};
    Vector z(inst.d);
    for (std::size_t k = 0; k < inst.K; ++k) {
        Eigen::LLT<Matrix> llt(inst.prior_covs[k]);
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
        const Vector theta = inst.prior_mean(k) + llt.matrixL() * z;
        gt.thetas.row(static_cast<Eigen::Index>(k)) = theta.transpose();
    }
    return gt;
}

/// Draws an index from a discrete distribution by inversion. Zero-weight
/// entries are never returned.
inline std::size_t sample_index(const Eigen::Ref<const Vector>& probs, double u) {
    const double total = probs.sum();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        last_positive = static_cast<std::size_t>(i);
        acc += probs[i];
        if (u * total < acc) return last_positive;
    }
    return last_positive;
}

inline std::size_t sample_context(const BanditInstance& inst, RngStream& rng) {
    return sample_index(inst.beta, rng.uniform());
}

inline double draw_noise(const NoiseSpec& noise, RngStream& rng) {
    return noise.kind == NoiseKind::Gaussian ? noise.scale() * rng.normal() : rng.laplace(noise.scale());
}

/// r = x^T theta_k + eta. Callers pass the agent's true context.
inline double sample_reward(const GroundTruth& gt, std::size_t arm, const Vector& x, const NoiseSpec& noise,
                            RngStream& rng) {
    return gt.mean_reward(arm, x) + draw_noise(noise, rng);
}

}  // namespace truthts
