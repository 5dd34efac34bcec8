#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "truthts/model.hpp"

namespace truthts {

enum class PosteriorErrc { SingularPrior, NonFiniteReward, DimensionTooLargeForGrid };

class PosteriorError : public std::runtime_error {
public:
    PosteriorError(PosteriorErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    PosteriorErrc code() const noexcept { return code_; }

private:
    PosteriorErrc code_;
};

/// Projected belief about x^T theta_k.
struct Projection {
    double mean = 0.0;
    double variance = 0.0;
};

// ---------------------------------------------------------------------------
// Conjugate Gaussian posterior
// ---------------------------------------------------------------------------

/// Per-arm Gaussian belief kept in precision form. theta_hat and V_hat are
/// re-solved from (precision, info_vec) after every update.
struct ArmBelief {
    Vector theta_hat;
    Matrix V_hat;
    Matrix precision;
    Vector info_vec;
};

struct GaussianPosterior {
    std::vector<ArmBelief> arms;
    /// Noise variance assumed by the likelihood; 1 reproduces the textbook update.
    double likelihood_variance = 1.0;

    std::size_t K() const { return arms.size(); }
    std::size_t d() const { return arms.empty() ? 0 : static_cast<std::size_t>(arms.front().theta_hat.size()); }

    /// d x K matrix of posterior means (column k is theta_hat_k).
    Matrix theta_matrix() const {
        Matrix out(d(), K());
        for (std::size_t k = 0; k < K(); ++k) out.col(static_cast<Eigen::Index>(k)) = arms[k].theta_hat;
        return out;
    }

    void update_in_place(std::size_t k, const Vector& x, double r) {
        if (!std::isfinite(r)) throw PosteriorError(PosteriorErrc::NonFiniteReward, "reward is not finite");
        ArmBelief& a = arms.at(k);
        const double w = 1.0 / likelihood_variance;
        a.precision.noalias() += w * x * x.transpose();
        a.info_vec.noalias() += (w * r) * x;
        resolve(a);
    }

    static void resolve(ArmBelief& a) {
        Eigen::LLT<Matrix> llt(a.precision);
        if (llt.info() != Eigen::Success)
            throw PosteriorError(PosteriorErrc::SingularPrior, "posterior precision lost positive definiteness");
        a.V_hat = llt.solve(Matrix::Identity(a.precision.rows(), a.precision.cols()));
        a.V_hat = 0.5 * (a.V_hat + a.V_hat.transpose()).eval();
        a.theta_hat = llt.solve(a.info_vec);
    }
};

inline GaussianPosterior init_gaussian(const BanditInstance& inst, double likelihood_variance = 1.0) {
    GaussianPosterior post;
    post.likelihood_variance = likelihood_variance;
    post.arms.reserve(inst.K);
    for (std::size_t k = 0; k < inst.K; ++k) {
        const Matrix& V = inst.prior_covs.at(k);
        Eigen::LLT<Matrix> llt(V);
        if (llt.info() != Eigen::Success)
            throw PosteriorError(PosteriorErrc::SingularPrior, "prior covariance " + std::to_string(k) + " is singular");
        ArmBelief a;
        a.theta_hat = inst.prior_mean(k);
        a.V_hat = V;
        a.precision = llt.solve(Matrix::Identity(V.rows(), V.cols()));
        a.precision = 0.5 * (a.precision + a.precision.transpose()).eval();
        a.info_vec = llt.solve(a.theta_hat);
        post.arms.push_back(std::move(a));
    }
    return post;
}

/// Copy-on-update form; only arm k differs from the input.
inline GaussianPosterior update_gaussian(GaussianPosterior post, std::size_t k, const Vector& x, double r) {
    post.update_in_place(k, x, r);
    return post;
}

struct Observation {
    Vector x;
    double r = 0.0;
};

/// Closed-form batch posterior: V_hat = (V^-1 + sum x x^T / s2)^-1,
/// theta_hat = V_hat (V^-1 mu + sum x r / s2).
inline std::pair<Vector, Matrix> batch_gaussian(const Vector& mu, const Matrix& V,
                                                const std::vector<Observation>& obs,
                                                double likelihood_variance = 1.0) {
    if (obs.empty()) return {mu, V};
    const Matrix V_inv = V.inverse();
    Matrix precision = V_inv;
    Vector info = V_inv * mu;
    for (const auto& o : obs) {
        precision += o.x * o.x.transpose() / likelihood_variance;
        info += o.x * (o.r / likelihood_variance);
    }
    Matrix V_hat = precision.inverse();
    Vector theta = V_hat * info;
    return {std::move(theta), std::move(V_hat)};
}

inline std::pair<Vector, Matrix> batch_gaussian(const BanditInstance& inst, std::size_t k,
                                                const std::vector<Observation>& obs,
                                                double likelihood_variance = 1.0) {
    return batch_gaussian(inst.prior_mean(k), inst.prior_covs.at(k), obs, likelihood_variance);
}

/// chi^T V_hat chi after t-1 unit-variance observations at chi, starting from V.
inline double repeated_context_variance(const Matrix& V, const Vector& chi, long long t) {
    const double q = chi.dot(V * chi);
    return q / (1.0 + static_cast<double>(t - 1) * q);
}

inline Projection marginal_projection(const GaussianPosterior& post, std::size_t k, const Vector& x) {
    const ArmBelief& a = post.arms.at(k);
    return {x.dot(a.theta_hat), x.dot(a.V_hat * x)};
}

// ---------------------------------------------------------------------------
// Grid posterior (d <= 2), used for non-conjugate noise
// ---------------------------------------------------------------------------

struct GridConfig {
    std::size_t points_per_axis = 81;
    double width_sd = 5.0;
};

struct GridAxis {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 1;

    double step() const { return count > 1 ? (upper - lower) / static_cast<double>(count - 1) : 0.0; }
    double node(std::size_t i) const { return count > 1 ? lower + step() * static_cast<double>(i) : lower; }
};

struct GridArm {
    std::vector<GridAxis> axes;
    Matrix nodes;      // d x M node coordinates, first axis varies fastest
    Vector log_weights; // unnormalised log posterior density at each node
};

struct GridPosterior {
    std::vector<GridArm> arms;

    std::size_t K() const { return arms.size(); }
    std::size_t d() const { return arms.empty() ? 0 : arms.front().axes.size(); }

    Vector normalized_weights(std::size_t k) const {
        const Vector& lw = arms.at(k).log_weights;
        Vector w = (lw.array() - lw.maxCoeff()).exp();
        return w / w.sum();
    }

    Vector mean(std::size_t k) const { return arms.at(k).nodes * normalized_weights(k); }

    Matrix theta_matrix() const {
        Matrix out(d(), K());
        for (std::size_t k = 0; k < K(); ++k) out.col(static_cast<Eigen::Index>(k)) = mean(k);
        return out;
    }

    /// Width of one grid cell projected onto x.
    double projected_cell_width(std::size_t k, const Vector& x) const {
        double w = 0.0;
        const auto& axes = arms.at(k).axes;
        for (std::size_t i = 0; i < axes.size(); ++i) w += std::abs(x[static_cast<Eigen::Index>(i)]) * axes[i].step();
        return w;
    }
};

inline GridArm make_grid_arm(std::vector<GridAxis> axes) {
    GridArm arm;
    std::size_t M = 1;
    for (const auto& a : axes) M *= a.count;
    arm.nodes.resize(static_cast<Eigen::Index>(axes.size()), static_cast<Eigen::Index>(M));
    for (std::size_t m = 0; m < M; ++m) {
        std::size_t rem = m;
        for (std::size_t i = 0; i < axes.size(); ++i) {
            arm.nodes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = axes[i].node(rem % axes[i].count);
            rem /= axes[i].count;
        }
    }
    arm.log_weights = Vector::Zero(static_cast<Eigen::Index>(M));
    arm.axes = std::move(axes);
    return arm;
}

/// Grid over mu_k +- width_sd * sqrt(max prior variance) on every axis,
/// initialised with the Gaussian prior log density.
inline GridPosterior init_grid(const BanditInstance& inst, const GridConfig& cfg = {}) {
    if (inst.d > 2)
        throw PosteriorError(PosteriorErrc::DimensionTooLargeForGrid,
                             "grid posterior supports d <= 2, got d = " + std::to_string(inst.d));
    GridPosterior gp;
    for (std::size_t k = 0; k < inst.K; ++k) {
        const Matrix& V = inst.prior_covs.at(k);
        const Vector mu = inst.prior_mean(k);
        const double half = cfg.width_sd * std::sqrt(V.diagonal().maxCoeff());
        std::vector<GridAxis> axes;
        for (std::size_t i = 0; i < inst.d; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            axes.push_back({mu[ii] - half, mu[ii] + half, cfg.points_per_axis});
        }
        GridArm arm = make_grid_arm(std::move(axes));
        const Matrix V_inv = V.inverse();
        const Matrix centered = arm.nodes.colwise() - mu;
        arm.log_weights = -0.5 * (centered.array() * (V_inv * centered).array()).colwise().sum().transpose();
        gp.arms.push_back(std::move(arm));
    }
    return gp;
}

inline double noise_log_likelihood(const NoiseSpec& noise, double residual) {
    const double s = noise.scale();
    if (noise.kind == NoiseKind::Laplace) return -std::abs(residual) / s - std::log(2.0 * s);
    return -0.5 * residual * residual / (s * s) - 0.5 * std::log(2.0 * std::numbers::pi * s * s);
}

inline void update_grid_in_place(GridPosterior& gp, std::size_t k, const Vector& x, double r, const NoiseSpec& noise) {
    if (!std::isfinite(r)) throw PosteriorError(PosteriorErrc::NonFiniteReward, "reward is not finite");
    GridArm& arm = gp.arms.at(k);
    const Vector proj = arm.nodes.transpose() * x;
    for (Eigen::Index m = 0; m < proj.size(); ++m) arm.log_weights[m] += noise_log_likelihood(noise, r - proj[m]);
    // keep the maximum at zero so repeated updates never drift towards -inf
    arm.log_weights.array() -= arm.log_weights.maxCoeff();
}

inline GridPosterior update_grid(GridPosterior gp, std::size_t k, const Vector& x, double r, const NoiseSpec& noise) {
    update_grid_in_place(gp, k, x, r, noise);
    return gp;
}

inline Projection marginal_projection(const GridPosterior& gp, std::size_t k, const Vector& x) {
    const Vector w = gp.normalized_weights(k);
    const Vector proj = gp.arms.at(k).nodes.transpose() * x;
    const double mean = w.dot(proj);
    const double var = w.dot((proj.array() - mean).square().matrix());
    return {mean, var};
}

}  // namespace truthts
