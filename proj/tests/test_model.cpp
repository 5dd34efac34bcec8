#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "truthts/truthts.hpp"

using namespace truthts;

namespace {

BanditInstance two_arm_instance() { return appendix_a_instance(10); }

bool has_issue(const BanditInstance& inst, IssueKind kind) {
    for (const auto& i : validate_instance(inst))
        if (i.kind == kind) return true;
    return false;
}

}  // namespace

TEST(Validation, AcceptsWellFormedInstance) {
    EXPECT_TRUE(validate_instance(two_arm_instance()).empty());
    EXPECT_NO_THROW(require_valid(two_arm_instance()));
}

TEST(Validation, RejectsBetaNotOnSimplex) {
    auto inst = two_arm_instance();
    inst.beta << 0.5, 0.6;
    EXPECT_TRUE(has_issue(inst, IssueKind::BetaNotSimplex));
    inst.beta << 1.2, -0.2;
    EXPECT_TRUE(has_issue(inst, IssueKind::BetaNotSimplex));
    EXPECT_THROW(require_valid(inst), InvalidInstance);
}

TEST(Validation, RejectsCovarianceWithNegativeEigenvalue) {
    auto inst = two_arm_instance();
    inst.prior_covs[1] << 1.0, 0.0, 0.0, -1.0;
    EXPECT_TRUE(has_issue(inst, IssueKind::CovNotSPD));
}

TEST(Validation, RejectsDuplicateContexts) {
    auto inst = two_arm_instance();
    inst.contexts.row(1) = inst.contexts.row(0);
    EXPECT_TRUE(has_issue(inst, IssueKind::DuplicateContext));
}

TEST(Validation, RejectsMismatchedDimensions) {
    auto inst = two_arm_instance();
    inst.prior_means = Matrix::Zero(3, 2);
    EXPECT_TRUE(has_issue(inst, IssueKind::BadDimensions));
    auto inst2 = two_arm_instance();
    inst2.beta = Vector::Constant(3, 1.0 / 3.0);
    EXPECT_TRUE(has_issue(inst2, IssueKind::BadDimensions));
}

TEST(Validation, InvalidInstanceListsEveryIssue) {
    auto inst = two_arm_instance();
    inst.beta << 0.5, 0.6;
    inst.contexts.row(1) = inst.contexts.row(0);
    try {
        require_valid(inst);
        FAIL() << "expected InvalidInstance";
    } catch (const InvalidInstance& e) {
        EXPECT_GE(e.issues().size(), 2u);
    }
}

TEST(GroundTruth, DegeneratePriorReturnsMean) {
    auto inst = two_arm_instance();
    for (auto& V : inst.prior_covs) V = 1e-30 * Matrix::Identity(2, 2);
    RngStream rng(7, {0, 0, Purpose::GroundTruth});
    const auto gt = sample_ground_truth(inst, rng);
    EXPECT_LT((gt.thetas - inst.prior_means).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GroundTruth, SameKeySameDraw) {
    const auto inst = two_arm_instance();
    RngStream a(11, {3, 0, Purpose::GroundTruth});
    RngStream b(11, {3, 0, Purpose::GroundTruth});
    EXPECT_EQ(sample_ground_truth(inst, a).thetas, sample_ground_truth(inst, b).thetas);
}

TEST(GroundTruth, EmpiricalMomentsMatchPrior) {
    auto inst = two_arm_instance();
    inst.prior_covs[0] << 2.0, 0.5, 0.5, 1.0;
    const int draws = 100000;
    Vector sum = Vector::Zero(2);
    Matrix sq = Matrix::Zero(2, 2);
    for (int r = 0; r < draws; ++r) {
        RngStream rng(5, {static_cast<std::uint64_t>(r), 0, Purpose::GroundTruth});
        const Vector th = sample_ground_truth(inst, rng).theta(0);
        sum += th;
        sq += th * th.transpose();
    }
    const Vector mean = sum / draws;
    const Matrix cov = sq / draws - mean * mean.transpose();
    for (int i = 0; i < 2; ++i)
        EXPECT_NEAR(mean[i], inst.prior_means(0, i), 4.0 * std::sqrt(inst.prior_covs[0](i, i) / draws));
    EXPECT_LT((cov - inst.prior_covs[0]).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Contexts, SingleContextAlwaysReturned) {
    auto inst = two_arm_instance();
    inst.contexts = inst.contexts.topRows(1).eval();
    inst.beta = Vector::Ones(1);
    RngStream rng(1, {0, 0, Purpose::Context});
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_context(inst, rng), 0u);
}

TEST(Contexts, FrequenciesMatchArrivalProbabilities) {
    const auto inst = two_arm_instance();
    const int n = 100000;
    int first = 0;
    for (int t = 0; t < n; ++t) {
        RngStream rng(2, {0, static_cast<std::uint64_t>(t), Purpose::Context});
        first += sample_context(inst, rng) == 0 ? 1 : 0;
    }
    const double p = 5.0 / 6.0;
    EXPECT_NEAR(static_cast<double>(first) / n, p, 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Contexts, SampleIndexSkipsZeroMass) {
    Vector p(3);
    p << 0.0, 1.0, 0.0;
    EXPECT_EQ(sample_index(p, 0.0), 1u);
    EXPECT_EQ(sample_index(p, 0.999999), 1u);
}

TEST(Rewards, ZeroNoiseGivesMeanReward) {
    const auto inst = two_arm_instance();
    RngStream g(3, {0, 0, Purpose::GroundTruth});
    const auto gt = sample_ground_truth(inst, g);
    RngStream rng(3, {0, 1, Purpose::Noise});
    const Vector x = inst.context(1);
    EXPECT_DOUBLE_EQ(sample_reward(gt, 1, x, NoiseSpec::gaussian(0.0), rng), gt.theta(1).dot(x));
}

TEST(Rewards, RewardIsMeanPlusNoiseDraw) {
    const auto inst = two_arm_instance();
    RngStream g(3, {0, 0, Purpose::GroundTruth});
    const auto gt = sample_ground_truth(inst, g);
    const Vector x = inst.context(0);
    for (int t = 0; t < 20; ++t) {
        RngStream a(3, {0, static_cast<std::uint64_t>(t), Purpose::Noise});
        RngStream b(3, {0, static_cast<std::uint64_t>(t), Purpose::Noise});
        const double r = sample_reward(gt, 0, x, inst.noise, a);
        EXPECT_NEAR(r - draw_noise(inst.noise, b), gt.mean_reward(0, x), 1e-14);
    }
}

TEST(Rewards, NoiseVarianceMatchesSpec) {
    for (const auto& noise : {NoiseSpec::gaussian(1.0), NoiseSpec::laplace(1.0), NoiseSpec::laplace(0.25)}) {
        RngStream rng(9, {0, 0, Purpose::Noise});
        const int n = 200000;
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double e = draw_noise(noise, rng);
            s += e;
            s2 += e * e;
        }
        const double mean = s / n;
        const double var = s2 / n - mean * mean;
        EXPECT_NEAR(mean, 0.0, 4.0 * std::sqrt(noise.variance / n));
        EXPECT_NEAR(var / noise.variance, 1.0, 0.03) << to_string(noise.kind);
    }
}

TEST(Rng, StreamsAreKeyedAndReproducible) {
    RngStream a(1, {0, 5, Purpose::Context});
    RngStream b(1, {0, 5, Purpose::Context});
    RngStream c(1, {0, 5, Purpose::Noise});
    RngStream d(2, {0, 5, Purpose::Context});
    std::set<std::uint64_t> seen;
    const auto a0 = a(), c0 = c(), d0 = d();
    EXPECT_EQ(a0, b());
    EXPECT_NE(a0, c0);
    EXPECT_NE(a0, d0);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(GroundTruthQueries, BestArmTakesLowestIndexOnTies) {
    GroundTruth gt{Matrix::Zero(3, 2)};
    gt.thetas << 1.0, 0.0, 1.0, 0.0, 0.5, 0.0;
    Vector x(2);
    x << 1.0, 0.0;
    EXPECT_EQ(gt.best_arm(x), 0u);
}
