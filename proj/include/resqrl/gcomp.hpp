#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "resqrl/dists.hpp"
#include "resqrl/posterior.hpp"

namespace resqrl {

/// Prior predictive densities of the base measures (parameters integrated out).
class PriorPredictive {
public:
    explicit PriorPredictive(const BaseMeasure& base);

    double log_exposure(int z) const;
    double log_covariate(int j, double v) const;
    /// Exposure plus every covariate.
    double log_joint(int z, const double* x) const;
    /// Outcome predictive for a design row: Student t on log time.
    LocationScaleT outcome(const double* design) const;

    const BaseMeasure& base() const { return base_; }

private:
    BaseMeasure base_;
    Mat scale_;  // c_beta * B_beta
    double lz1_, lz0_, lb1_, lb0_;
    LocationScaleT cov_t_;
};

/**
 * Conditional survival of log time given (z, x) under one draw, as a
 * mixture over occupied outcome clusters plus a prior-predictive term.
 */
struct ConditionalMixture {
    std::vector<double> weight;     ///< per cluster, normalized together with prior_weight
    std::vector<double> mean;
    std::vector<double> inv_sigma;
    double prior_weight = 0.0;
    LocationScaleT prior_term;

    double survival(double log_time) const;
};

ConditionalMixture conditional_mixture(const PosteriorDraw& draw, const PriorPredictive& pp, int z, const double* x);
double conditional_survival(const PosteriorDraw& draw, double log_time, int z, const Vec& x);
/// Single-layer formula written out directly; agrees with conditional_survival on single-layer draws.
double dpmm_conditional_survival(const PosteriorDraw& draw, double log_time, int z, const Vec& x);

/// Covariate values held fixed when sampling a subgroup cohort. Indices refer to the schema order.
struct Subgroup {
    std::string label = "all";
    std::vector<std::pair<int, double>> fixed;
};

struct SyntheticCohort {
    RowMat x;                      ///< M rows, binary covariates first
    std::vector<int> cluster;      ///< -1 marks a newly opened cluster
    std::vector<int> subcluster;   ///< -1 marks a newly opened subcluster
};

SyntheticCohort draw_synthetic_cohort(const PosteriorDraw& draw, int m, Rng& rng);
SyntheticCohort draw_synthetic_cohort_conditional(const PosteriorDraw& draw, int m, const Subgroup& sub, Rng& rng);

/// Cohort-averaged survival of one arm with every row's mixture precomputed.
class MarginalSurvival {
public:
    MarginalSurvival(const PosteriorDraw& draw, const PriorPredictive& pp, const SyntheticCohort& cohort, int z);

    /// Sum over cohort rows of S(log_time | z, x_m).
    double sum_at(double log_time) const;
    int rows() const { return rows_; }

private:
    int rows_ = 0;
    int k_ = 0;
    std::vector<double> w_, mean_;  // rows_ x k_
    std::vector<double> inv_sigma_;
    std::vector<double> prior_w_, prior_loc_, prior_inv_scale_;
    double prior_df_ = 1.0;
};

/// Cohort ratio S(log((y+nu) e^-psi)) / S(log(nu e^-psi)); the denominator is M when nu = 0.
double marginal_residual_survival(const MarginalSurvival& ms, double y, double nu, double psi);

struct RootSolution {
    double y = 0.0;
    double residual = 0.0;  ///< |S_res(y) - (1 - rho)|
    int expansions = 0;
    int refinements = 0;
};

/**
 * Solve S_res(y) = 1 - rho. The bracket [0, h] is found by doubling h from 1
 * (capped at 2^60), then shrunk by Illinois false position with a bisection
 * step whenever the bracket fails to halve. Stops at |residual| <= 1e-13 or
 * 1e-10 relative bracket width.
 */
RootSolution qrl_root_solve(const MarginalSurvival& ms, double nu, double rho, double psi);

struct EstimandCell {
    double nu = 0.0;
    double rho = 0.5;
    double psi0 = 0.0;
    double psi1 = 0.0;
};

enum class Exec { Serial, Parallel };

struct OsqcRequest {
    std::vector<EstimandCell> cells;
    std::vector<Subgroup> subgroups{Subgroup{}};
    std::vector<double> survival_times;  ///< optional grid for per-arm marginal survival curves
    int cohort_size = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;

    void validate(const CovariateSchema* schema = nullptr) const;
};

struct PosteriorSummary {
    double mean = 0.0;
    double sd = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// Mean, sd and equal-tailed interval (linear interpolation between order statistics).
PosteriorSummary summarize_posterior(std::span<const double> values, double level);

struct OsqcCell {
    int subgroup = 0;
    EstimandCell cell;
    std::vector<double> y1, y0, delta;  ///< per draw
    PosteriorSummary s1, s0, sdelta;
    double max_residual = 0.0;
};

struct SurvivalCurvePoint {
    int subgroup = 0;
    int arm = 0;
    double time = 0.0;
    PosteriorSummary summary;
};

struct OsqcResult {
    std::vector<OsqcCell> cells;
    std::vector<SurvivalCurvePoint> survival;
};

/**
 * Posterior of the quantile contrast for every (subgroup, cell). One cohort
 * per draw and subgroup is shared by both arms and every cell; its stream
 * depends only on (seed, subgroup, draw index), so results do not depend on
 * which cells are requested or on thread scheduling.
 */
OsqcResult osqc(std::span<const PosteriorDraw> draws, const OsqcRequest& req, Exec exec = Exec::Parallel);

}  // namespace resqrl
