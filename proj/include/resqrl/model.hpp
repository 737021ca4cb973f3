#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resqrl/data.hpp"
#include "resqrl/rng.hpp"

namespace resqrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * Hyperparameters of the conjugate base measures.
 *
 * Outcome: sigma2 ~ ScaledInvChiSq(a_sigma, b_sigma), beta | sigma2 ~ N(a_beta, sigma2 c_beta B_beta).
 * Exposure and binary covariates: Beta(a_pi, b_pi).
 * Continuous covariates: tau2 ~ ScaledInvChiSq(a_tau, b_tau), mu | tau2 ~ N(a_mu, tau2 / b_mu).
 * Concentrations: Gamma(shape, rate).
 */
struct BaseMeasure {
    Vec a_beta;
    Mat B_beta;
    double c_beta = 1.0;
    double a_sigma = 3.0, b_sigma = 0.1;
    double a_pi = 1.0, b_pi = 1.0;
    double a_mu = 0.0, b_mu = 0.5;
    double a_tau = 2.0, b_tau = 1.0;
    double a_theta = 1.0, b_theta = 1.0;
    double a_omega = 1.0, b_omega = 1.0;
    int n_binary = 0;
    int n_continuous = 0;

    int n_covariates() const { return n_binary + n_continuous; }
    int design_dim() const { return 2 + n_covariates(); }
    void validate() const;
};

/// Precomputed factorizations of the outcome prior, shared read-only.
struct OutcomePrior {
    explicit OutcomePrior(const BaseMeasure& base);

    Mat scale;          ///< c_beta * B_beta
    Mat precision;      ///< its inverse
    Eigen::LLT<Mat> chol;  ///< of `scale`
    Vec precision_mean;  ///< precision * a_beta
    double mean_quad;    ///< a_beta' precision a_beta
};

struct OutcomeParams {
    Vec beta;
    double sigma2 = 1.0;
};

/// Exposure probability plus per-covariate kernel parameters.
struct SubclusterParams {
    double exposure_p = 0.5;
    Vec pi;    ///< binary covariates
    Vec mu;    ///< continuous covariates
    Vec tau2;
};

/// Precomputed log-density evaluator for an outcome cluster.
struct OutcomeKernel {
    OutcomeKernel() = default;
    explicit OutcomeKernel(const OutcomeParams& p);
    double log_density(const double* design, int dim, double y) const;

    Vec beta;
    double sigma = 1.0;
    double log_norm = 0.0;
    double half_prec = 0.5;
};

/// Precomputed log-density evaluator for exposure and covariates.
struct CovariateKernel {
    CovariateKernel() = default;
    CovariateKernel(const SubclusterParams& p);
    /// x holds binary covariates first, then continuous ones.
    double log_density(int z, const double* x) const;
    double log_density_covariates(const double* x) const;
    double log_density_one(int j, double v) const;

    double lz1 = 0.0, lz0 = 0.0;
    std::vector<double> l1, l0;  // binary
    std::vector<double> mu, half_prec, log_norm;  // continuous
    int nb = 0, nc = 0;
};

/// Sufficient statistics for exposure and covariates of one subcluster.
struct CovariateStats {
    int n = 0;
    int exposure_sum = 0;
    std::vector<int> binary_sum;
    std::vector<double> cont_sum;
    std::vector<double> cont_sumsq_dev;  ///< sum of squared deviations about the mean

    static CovariateStats collect(const std::vector<int>& members, const std::vector<int>& z, const RowMat& x, int nb, int nc);
};

OutcomeParams draw_outcome_prior(const BaseMeasure& base, const OutcomePrior& prior, Rng& rng);
SubclusterParams draw_subcluster_prior(const BaseMeasure& base, Rng& rng);

/**
 * Conjugate normal / scaled-inverse-chi-square update of one outcome cluster.
 * `xtx`, `xty`, `yty` are the sufficient statistics of its members.
 */
struct OutcomePosterior {
    Vec mean;
    Eigen::LLT<Mat> precision_chol;  ///< of (prior precision + X'X)
    double df;
    double scale;
};
OutcomePosterior outcome_posterior(const BaseMeasure& base, const OutcomePrior& prior, const Mat& xtx, const Vec& xty,
                                   double yty, int n);
OutcomeParams draw_outcome_posterior(const OutcomePosterior& post, Rng& rng);
SubclusterParams draw_subcluster_posterior(const BaseMeasure& base, const CovariateStats& s, Rng& rng);

/// Probability that a missing binary covariate is 1 given its kernel prob and both outcome log-likelihoods.
double binary_impute_probability(double pi, double loglik_one, double loglik_zero);

struct NormalMoments {
    double mean;
    double var;
};
/// Full conditional of a missing continuous covariate that enters the outcome linearly with slope beta_q.
NormalMoments continuous_impute_moments(double mu, double tau2, double beta_q, double sigma2, double partial_residual);

/// The automatic prior could not be fitted; the message tells the caller to supply a_beta and B_beta.
class AftFitError : public std::runtime_error {
public:
    explicit AftFitError(const std::string& what)
        : std::runtime_error(what + "; supply a_beta and B_beta manually") {}
};

/// Gaussian AFT fit of log time on (1, z, complete covariates) under right censoring.
struct AftFit {
    Vec beta;
    double log_sigma;
    Mat beta_cov;  ///< inverse observed information, beta block
    int iterations;
};
AftFit fit_aft_mle(const Dataset& data, int max_iter = 200);

/// Base measure with data-dependent outcome prior centered at the AFT fit, c_beta = N / 5.
BaseMeasure make_base_measure(const Dataset& data);

/// Design row (1, z, x) for a record whose covariates are all present.
Vec design_row(int z, const Vec& x);

}  // namespace resqrl
