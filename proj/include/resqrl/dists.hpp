#pragma once

#include <span>
#include <vector>

#include "resqrl/rng.hpp"

namespace resqrl {

// ---- standard normal ------------------------------------------------------

double normal_cdf(double z);
/// Upper tail 1 - Phi(z), accurate far into the right tail.
double normal_sf(double z);
double normal_logpdf(double z);
double normal_log_sf(double z);
double normal_quantile(double p);

// ---- samplers --------------------------------------------------------------

/**
 * Draw from N(mean, var) restricted to (lower, inf).
 *
 * Uses inverse-CDF sampling unless the standardized bound exceeds 4, where the
 * exponential-proposal rejection sampler takes over. Result is always > lower.
 */
double sample_truncated_normal(double mean, double var, double lower, Rng& rng);

/// Gamma with the given shape and rate.
double sample_gamma(double shape, double rate, Rng& rng);
double sample_beta(double a, double b, Rng& rng);
std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng);
bool sample_bernoulli(double p, Rng& rng);

/// Index drawn proportionally to exp(logw); entries equal to -inf are never chosen.
int sample_log_weights(std::span<const double> logw, Rng& rng);

/// Scaled inverse chi-square: df * scale / chi2_df.
struct ScaledInvChiSq {
    double df;
    double scale;

    void validate() const;
    double sample(Rng& rng) const;
    double mean() const;
};

/// Location-scale Student t. `scale` is the standard deviation-like scale, not its square.
struct LocationScaleT {
    double location = 0.0;
    double scale = 1.0;
    double df = 1.0;

    void validate() const;
    double logpdf(double x) const;
    double cdf(double x) const;
    double survival(double x) const;
    double sample(Rng& rng) const;
};

/// Survival of a standard t with df degrees of freedom.
double student_t_sf(double t, double df);

}  // namespace resqrl
