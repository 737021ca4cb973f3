#include "resqrl/dists.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>

namespace resqrl {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double normal_sf(double z) { return 0.5 * std::erfc(z * kInvSqrt2); }

double normal_logpdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

double normal_log_sf(double z) {
    if (z < 35.0) return std::log(normal_sf(z));
    // Mills-ratio asymptotic series, erfc underflows past here
    const double z2 = z * z;
    return normal_logpdf(z) - std::log(z) + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
}

double normal_quantile(double p) {
    require(p > 0.0 && p < 1.0, "normal_quantile: p must lie in (0, 1)");
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double sample_truncated_normal(double mean, double var, double lower, Rng& rng) {
    require(var > 0.0 && std::isfinite(var), "truncated normal: variance must be positive and finite");
    require(std::isfinite(mean), "truncated normal: mean must be finite");
    const double sd = std::sqrt(var);
    if (lower == -std::numeric_limits<double>::infinity()) return mean + sd * rng.normal();
    require(!std::isnan(lower), "truncated normal: lower bound is NaN");

    const double a = (lower - mean) / sd;
    double x;
    if (a > 4.0) {
        const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
        for (;;) {
            x = a + rng.exponential() / rate;
            const double d = x - rate;
            if (rng.uniform() <= std::exp(-0.5 * d * d)) break;
        }
    } else {
        const double tail = normal_sf(a);
        x = -normal_quantile(rng.uniform() * tail);
        if (x < a) x = a;
    }
    double out = mean + sd * x;
    if (!(out > lower)) out = std::nextafter(lower, std::numeric_limits<double>::infinity());
    return out;
}

double sample_gamma(double shape, double rate, Rng& rng) {
    require(shape > 0.0 && std::isfinite(shape), "gamma: shape must be positive");
    require(rate > 0.0 && std::isfinite(rate), "gamma: rate must be positive");
    if (shape == 1.0) return rng.exponential() / rate;
    if (shape < 1.0) {
        const double g = sample_gamma(shape + 1.0, 1.0, rng);
        return g * std::pow(rng.uniform(), 1.0 / shape) / rate;
    }
    // Marsaglia & Tsang
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
}

double sample_beta(double a, double b, Rng& rng) {
    require(a > 0.0 && b > 0.0, "beta: shapes must be positive");
    if (a == 1.0 && b == 1.0) return rng.uniform();
    const double x = sample_gamma(a, 1.0, rng);
    const double y = sample_gamma(b, 1.0, rng);
    return x / (x + y);
}

std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng) {
    require(!alpha.empty(), "dirichlet: empty parameter vector");
    std::vector<double> out(alpha.size());
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        out[i] = sample_gamma(alpha[i], 1.0, rng);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

bool sample_bernoulli(double p, Rng& rng) {
    require(p >= 0.0 && p <= 1.0, "bernoulli: probability outside [0, 1]");
    return rng.uniform() < p;
}

int sample_log_weights(std::span<const double> logw, Rng& rng) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logw) {
        if (std::isnan(v)) throw std::domain_error("log weight is NaN");
        mx = std::max(mx, v);
    }
    if (!std::isfinite(mx)) throw std::domain_error("all candidate weights are zero");
    double total = 0.0;
    for (double v : logw) total += std::exp(v - mx);
    double u = rng.uniform() * total;
    int last = -1;
    for (std::size_t i = 0; i < logw.size(); ++i) {
        const double w = std::exp(logw[i] - mx);
        if (w <= 0.0) continue;
        last = static_cast<int>(i);
        if (u < w) return last;
        u -= w;
    }
    return last;
}

void ScaledInvChiSq::validate() const {
    require(df > 0.0 && std::isfinite(df), "scaled inverse chi-square: df must be positive");
    require(scale > 0.0 && std::isfinite(scale), "scaled inverse chi-square: scale must be positive");
}

double ScaledInvChiSq::sample(Rng& rng) const {
    validate();
    const double chi2 = 2.0 * sample_gamma(0.5 * df, 1.0, rng);
    return df * scale / chi2;
}

double ScaledInvChiSq::mean() const {
    if (df <= 2.0) return std::numeric_limits<double>::infinity();
    return df * scale / (df - 2.0);
}

double student_t_sf(double t, double df) {
    if (std::isnan(t)) return t;
    if (t < 0.0) return 1.0 - student_t_sf(-t, df);
    if (std::isinf(t)) return 0.0;

    if (df <= 60.0 && df == std::floor(df)) {
        const int nu = static_cast<int>(df);
        const double theta = std::atan(t / std::sqrt(df));
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        const double c2 = c * c;
        double a;  // P(|T| <= t)
        if (nu % 2 == 1) {
            double inner = 0.0;
            if (nu > 1) {
                double term = c;
                inner = term;
                for (int j = 1; 2 * j + 1 <= nu - 2; ++j) {
                    term *= c2 * (2.0 * j) / (2.0 * j + 1.0);
                    inner += term;
                }
            }
            a = 2.0 / std::numbers::pi * (theta + s * inner);
        } else {
            double term = 1.0;
            double inner = 1.0;
            for (int j = 1; 2 * j <= nu - 2; ++j) {
                term *= c2 * (2.0 * j - 1.0) / (2.0 * j);
                inner += term;
            }
            a = s * inner;
        }
        return std::max(0.0, 0.5 * (1.0 - a));
    }
    return 0.5 * boost::math::ibeta(0.5 * df, 0.5, df / (df + t * t));
}

void LocationScaleT::validate() const {
    require(std::isfinite(location), "t: location must be finite");
    require(scale > 0.0 && std::isfinite(scale), "t: scale must be positive");
    require(df > 0.0 && !std::isnan(df), "t: df must be positive");
}

double LocationScaleT::logpdf(double x) const {
    validate();
    const double t = (x - location) / scale;
    return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * std::numbers::pi) -
           std::log(scale) - 0.5 * (df + 1.0) * std::log1p(t * t / df);
}

double LocationScaleT::survival(double x) const {
    validate();
    return student_t_sf((x - location) / scale, df);
}

double LocationScaleT::cdf(double x) const {
    validate();
    return student_t_sf(-(x - location) / scale, df);
}

double LocationScaleT::sample(Rng& rng) const {
    validate();
    const double z = rng.normal();
    const double chi2 = 2.0 * sample_gamma(0.5 * df, 1.0, rng);
    return location + scale * z / std::sqrt(chi2 / df);
}

}  // namespace resqrl
