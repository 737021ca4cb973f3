#include "resqrl/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "resqrl/dists.hpp"

namespace resqrl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace

void BaseMeasure::validate() const {
    const int p = design_dim();
    if (n_binary < 0 || n_continuous < 0) throw std::invalid_argument("base measure: negative covariate count");
    if (a_beta.size() != p || B_beta.rows() != p || B_beta.cols() != p)
        throw std::invalid_argument("base measure: outcome prior has wrong dimension");
    if (!(c_beta > 0.0)) throw std::invalid_argument("base measure: c_beta must be positive");
    for (double v : {a_sigma, b_sigma, a_pi, b_pi, b_mu, a_tau, b_tau, a_theta, b_theta, a_omega, b_omega})
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("base measure: hyperparameters must be positive");
    if (!a_beta.allFinite() || !B_beta.allFinite()) throw std::invalid_argument("base measure: non-finite outcome prior");
}

OutcomePrior::OutcomePrior(const BaseMeasure& base) {
    base.validate();
    scale = base.c_beta * base.B_beta;
    chol.compute(scale);
    if (chol.info() != Eigen::Success) throw std::invalid_argument("base measure: B_beta is not positive definite");
    precision = chol.solve(Mat::Identity(scale.rows(), scale.cols()));
    precision = 0.5 * (precision + precision.transpose());
    precision_mean = precision * base.a_beta;
    mean_quad = base.a_beta.dot(precision_mean);
}

OutcomeKernel::OutcomeKernel(const OutcomeParams& p) : beta(p.beta) {
    sigma = std::sqrt(p.sigma2);
    log_norm = -std::log(sigma) - kHalfLog2Pi;
    half_prec = 0.5 / p.sigma2;
}

double OutcomeKernel::log_density(const double* design, int dim, double y) const {
    double mu = 0.0;
    for (int j = 0; j < dim; ++j) mu += design[j] * beta[j];
    const double r = y - mu;
    return log_norm - half_prec * r * r;
}

CovariateKernel::CovariateKernel(const SubclusterParams& p) {
    lz1 = std::log(p.exposure_p);
    lz0 = std::log1p(-p.exposure_p);
    nb = static_cast<int>(p.pi.size());
    nc = static_cast<int>(p.mu.size());
    l1.resize(nb);
    l0.resize(nb);
    for (int j = 0; j < nb; ++j) {
        l1[j] = std::log(p.pi[j]);
        l0[j] = std::log1p(-p.pi[j]);
    }
    mu.resize(nc);
    half_prec.resize(nc);
    log_norm.resize(nc);
    for (int j = 0; j < nc; ++j) {
        mu[j] = p.mu[j];
        half_prec[j] = 0.5 / p.tau2[j];
        log_norm[j] = -0.5 * std::log(p.tau2[j]) - kHalfLog2Pi;
    }
}

double CovariateKernel::log_density_one(int j, double v) const {
    if (j < nb) return v != 0.0 ? l1[j] : l0[j];
    const int c = j - nb;
    const double r = v - mu[c];
    return log_norm[c] - half_prec[c] * r * r;
}

double CovariateKernel::log_density_covariates(const double* x) const {
    double s = 0.0;
    for (int j = 0; j < nb; ++j) s += x[j] != 0.0 ? l1[j] : l0[j];
    for (int c = 0; c < nc; ++c) {
        const double r = x[nb + c] - mu[c];
        s += log_norm[c] - half_prec[c] * r * r;
    }
    return s;
}

double CovariateKernel::log_density(int z, const double* x) const {
    return (z ? lz1 : lz0) + log_density_covariates(x);
}

CovariateStats CovariateStats::collect(const std::vector<int>& members, const std::vector<int>& z, const RowMat& x, int nb,
                                       int nc) {
    CovariateStats s;
    s.n = static_cast<int>(members.size());
    s.binary_sum.assign(nb, 0);
    s.cont_sum.assign(nc, 0.0);
    s.cont_sumsq_dev.assign(nc, 0.0);
    for (int i : members) {
        s.exposure_sum += z[i];
        for (int j = 0; j < nb; ++j) s.binary_sum[j] += x(i, j) != 0.0;
        for (int c = 0; c < nc; ++c) s.cont_sum[c] += x(i, nb + c);
    }
    if (s.n > 0) {
        for (int c = 0; c < nc; ++c) {
            const double m = s.cont_sum[c] / s.n;
            double ss = 0.0;
            for (int i : members) {
                const double d = x(i, nb + c) - m;
                ss += d * d;
            }
            s.cont_sumsq_dev[c] = ss;
        }
    }
    return s;
}

OutcomeParams draw_outcome_prior(const BaseMeasure& base, const OutcomePrior& prior, Rng& rng) {
    OutcomeParams out;
    out.sigma2 = ScaledInvChiSq{base.a_sigma, base.b_sigma}.sample(rng);
    const int p = base.design_dim();
    Vec e(p);
    for (int j = 0; j < p; ++j) e[j] = rng.normal();
    const Vec le = prior.chol.matrixL() * e;
    out.beta = base.a_beta + std::sqrt(out.sigma2) * le;
    return out;
}

SubclusterParams draw_subcluster_prior(const BaseMeasure& base, Rng& rng) {
    SubclusterParams out;
    out.exposure_p = sample_beta(base.a_pi, base.b_pi, rng);
    out.pi.resize(base.n_binary);
    for (int j = 0; j < base.n_binary; ++j) out.pi[j] = sample_beta(base.a_pi, base.b_pi, rng);
    out.mu.resize(base.n_continuous);
    out.tau2.resize(base.n_continuous);
    const ScaledInvChiSq tau_prior{base.a_tau, base.b_tau};
    for (int c = 0; c < base.n_continuous; ++c) {
        out.tau2[c] = tau_prior.sample(rng);
        out.mu[c] = base.a_mu + std::sqrt(out.tau2[c] / base.b_mu) * rng.normal();
    }
    return out;
}

OutcomePosterior outcome_posterior(const BaseMeasure& base, const OutcomePrior& prior, const Mat& xtx, const Vec& xty,
                                   double yty, int n) {
    OutcomePosterior post;
    post.precision_chol.compute(prior.precision + xtx);
    if (post.precision_chol.info() != Eigen::Success)
        throw std::runtime_error("outcome posterior precision is not positive definite");
    const Vec rhs = prior.precision_mean + xty;
    post.mean = post.precision_chol.solve(rhs);
    post.df = base.a_sigma + n;
    // residual quadratic form of the conjugate update; nonnegative in exact arithmetic
    const double quad = std::max(0.0, prior.mean_quad + yty - post.mean.dot(rhs));
    post.scale = (base.a_sigma * base.b_sigma + quad) / post.df;
    return post;
}

OutcomeParams draw_outcome_posterior(const OutcomePosterior& post, Rng& rng) {
    OutcomeParams out;
    out.sigma2 = ScaledInvChiSq{post.df, post.scale}.sample(rng);
    const int p = static_cast<int>(post.mean.size());
    Vec e(p);
    for (int j = 0; j < p; ++j) e[j] = rng.normal();
    out.beta = post.mean + std::sqrt(out.sigma2) * post.precision_chol.matrixU().solve(e);
    return out;
}

SubclusterParams draw_subcluster_posterior(const BaseMeasure& base, const CovariateStats& s, Rng& rng) {
    SubclusterParams out;
    out.exposure_p = sample_beta(base.a_pi + s.exposure_sum, base.b_pi + s.n - s.exposure_sum, rng);
    out.pi.resize(base.n_binary);
    for (int j = 0; j < base.n_binary; ++j)
        out.pi[j] = sample_beta(base.a_pi + s.binary_sum[j], base.b_pi + s.n - s.binary_sum[j], rng);
    out.mu.resize(base.n_continuous);
    out.tau2.resize(base.n_continuous);
    const double n = s.n;
    for (int c = 0; c < base.n_continuous; ++c) {
        const double xbar = s.n > 0 ? s.cont_sum[c] / n : 0.0;
        const double dev = xbar - base.a_mu;
        const double df = base.a_tau + n;
        const double scale =
            (base.a_tau * base.b_tau + s.cont_sumsq_dev[c] + base.b_mu * n / (base.b_mu + n) * dev * dev) / df;
        out.tau2[c] = ScaledInvChiSq{df, scale}.sample(rng);
        const double loc = (base.b_mu * base.a_mu + n * xbar) / (base.b_mu + n);
        out.mu[c] = loc + std::sqrt(out.tau2[c] / (base.b_mu + n)) * rng.normal();
    }
    return out;
}

double binary_impute_probability(double pi, double loglik_one, double loglik_zero) {
    if (pi <= 0.0) return 0.0;
    if (pi >= 1.0) return 1.0;
    const double a = std::log(pi) + loglik_one;
    const double b = std::log1p(-pi) + loglik_zero;
    return 1.0 / (1.0 + std::exp(b - a));
}

NormalMoments continuous_impute_moments(double mu, double tau2, double beta_q, double sigma2, double partial_residual) {
    const double var = 1.0 / (1.0 / tau2 + beta_q * beta_q / sigma2);
    return {var * (mu / tau2 + beta_q * partial_residual / sigma2), var};
}

Vec design_row(int z, const Vec& x) {
    Vec d(x.size() + 2);
    d[0] = 1.0;
    d[1] = z;
    d.tail(x.size()) = x;
    return d;
}

AftFit fit_aft_mle(const Dataset& data, int max_iter) {
    const auto& schema = data.schema();
    const int p = 2 + static_cast<int>(schema.size());
    std::vector<int> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!data[i].has_missing()) rows.push_back(static_cast<int>(i));
    const int n = static_cast<int>(rows.size());
    if (n < p + 1) throw AftFitError("AFT fit: too few complete records for the design");

    Mat X(n, p);
    Vec y(n);
    std::vector<char> ev(n);
    int n_events = 0;
    for (int r = 0; r < n; ++r) {
        const auto& rec = data[rows[r]];
        X(r, 0) = 1.0;
        X(r, 1) = rec.exposure;
        for (std::size_t j = 0; j < schema.size(); ++j) X(r, 2 + j) = *rec.covariates[j];
        y[r] = std::log(rec.time);
        ev[r] = rec.event;
        n_events += rec.event;
    }
    if (n_events == 0) throw AftFitError("AFT fit: no observed events among complete records");
    Eigen::ColPivHouseholderQR<Mat> qr(X);
    if (qr.rank() < p) throw AftFitError("AFT fit: complete-case design matrix is rank deficient");

    Vec theta(p + 1);
    theta.head(p) = qr.solve(y);
    {
        const double rss = (y - X * theta.head(p)).squaredNorm();
        theta[p] = 0.5 * std::log(std::max(rss / n, 1e-8));
    }

    auto evaluate = [&](const Vec& th, Vec* grad, Mat* hess) {
        const Vec b = th.head(p);
        const double g = th[p];
        const double sigma = std::exp(g);
        double ll = 0.0;
        if (grad) grad->setZero(p + 1);
        if (hess) hess->setZero(p + 1, p + 1);
        for (int i = 0; i < n; ++i) {
            const auto xi = X.row(i).transpose();
            const double r = (y[i] - xi.dot(b)) / sigma;
            double gb, gg, hbb, hbg, hgg;  // derivatives scaled per the chain rule below
            if (ev[i]) {
                ll += -g + normal_logpdf(r);
                gb = r / sigma;
                gg = -1.0 + r * r;
                hbb = -1.0 / (sigma * sigma);
                hbg = -2.0 * r / sigma;
                hgg = -2.0 * r * r;
            } else {
                const double lsf = normal_log_sf(r);
                ll += lsf;
                const double h = std::exp(normal_logpdf(r) - lsf);  // inverse Mills ratio
                const double dh = h * (h - r);
                gb = h / sigma;
                gg = h * r;
                hbb = -dh / (sigma * sigma);
                hbg = -(dh * r + h) / sigma;
                hgg = -r * (dh * r + h);
            }
            if (grad) {
                grad->head(p) += gb * xi;
                (*grad)[p] += gg;
            }
            if (hess) {
                hess->topLeftCorner(p, p) += hbb * xi * xi.transpose();
                hess->col(p).head(p) += hbg * xi;
                (*hess)(p, p) += hgg;
            }
        }
        if (hess) hess->row(p).head(p) = hess->col(p).head(p).transpose();
        return ll;
    };

    Vec grad(p + 1);
    Mat hess(p + 1, p + 1);
    double ll = evaluate(theta, &grad, &hess);
    int it = 0;
    bool converged = false;
    for (; it < max_iter; ++it) {
        Eigen::LDLT<Mat> ldlt(-hess);
        Vec step;
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) step = ldlt.solve(grad);
        else step = grad;  // not locally concave, fall back to ascent
        double t = 1.0;
        Vec cand;
        double ll_new = -std::numeric_limits<double>::infinity();
        for (int h = 0; h < 60; ++h, t *= 0.5) {
            cand = theta + t * step;
            ll_new = evaluate(cand, nullptr, nullptr);
            if (std::isfinite(ll_new) && ll_new >= ll - 1e-12 * std::abs(ll)) break;
        }
        if (!std::isfinite(ll_new)) throw AftFitError("AFT fit: log-likelihood became non-finite");
        const double change = (t * step).cwiseAbs().maxCoeff();
        theta = cand;
        ll = evaluate(theta, &grad, &hess);
        if (change < 1e-10 || grad.cwiseAbs().maxCoeff() < 1e-9) {
            converged = true;
            ++it;
            break;
        }
    }
    if (!converged) throw AftFitError("AFT fit: Newton iterations did not converge");

    Eigen::LDLT<Mat> info(-hess);
    if (info.info() != Eigen::Success || !info.isPositive())
        throw AftFitError("AFT fit: observed information is not positive definite");
    Mat cov = info.solve(Mat::Identity(p + 1, p + 1));
    AftFit fit;
    fit.beta = theta.head(p);
    fit.log_sigma = theta[p];
    fit.beta_cov = 0.5 * (cov.topLeftCorner(p, p) + cov.topLeftCorner(p, p).transpose());
    fit.iterations = it;
    return fit;
}

BaseMeasure make_base_measure(const Dataset& data) {
    const AftFit fit = fit_aft_mle(data);
    BaseMeasure b;
    b.n_binary = static_cast<int>(data.schema().n_binary());
    b.n_continuous = static_cast<int>(data.schema().n_continuous());
    b.a_beta = fit.beta;
    b.B_beta = fit.beta_cov;
    b.c_beta = static_cast<double>(data.size()) / 5.0;
    b.validate();
    return b;
}

}  // namespace resqrl
