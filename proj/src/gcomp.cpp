#include "resqrl/gcomp.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace resqrl {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
    double mx = kNegInf;
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

int sample_linear(std::span<const double> w, Rng& rng) {
    double total = 0.0;
    for (double v : w) total += v;
    if (!(total > 0.0)) throw std::domain_error("cohort sampling weights sum to zero");
    double u = rng.uniform() * total;
    int last = -1;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] <= 0.0) continue;
        last = static_cast<int>(i);
        if (u < w[i]) return last;
        u -= w[i];
    }
    return last;
}

std::vector<std::vector<CovariateKernel>> build_kernels(const PosteriorDraw& draw) {
    std::vector<std::vector<CovariateKernel>> out(draw.clusters.size());
    for (std::size_t k = 0; k < draw.clusters.size(); ++k)
        for (const auto& s : draw.clusters[k].subs) out[k].emplace_back(s.omega);
    return out;
}

/// Unnormalized log weights of the K clusters plus the prior term (last entry).
void row_log_weights(const PosteriorDraw& draw, const std::vector<std::vector<CovariateKernel>>& kernels, double log_f0,
                     int z, const double* x, std::vector<double>& out, std::vector<double>& scratch) {
    const double N = draw.n_total;
    const double at = draw.alpha_theta, aw = draw.alpha_omega;
    const std::size_t K = draw.clusters.size();
    out.resize(K + 1);
    for (std::size_t k = 0; k < K; ++k) {
        const auto& c = draw.clusters[k];
        const double nk = c.n;
        scratch.clear();
        scratch.push_back(safe_log(aw / (aw + nk)) + log_f0);
        for (std::size_t r = 0; r < c.subs.size(); ++r)
            scratch.push_back(std::log(c.subs[r].n / (aw + nk)) + kernels[k][r].log_density(z, x));
        out[k] = std::log(nk / (at + N)) + log_sum_exp(scratch);
    }
    out[K] = safe_log(at / (at + N)) + log_f0;
}

void normalize_log(std::vector<double>& lw) {
    const double lse = log_sum_exp(lw);
    if (!std::isfinite(lse)) throw std::domain_error("conditional mixture weights are all zero");
    for (double& v : lw) v = std::exp(v - lse);
}

void draw_covariates(const SubclusterParams& w, Rng& rng, double* x) {
    const int nb = static_cast<int>(w.pi.size());
    for (int j = 0; j < nb; ++j) x[j] = rng.uniform() < w.pi[j] ? 1.0 : 0.0;
    for (Eigen::Index c = 0; c < w.mu.size(); ++c) x[nb + c] = w.mu[c] + std::sqrt(w.tau2[c]) * rng.normal();
}

}  // namespace

PriorPredictive::PriorPredictive(const BaseMeasure& base) : base_(base) {
    base_.validate();
    scale_ = base_.c_beta * base_.B_beta;
    const double pz = base_.a_pi / (base_.a_pi + base_.b_pi);
    lz1_ = std::log(pz);
    lz0_ = std::log1p(-pz);
    lb1_ = lz1_;
    lb0_ = lz0_;
    cov_t_ = LocationScaleT{base_.a_mu, std::sqrt(base_.b_tau * (1.0 + 1.0 / base_.b_mu)), base_.a_tau};
}

double PriorPredictive::log_exposure(int z) const { return z ? lz1_ : lz0_; }

double PriorPredictive::log_covariate(int j, double v) const {
    if (j < base_.n_binary) return v != 0.0 ? lb1_ : lb0_;
    return cov_t_.logpdf(v);
}

double PriorPredictive::log_joint(int z, const double* x) const {
    double s = log_exposure(z);
    for (int j = 0; j < base_.n_covariates(); ++j) s += log_covariate(j, x[j]);
    return s;
}

LocationScaleT PriorPredictive::outcome(const double* design) const {
    const int p = base_.design_dim();
    Eigen::Map<const Vec> d(design, p);
    const double quad = d.dot(scale_ * d);
    return LocationScaleT{d.dot(base_.a_beta), std::sqrt(base_.b_sigma * (1.0 + quad)), base_.a_sigma};
}

double ConditionalMixture::survival(double log_time) const {
    double s = 0.0;
    for (std::size_t k = 0; k < weight.size(); ++k)
        if (weight[k] > 0.0) s += weight[k] * normal_sf((log_time - mean[k]) * inv_sigma[k]);
    if (prior_weight > 0.0) s += prior_weight * prior_term.survival(log_time);
    return s;
}

ConditionalMixture conditional_mixture(const PosteriorDraw& draw, const PriorPredictive& pp, int z, const double* x) {
    const auto kernels = build_kernels(draw);
    const int q = pp.base().n_covariates();
    std::vector<double> lw, scratch;
    row_log_weights(draw, kernels, pp.log_joint(z, x), z, x, lw, scratch);
    normalize_log(lw);
    Vec d(q + 2);
    d[0] = 1.0;
    d[1] = z;
    for (int j = 0; j < q; ++j) d[2 + j] = x[j];
    ConditionalMixture cm;
    const std::size_t K = draw.clusters.size();
    for (std::size_t k = 0; k < K; ++k) {
        cm.weight.push_back(lw[k]);
        cm.mean.push_back(d.dot(draw.clusters[k].theta.beta));
        cm.inv_sigma.push_back(1.0 / std::sqrt(draw.clusters[k].theta.sigma2));
    }
    cm.prior_weight = lw[K];
    cm.prior_term = pp.outcome(d.data());
    return cm;
}

double conditional_survival(const PosteriorDraw& draw, double log_time, int z, const Vec& x) {
    const PriorPredictive pp(*draw.base);
    return conditional_mixture(draw, pp, z, x.data()).survival(log_time);
}

double dpmm_conditional_survival(const PosteriorDraw& draw, double log_time, int z, const Vec& x) {
    const PriorPredictive pp(*draw.base);
    const Vec d = design_row(z, x);
    std::vector<double> lw;
    for (const auto& c : draw.clusters) {
        if (c.subs.size() != 1) throw std::invalid_argument("single-layer draw must have one subcluster per cluster");
        lw.push_back(std::log(static_cast<double>(c.n)) + CovariateKernel(c.subs[0].omega).log_density(z, x.data()));
    }
    lw.push_back(safe_log(draw.alpha_theta) + pp.log_joint(z, x.data()));
    normalize_log(lw);
    double s = 0.0;
    for (std::size_t k = 0; k < draw.clusters.size(); ++k) {
        const auto& th = draw.clusters[k].theta;
        s += lw[k] * normal_sf((log_time - d.dot(th.beta)) / std::sqrt(th.sigma2));
    }
    return s + lw.back() * pp.outcome(d.data()).survival(log_time);
}

SyntheticCohort draw_synthetic_cohort(const PosteriorDraw& draw, int m, Rng& rng) {
    if (m <= 0) throw std::invalid_argument("cohort size must be positive");
    const BaseMeasure& base = *draw.base;
    const int q = base.n_covariates();
    SyntheticCohort out;
    out.x.resize(m, q);
    out.cluster.resize(m);
    out.subcluster.resize(m);
    std::vector<double> w1;
    for (const auto& c : draw.clusters) w1.push_back(c.n);
    w1.push_back(draw.alpha_theta);
    std::vector<std::vector<double>> w2(draw.clusters.size());
    for (std::size_t k = 0; k < draw.clusters.size(); ++k) {
        for (const auto& s : draw.clusters[k].subs) w2[k].push_back(s.n);
        w2[k].push_back(draw.alpha_omega);
    }
    const int K = static_cast<int>(draw.clusters.size());
    for (int i = 0; i < m; ++i) {
        const int k = sample_linear(w1, rng);
        int r = -1;
        if (k < K) {
            r = sample_linear(w2[k], rng);
            if (r == static_cast<int>(draw.clusters[k].subs.size())) r = -1;
        }
        double* x = out.x.row(i).data();
        if (r >= 0) {
            draw_covariates(draw.clusters[k].subs[r].omega, rng, x);
        } else {
            draw_covariates(draw_subcluster_prior(base, rng), rng, x);
        }
        out.cluster[i] = k < K ? k : -1;
        out.subcluster[i] = r;
    }
    return out;
}

SyntheticCohort draw_synthetic_cohort_conditional(const PosteriorDraw& draw, int m, const Subgroup& sub, Rng& rng) {
    if (m <= 0) throw std::invalid_argument("cohort size must be positive");
    const BaseMeasure& base = *draw.base;
    const int q = base.n_covariates();
    for (const auto& [j, v] : sub.fixed) {
        if (j < 0 || j >= q) throw std::invalid_argument("subgroup covariate index out of range");
        if (j < base.n_binary && v != 0.0 && v != 1.0) throw std::invalid_argument("binary subgroup value must be 0 or 1");
    }
    const PriorPredictive pp(base);
    const double N = draw.n_total, at = draw.alpha_theta, aw = draw.alpha_omega;

    // log weights over existing (k, r) pairs plus one pooled "new" entry
    std::vector<double> lw;
    std::vector<std::pair<int, int>> slot;
    double new_mass = at / (at + N);
    for (std::size_t k = 0; k < draw.clusters.size(); ++k) {
        const auto& c = draw.clusters[k];
        new_mass += c.n / (at + N) * aw / (aw + c.n);
        for (std::size_t r = 0; r < c.subs.size(); ++r) {
            const CovariateKernel ker(c.subs[r].omega);
            double l = std::log(c.n / (at + N)) + std::log(c.subs[r].n / (aw + c.n));
            for (const auto& [j, v] : sub.fixed) l += ker.log_density_one(j, v);
            lw.push_back(l);
            slot.emplace_back(static_cast<int>(k), static_cast<int>(r));
        }
    }
    double lnew = safe_log(new_mass);
    for (const auto& [j, v] : sub.fixed) lnew += pp.log_covariate(j, v);
    lw.push_back(lnew);

    SyntheticCohort out;
    out.x.resize(m, q);
    out.cluster.resize(m);
    out.subcluster.resize(m);
    for (int i = 0; i < m; ++i) {
        const int pick = sample_log_weights(lw, rng);
        double* x = out.x.row(i).data();
        if (pick < static_cast<int>(slot.size())) {
            const auto [k, r] = slot[pick];
            draw_covariates(draw.clusters[k].subs[r].omega, rng, x);
            out.cluster[i] = k;
            out.subcluster[i] = r;
        } else {
            draw_covariates(draw_subcluster_prior(base, rng), rng, x);
            out.cluster[i] = -1;
            out.subcluster[i] = -1;
        }
        for (const auto& [j, v] : sub.fixed) x[j] = v;
    }
    return out;
}

MarginalSurvival::MarginalSurvival(const PosteriorDraw& draw, const PriorPredictive& pp, const SyntheticCohort& cohort,
                                   int z) {
    const auto kernels = build_kernels(draw);
    rows_ = static_cast<int>(cohort.x.rows());
    k_ = static_cast<int>(draw.clusters.size());
    const int q = static_cast<int>(cohort.x.cols());
    w_.resize(static_cast<std::size_t>(rows_) * k_);
    mean_.resize(w_.size());
    inv_sigma_.resize(k_);
    for (int k = 0; k < k_; ++k) inv_sigma_[k] = kInvSqrt2 / std::sqrt(draw.clusters[k].theta.sigma2);
    prior_w_.resize(rows_);
    prior_loc_.resize(rows_);
    prior_inv_scale_.resize(rows_);
    prior_df_ = pp.base().a_sigma;

    std::vector<double> lw, scratch;
    Vec d(q + 2);
    d[0] = 1.0;
    d[1] = z;
    for (int i = 0; i < rows_; ++i) {
        const double* x = cohort.x.row(i).data();
        for (int j = 0; j < q; ++j) d[2 + j] = x[j];
        row_log_weights(draw, kernels, pp.log_joint(z, x), z, x, lw, scratch);
        normalize_log(lw);
        for (int k = 0; k < k_; ++k) {
            w_[static_cast<std::size_t>(i) * k_ + k] = lw[k];
            mean_[static_cast<std::size_t>(i) * k_ + k] = d.dot(draw.clusters[k].theta.beta);
        }
        prior_w_[i] = lw[k_];
        const LocationScaleT t = pp.outcome(d.data());
        prior_loc_[i] = t.location;
        prior_inv_scale_[i] = 1.0 / t.scale;
    }
}

double MarginalSurvival::sum_at(double log_time) const {
    double total = 0.0;
    for (int i = 0; i < rows_; ++i) {
        const double* w = w_.data() + static_cast<std::size_t>(i) * k_;
        const double* mu = mean_.data() + static_cast<std::size_t>(i) * k_;
        double s = 0.0;
        for (int k = 0; k < k_; ++k)
            if (w[k] > 0.0) s += w[k] * 0.5 * std::erfc((log_time - mu[k]) * inv_sigma_[k]);
        if (prior_w_[i] > 0.0) s += prior_w_[i] * student_t_sf((log_time - prior_loc_[i]) * prior_inv_scale_[i], prior_df_);
        total += s;
    }
    return total;
}

namespace {

double landmark_mass(const MarginalSurvival& ms, double nu, double psi) {
    if (!(nu >= 0.0) || !std::isfinite(nu)) throw std::invalid_argument("landmark must be finite and >= 0");
    const double den = nu == 0.0 ? static_cast<double>(ms.rows()) : ms.sum_at(std::log(nu) - psi);
    if (den / ms.rows() < 1e-12) throw std::runtime_error("landmark beyond effective support");
    return den;
}

}  // namespace

double marginal_residual_survival(const MarginalSurvival& ms, double y, double nu, double psi) {
    if (!(y >= 0.0)) throw std::invalid_argument("residual time must be >= 0");
    const double den = landmark_mass(ms, nu, psi);
    return ms.sum_at(std::log(y + nu) - psi) / den;
}

RootSolution qrl_root_solve(const MarginalSurvival& ms, double nu, double rho, double psi) {
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
    const double den = landmark_mass(ms, nu, psi);
    const double target = 1.0 - rho;
    auto excess = [&](double y) { return ms.sum_at(std::log(y + nu) - psi) / den - target; };

    RootSolution sol;
    double lo = 0.0, hi = 1.0;
    double flo = 1.0 - target, fhi = excess(hi);
    while (fhi > 0.0) {
        lo = hi;
        flo = fhi;
        hi *= 2.0;
        ++sol.expansions;
        if (hi > 0x1p60) throw std::runtime_error("quantile beyond numeric range");
        fhi = excess(hi);
    }
    // flo > 0 >= fhi from here on
    double x = hi, fx = fhi;
    double glo = flo, ghi = fhi;  // Illinois-scaled end values
    int last_side = 0;
    double width = hi - lo;
    while (std::abs(fx) > 1e-13 && hi - lo > 1e-10 * hi) {
        const bool bisect = sol.refinements % 3 == 2 && hi - lo > 0.5 * width;
        if (sol.refinements % 3 == 2) width = hi - lo;
        x = bisect ? 0.5 * (lo + hi) : lo + (hi - lo) * glo / (glo - ghi);
        if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
        fx = excess(x);
        ++sol.refinements;
        if (fx > 0.0) {
            lo = x;
            glo = flo = fx;
            if (last_side == 1) ghi *= 0.5;
            last_side = 1;
        } else {
            hi = x;
            ghi = fhi = fx;
            if (last_side == -1) glo *= 0.5;
            last_side = -1;
        }
    }
    sol.y = x;
    sol.residual = std::abs(fx);
    return sol;
}

void OsqcRequest::validate(const CovariateSchema* schema) const {
    if (cells.empty() && survival_times.empty()) throw std::invalid_argument("no estimand cells requested");
    for (const auto& c : cells) {
        if (!(c.nu >= 0.0) || !std::isfinite(c.nu)) throw std::invalid_argument("landmark must be finite and >= 0");
        if (!(c.rho > 0.0 && c.rho < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
        if (!std::isfinite(c.psi0) || !std::isfinite(c.psi1)) throw std::invalid_argument("sensitivity shift must be finite");
    }
    for (double t : survival_times)
        if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("survival times must be positive");
    if (subgroups.empty()) throw std::invalid_argument("at least one subgroup is required");
    if (cohort_size <= 0) throw std::invalid_argument("cohort size must be positive");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("credible level must lie in (0, 1)");
    if (schema)
        for (const auto& g : subgroups)
            for (const auto& [j, v] : g.fixed) {
                if (j < 0 || j >= static_cast<int>(schema->size())) throw std::invalid_argument("subgroup covariate out of range");
                if (schema->kind(j) == CovariateKind::Binary && v != 0.0 && v != 1.0)
                    throw std::invalid_argument("binary subgroup value must be 0 or 1");
            }
}

PosteriorSummary summarize_posterior(std::span<const double> values, double level) {
    if (values.empty()) throw std::invalid_argument("cannot summarize an empty sample");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("credible level must lie in (0, 1)");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double sum = 0.0;
    for (double x : values) sum += x;
    PosteriorSummary s;
    s.mean = sum / n;
    double ss = 0.0;
    for (double x : values) ss += (x - s.mean) * (x - s.mean);
    s.sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    auto quantile = [&](double p) {
        const double h = (n - 1.0) * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    s.lower = quantile(0.5 * (1.0 - level));
    s.upper = quantile(0.5 * (1.0 + level));
    return s;
}

OsqcResult osqc(std::span<const PosteriorDraw> draws, const OsqcRequest& req, Exec exec) {
    req.validate();
    if (draws.empty()) throw std::invalid_argument("no posterior draws");
    const int D = static_cast<int>(draws.size());
    const int G = static_cast<int>(req.subgroups.size());
    const int C = static_cast<int>(req.cells.size());
    const int T = static_cast<int>(req.survival_times.size());

    OsqcResult res;
    for (int g = 0; g < G; ++g)
        for (int c = 0; c < C; ++c) {
            OsqcCell cell;
            cell.subgroup = g;
            cell.cell = req.cells[c];
            cell.y1.resize(D);
            cell.y0.resize(D);
            cell.delta.resize(D);
            res.cells.push_back(std::move(cell));
        }
    std::vector<std::vector<double>> curves(static_cast<std::size_t>(G) * 2 * T, std::vector<double>(D));
    std::vector<double> residual(static_cast<std::size_t>(G) * C * D, 0.0);
    std::vector<std::exception_ptr> errors(D);
    const Rng root(req.seed);

#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
    for (int d = 0; d < D; ++d) {
        try {
            const PosteriorDraw& draw = draws[d];
            draw.validate();
            const PriorPredictive pp(*draw.base);
            for (int g = 0; g < G; ++g) {
                const Subgroup& sg = req.subgroups[g];
                Rng rng = root.split("cohort:" + sg.label, static_cast<std::uint64_t>(d));
                const SyntheticCohort cohort = sg.fixed.empty()
                                                   ? draw_synthetic_cohort(draw, req.cohort_size, rng)
                                                   : draw_synthetic_cohort_conditional(draw, req.cohort_size, sg, rng);
                const MarginalSurvival ms1(draw, pp, cohort, 1);
                const MarginalSurvival ms0(draw, pp, cohort, 0);
                for (int c = 0; c < C; ++c) {
                    const EstimandCell& e = req.cells[c];
                    const RootSolution r1 = qrl_root_solve(ms1, e.nu, e.rho, e.psi1);
                    const RootSolution r0 = qrl_root_solve(ms0, e.nu, e.rho, e.psi0);
                    OsqcCell& out = res.cells[static_cast<std::size_t>(g) * C + c];
                    out.y1[d] = r1.y;
                    out.y0[d] = r0.y;
                    out.delta[d] = r1.y - r0.y;
                    residual[(static_cast<std::size_t>(g) * C + c) * D + d] = std::max(r1.residual, r0.residual);
                }
                for (int t = 0; t < T; ++t) {
                    const double lt = std::log(req.survival_times[t]);
                    curves[(static_cast<std::size_t>(g) * 2 + 0) * T + t][d] = ms0.sum_at(lt) / ms0.rows();
                    curves[(static_cast<std::size_t>(g) * 2 + 1) * T + t][d] = ms1.sum_at(lt) / ms1.rows();
                }
            }
        } catch (...) {
            errors[d] = std::current_exception();
        }
    }
    for (int d = 0; d < D; ++d) {
        if (!errors[d]) continue;
        try {
            std::rethrow_exception(errors[d]);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("draw " + std::to_string(d) + ": " + e.what());
        } catch (const std::exception& e) {
            throw std::runtime_error("draw " + std::to_string(d) + ": " + e.what());
        }
    }

    for (std::size_t i = 0; i < res.cells.size(); ++i) {
        auto& cell = res.cells[i];
        cell.s1 = summarize_posterior(cell.y1, req.level);
        cell.s0 = summarize_posterior(cell.y0, req.level);
        cell.sdelta = summarize_posterior(cell.delta, req.level);
        for (int d = 0; d < D; ++d) cell.max_residual = std::max(cell.max_residual, residual[i * D + d]);
    }
    for (int g = 0; g < G; ++g)
        for (int arm = 0; arm < 2; ++arm)
            for (int t = 0; t < T; ++t)
                res.survival.push_back({g, arm, req.survival_times[t],
                                        summarize_posterior(curves[(static_cast<std::size_t>(g) * 2 + arm) * T + t], req.level)});
    return res;
}

}  // namespace resqrl
