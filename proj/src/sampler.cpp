#include "resqrl/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "resqrl/dists.hpp"

namespace resqrl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double outcome_log_density(const OutcomeParams& th, const double* design, int p, double y) {
    double mu = 0.0;
    for (int j = 0; j < p; ++j) mu += design[j] * th.beta[j];
    const double r = y - mu;
    return -0.5 * std::log(th.sigma2) - kHalfLog2Pi - 0.5 * r * r / th.sigma2;
}

double subcluster_log_density(const SubclusterParams& w, int z, const double* x) {
    double s = z ? std::log(w.exposure_p) : std::log1p(-w.exposure_p);
    const int nb = static_cast<int>(w.pi.size());
    for (int j = 0; j < nb; ++j) s += x[j] != 0.0 ? std::log(w.pi[j]) : std::log1p(-w.pi[j]);
    for (Eigen::Index c = 0; c < w.mu.size(); ++c) {
        const double r = x[nb + c] - w.mu[c];
        s += -0.5 * std::log(w.tau2[c]) - kHalfLog2Pi - 0.5 * r * r / w.tau2[c];
    }
    return s;
}

// prior draw into existing storage, same stream consumption as draw_subcluster_prior
void draw_subcluster_prior_into(const BaseMeasure& base, Rng& rng, SubclusterParams& out) {
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
}

void remove_cluster(SamplerState& s, int k) {
    const int last = static_cast<int>(s.clusters.size()) - 1;
    if (k != last) {
        s.clusters[k] = std::move(s.clusters[last]);
        for (int& v : s.s_y)
            if (v == last) v = k;
    }
    s.clusters.pop_back();
}

void remove_subcluster(SamplerState& s, int k, int r) {
    auto& subs = s.clusters[k].subs;
    const int last = static_cast<int>(subs.size()) - 1;
    if (r != last) {
        subs[r] = std::move(subs[last]);
        for (std::size_t i = 0; i < s.s_y.size(); ++i)
            if (s.s_y[i] == k && s.s_x[i] == last) s.s_x[i] = r;
    }
    subs.pop_back();
}

void require_finite(const SamplerState& s, int sweep) {
    auto fail = [&](const std::string& what) {
        throw std::runtime_error("sampler produced a non-finite " + what + " at sweep " + std::to_string(sweep));
    };
    if (!s.y_log.allFinite()) fail("augmented log time");
    if (!s.design.allFinite()) fail("imputed covariate");
    for (const auto& c : s.clusters)
        if (!c.params.beta.allFinite() || !std::isfinite(c.params.sigma2)) fail("outcome parameter");
    if (!std::isfinite(s.alpha_theta) || !std::isfinite(s.alpha_omega)) fail("concentration");
}

}  // namespace

void MCMCConfig::validate() const {
    if (burn_in < 0) throw std::invalid_argument("mcmc: burn_in must be >= 0");
    if (iterations <= 0) throw std::invalid_argument("mcmc: iterations must be positive");
    if (thin <= 0) throw std::invalid_argument("mcmc: thin must be positive");
    if (iterations % thin != 0) throw std::invalid_argument("mcmc: thin must divide iterations");
    if (k_new < 1) throw std::invalid_argument("mcmc: k_new must be at least 1");
    if (!std::isfinite(phi)) throw std::invalid_argument("mcmc: phi must be finite");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("mcmc: eta must be positive");
    if (!(init_alpha_theta > 0.0) || !(init_alpha_omega > 0.0))
        throw std::invalid_argument("mcmc: initial concentrations must be positive");
}

SamplerData SamplerData::from(const Dataset& data) {
    SamplerData d;
    const auto& schema = data.schema();
    d.n = static_cast<int>(data.size());
    d.nb = static_cast<int>(schema.n_binary());
    d.nc = static_cast<int>(schema.n_continuous());
    d.p = 2 + d.nb + d.nc;
    d.log_t.resize(d.n);
    d.event.resize(d.n);
    d.z.resize(d.n);
    d.missing.resize(d.n);
    d.design0.resize(d.n, d.p);

    const int q = d.nb + d.nc;
    std::vector<double> fill(q, 0.0);
    for (int j = 0; j < q; ++j) {
        double sum = 0.0;
        int cnt = 0;
        for (const auto& r : data.records())
            if (r.covariates[j]) {
                sum += *r.covariates[j];
                ++cnt;
            }
        const double mean = cnt ? sum / cnt : 0.0;
        fill[j] = j < d.nb ? (mean >= 0.5 ? 1.0 : 0.0) : mean;
    }
    for (int i = 0; i < d.n; ++i) {
        const auto& r = data[i];
        d.log_t[i] = std::log(r.time);
        d.event[i] = r.event;
        d.z[i] = r.exposure;
        d.design0(i, 0) = 1.0;
        d.design0(i, 1) = r.exposure;
        for (int j = 0; j < q; ++j) {
            if (r.covariates[j]) {
                d.design0(i, 2 + j) = *r.covariates[j];
            } else {
                d.design0(i, 2 + j) = fill[j];
                d.missing[i].push_back(j);
                ++d.n_missing;
            }
        }
    }
    return d;
}

int SamplerState::n_subclusters() const {
    int n = 0;
    for (const auto& c : clusters) n += static_cast<int>(c.subs.size());
    return n;
}

SamplerState init_state(const SamplerData& d, const SamplerModel& m, const MCMCConfig& cfg, Rng& rng) {
    SamplerState s;
    s.y_log.resize(d.n);
    for (int i = 0; i < d.n; ++i) s.y_log[i] = d.event[i] ? d.log_t[i] : d.log_t[i] + 0.1;
    s.design = d.design0;
    s.s_y.assign(d.n, 0);
    s.s_x.assign(d.n, 0);
    s.clusters.resize(1);
    s.clusters[0].n = d.n;
    s.clusters[0].subs.resize(1);
    s.clusters[0].subs[0].n = d.n;
    s.alpha_theta = cfg.init_alpha_theta;
    s.alpha_omega = cfg.init_alpha_omega;
    update_outcome_params(s, d, m, rng);
    update_subcluster_params(s, d, m, rng);
    return s;
}

void augment_censored_outcomes(SamplerState& s, const SamplerData& d, const MCMCConfig& cfg, Rng& rng) {
    for (int i = 0; i < d.n; ++i) {
        if (d.event[i]) continue;
        const auto& th = s.clusters[s.s_y[i]].params;
        const double* row = s.design.row(i).data();
        double fitted = 0.0;
        for (int k = 0; k < d.p; ++k) fitted += row[k] * th.beta[k];
        const double mean = fitted + cfg.phi;
        s.y_log[i] = sample_truncated_normal(mean, cfg.eta * th.sigma2, d.log_t[i], rng);
    }
}

void impute_missing_covariates(SamplerState& s, const SamplerData& d, Rng& rng) {
    for (int i = 0; i < d.n; ++i) {
        if (d.missing[i].empty()) continue;
        const auto& cl = s.clusters[s.s_y[i]];
        const auto& th = cl.params;
        const auto& w = cl.subs[s.s_x[i]].params;
        double* row = s.design.row(i).data();
        for (int j : d.missing[i]) {
            const int col = 2 + j;
            if (j < d.nb) {
                row[col] = 1.0;
                const double l1 = cl.kernel.log_density(row, d.p, s.y_log[i]);
                row[col] = 0.0;
                const double l0 = cl.kernel.log_density(row, d.p, s.y_log[i]);
                row[col] = sample_bernoulli(binary_impute_probability(w.pi[j], l1, l0), rng) ? 1.0 : 0.0;
            } else {
                const int c = j - d.nb;
                double fitted = 0.0;
                for (int k = 0; k < d.p; ++k) fitted += row[k] * th.beta[k];
                const double partial = s.y_log[i] - (fitted - th.beta[col] * row[col]);
                const auto mom = continuous_impute_moments(w.mu[c], w.tau2[c], th.beta[col], th.sigma2, partial);
                row[col] = mom.mean + std::sqrt(mom.var) * rng.normal();
            }
        }
    }
}

void update_assignments(SamplerState& s, const SamplerData& d, const SamplerModel& m, int k_new, Rng& rng) {
    struct Candidate {
        int k, r, aux;
    };
    std::vector<double> logw;
    std::vector<Candidate> cand;
    std::vector<std::vector<SubclusterParams>> aux_sub;
    std::vector<OutcomeParams> aux_theta(k_new);
    std::vector<SubclusterParams> aux_omega(k_new);
    const double log_knew = std::log(static_cast<double>(k_new));

    for (int i = 0; i < d.n; ++i) {
        int k = s.s_y[i];
        const int r = s.s_x[i];
        auto& C = s.clusters[k];
        --C.n;
        --C.subs[r].n;

        bool reuse_cluster = false, reuse_sub = false;
        int reuse_sub_k = -1;
        if (C.n == 0) {
            // subject was alone in its outcome cluster: its parameters seed the first new-cluster slot
            reuse_cluster = true;
            aux_theta[0] = std::move(C.params);
            aux_omega[0] = std::move(C.subs[r].params);
            remove_cluster(s, k);
        } else if (C.subs[r].n == 0) {
            // alone in its subcluster only: parameters seed that cluster's first new-subcluster slot
            reuse_sub = true;
            reuse_sub_k = k;
            if (aux_sub.size() <= static_cast<std::size_t>(k)) aux_sub.resize(k + 1);
            aux_sub[k].resize(k_new);
            aux_sub[k][0] = std::move(C.subs[r].params);
            remove_subcluster(s, k, r);
        }

        const int K = static_cast<int>(s.clusters.size());
        if (static_cast<int>(aux_sub.size()) < K) aux_sub.resize(K);
        const double* row = s.design.row(i).data();
        const double* x = row + 2;
        const int z = d.z[i];
        const double y = s.y_log[i];
        logw.clear();
        cand.clear();

        for (int kk = 0; kk < K; ++kk) {
            const auto& Ck = s.clusters[kk];
            const double ly = Ck.kernel.log_density(row, d.p, y);
            const double lead = std::log(static_cast<double>(Ck.n)) - std::log(Ck.n + s.alpha_omega) + ly;
            for (int rr = 0; rr < static_cast<int>(Ck.subs.size()); ++rr) {
                const auto& S = Ck.subs[rr];
                logw.push_back(lead + std::log(static_cast<double>(S.n)) + S.kernel.log_density(z, x));
                cand.push_back({kk, rr, -1});
            }
            aux_sub[kk].resize(k_new);
            const double lead_new = lead + std::log(s.alpha_omega) - log_knew;
            for (int j = 0; j < k_new; ++j) {
                if (!(reuse_sub && kk == reuse_sub_k && j == 0)) draw_subcluster_prior_into(m.base, rng, aux_sub[kk][j]);
                logw.push_back(lead_new + subcluster_log_density(aux_sub[kk][j], z, x));
                cand.push_back({kk, -1, j});
            }
        }
        const double lead_cluster = std::log(s.alpha_theta) - log_knew;
        for (int j = 0; j < k_new; ++j) {
            if (!(reuse_cluster && j == 0)) {
                aux_theta[j] = draw_outcome_prior(m.base, m.prior, rng);
                draw_subcluster_prior_into(m.base, rng, aux_omega[j]);
            }
            logw.push_back(lead_cluster + outcome_log_density(aux_theta[j], row, d.p, y) +
                           subcluster_log_density(aux_omega[j], z, x));
            cand.push_back({-1, -1, j});
        }

        const Candidate& pick = cand[sample_log_weights(logw, rng)];
        if (pick.k >= 0 && pick.r >= 0) {
            s.clusters[pick.k].n++;
            s.clusters[pick.k].subs[pick.r].n++;
            s.s_y[i] = pick.k;
            s.s_x[i] = pick.r;
        } else if (pick.k >= 0) {
            auto& Ck = s.clusters[pick.k];
            Subcluster sub;
            sub.set(aux_sub[pick.k][pick.aux]);
            sub.n = 1;
            Ck.subs.push_back(std::move(sub));
            Ck.n++;
            s.s_y[i] = pick.k;
            s.s_x[i] = static_cast<int>(Ck.subs.size()) - 1;
        } else {
            OutcomeCluster nc;
            nc.set(aux_theta[pick.aux]);
            nc.n = 1;
            nc.subs.resize(1);
            nc.subs[0].set(aux_omega[pick.aux]);
            nc.subs[0].n = 1;
            s.clusters.push_back(std::move(nc));
            s.s_y[i] = K;
            s.s_x[i] = 0;
        }
    }
}

void update_outcome_params(SamplerState& s, const SamplerData& d, const SamplerModel& m, Rng& rng) {
    const int K = static_cast<int>(s.clusters.size());
    std::vector<Mat> xtx(K, Mat::Zero(d.p, d.p));
    std::vector<Vec> xty(K, Vec::Zero(d.p));
    std::vector<double> yty(K, 0.0);
    std::vector<int> cnt(K, 0);
    for (int i = 0; i < d.n; ++i) {
        const int k = s.s_y[i];
        const Vec row = s.design.row(i).transpose();
        xtx[k].noalias() += row * row.transpose();
        xty[k].noalias() += s.y_log[i] * row;
        yty[k] += s.y_log[i] * s.y_log[i];
        ++cnt[k];
    }
    for (int k = 0; k < K; ++k) {
        const auto post = outcome_posterior(m.base, m.prior, xtx[k], xty[k], yty[k], cnt[k]);
        s.clusters[k].set(draw_outcome_posterior(post, rng));
    }
}

void update_subcluster_params(SamplerState& s, const SamplerData& d, const SamplerModel& m, Rng& rng) {
    std::vector<std::vector<std::vector<int>>> members(s.clusters.size());
    for (std::size_t k = 0; k < s.clusters.size(); ++k) members[k].resize(s.clusters[k].subs.size());
    for (int i = 0; i < d.n; ++i) members[s.s_y[i]][s.s_x[i]].push_back(i);
    const RowMat x = s.design.rightCols(d.nb + d.nc);
    for (std::size_t k = 0; k < s.clusters.size(); ++k)
        for (std::size_t r = 0; r < s.clusters[k].subs.size(); ++r) {
            const auto st = CovariateStats::collect(members[k][r], d.z, x, d.nb, d.nc);
            s.clusters[k].subs[r].set(draw_subcluster_posterior(m.base, st, rng));
        }
}

double alpha_theta_mixture_weight(double a, int k, int n, double rate) {
    const double num = a + k - 1.0;
    return num / (n * rate + num);
}

double update_alpha_theta(double alpha, int k, int n, double a, double b, Rng& rng) {
    const double xi = sample_beta(alpha + 1.0, static_cast<double>(n), rng);
    const double rate = b - std::log(xi);
    const double w = alpha_theta_mixture_weight(a, k, n, rate);
    const double shape = rng.uniform() < w ? a + k : a + k - 1.0;
    return sample_gamma(shape, rate, rng);
}

double alpha_omega_log_target(double alpha, const NestedCounts& counts, double a, double b) {
    if (!(alpha > 0.0)) return -std::numeric_limits<double>::infinity();
    double lt = (a - 1.0) * std::log(alpha) - b * alpha;
    for (const auto& [nk, kk] : counts) {
        // (K_k - 1) log a + log(a + n_k) + log B(a + 1, n_k)
        lt += (kk - 1) * std::log(alpha) + std::log(alpha + nk) + std::lgamma(alpha + 1.0) + std::lgamma(nk) -
              std::lgamma(alpha + 1.0 + nk);
    }
    return lt;
}

double alpha_omega_log_accept(double current, double proposed, const NestedCounts& counts, double a, double b) {
    return alpha_omega_log_target(proposed, counts, a, b) - alpha_omega_log_target(current, counts, a, b) +
           std::log(proposed) - std::log(current);
}

double update_alpha_omega(double alpha, const NestedCounts& counts, double a, double b, Rng& rng, bool& accepted) {
    const double proposed = alpha * std::exp(0.5 * rng.normal());
    const double lr = alpha_omega_log_accept(alpha, proposed, counts, a, b);
    accepted = std::log(rng.uniform()) < lr;
    return accepted ? proposed : alpha;
}

NestedCounts nested_counts(const SamplerState& s) {
    NestedCounts out;
    out.reserve(s.clusters.size());
    for (const auto& c : s.clusters) out.emplace_back(c.n, static_cast<int>(c.subs.size()));
    return out;
}

void check_invariants(const SamplerState& s, const SamplerData& d) {
    auto fail = [](const std::string& what) { throw std::logic_error("sampler invariant violated: " + what); };
    const int K = static_cast<int>(s.clusters.size());
    if (K == 0) fail("no clusters");
    if (static_cast<int>(s.s_y.size()) != d.n || static_cast<int>(s.s_x.size()) != d.n) fail("assignment length");
    std::vector<std::vector<int>> cnt(K);
    for (int k = 0; k < K; ++k) cnt[k].assign(s.clusters[k].subs.size(), 0);
    for (int i = 0; i < d.n; ++i) {
        if (s.s_y[i] < 0 || s.s_y[i] >= K) fail("outcome label out of range");
        if (s.s_x[i] < 0 || s.s_x[i] >= static_cast<int>(cnt[s.s_y[i]].size())) fail("subcluster label out of range");
        ++cnt[s.s_y[i]][s.s_x[i]];
    }
    int total = 0;
    for (int k = 0; k < K; ++k) {
        const auto& c = s.clusters[k];
        int sub_total = 0;
        if (c.subs.empty()) fail("cluster without subclusters");
        for (std::size_t r = 0; r < c.subs.size(); ++r) {
            if (c.subs[r].n <= 0) fail("empty subcluster");
            if (c.subs[r].n != cnt[k][r]) fail("subcluster count disagrees with labels");
            const auto& w = c.subs[r].params;
            if (!(w.exposure_p > 0.0 && w.exposure_p < 1.0)) fail("exposure probability outside (0,1)");
            for (Eigen::Index j = 0; j < w.pi.size(); ++j)
                if (!(w.pi[j] > 0.0 && w.pi[j] < 1.0)) fail("binary probability outside (0,1)");
            for (Eigen::Index j = 0; j < w.tau2.size(); ++j)
                if (!(w.tau2[j] > 0.0)) fail("non-positive covariate variance");
            sub_total += c.subs[r].n;
        }
        if (sub_total != c.n) fail("subcluster counts do not sum to cluster count");
        if (!(c.params.sigma2 > 0.0)) fail("non-positive outcome variance");
        total += c.n;
    }
    if (total != d.n) fail("cluster counts do not sum to N");
    for (int i = 0; i < d.n; ++i) {
        if (d.event[i]) {
            if (s.y_log[i] != d.log_t[i]) fail("observed log time was modified");
        } else if (!(s.y_log[i] > d.log_t[i])) {
            fail("augmented log time not above the censoring time");
        }
        for (int j = 0; j < d.nb; ++j) {
            const double v = s.design(i, 2 + j);
            if (v != 0.0 && v != 1.0) fail("binary covariate not in {0,1}");
        }
    }
    if (!(s.alpha_theta > 0.0) || !(s.alpha_omega > 0.0)) fail("non-positive concentration");
}

PosteriorDraw snapshot(const SamplerState& s, ModelKind model, std::shared_ptr<const BaseMeasure> base) {
    PosteriorDraw d;
    d.model = model;
    d.alpha_theta = s.alpha_theta;
    d.alpha_omega = model == ModelKind::Edpmm ? s.alpha_omega : 0.0;
    d.n_total = static_cast<int>(s.s_y.size());
    d.base = std::move(base);
    d.clusters.reserve(s.clusters.size());
    for (const auto& c : s.clusters) {
        DrawCluster dc;
        dc.theta = c.params;
        dc.n = c.n;
        for (const auto& sub : c.subs) dc.subs.push_back({sub.params, sub.n});
        d.clusters.push_back(std::move(dc));
    }
    return d;
}

namespace {

void check_dimensions(const Dataset& data, const BaseMeasure& base) {
    if (base.n_binary != static_cast<int>(data.schema().n_binary()) ||
        base.n_continuous != static_cast<int>(data.schema().n_continuous()))
        throw std::invalid_argument("base measure does not match the dataset schema");
}

PosteriorSample run_chain(ModelKind model, const Dataset& data, const BaseMeasure& base, const MCMCConfig& cfg,
                          const SweepObserver& observer) {
    cfg.validate();
    check_dimensions(data, base);
    const SamplerData d = SamplerData::from(data);
    const SamplerModel m(base);
    auto shared_base = std::make_shared<const BaseMeasure>(base);
    Rng rng = Rng(cfg.seed).split(model == ModelKind::Edpmm ? "edpmm-chain" : "dpmm-chain");

    SamplerState s = init_state(d, m, cfg, rng);
    if (model == ModelKind::Dpmm) s.alpha_omega = 1.0;  // unused by the single-layer sweep

    PosteriorSample out;
    out.model = model;
    out.schema = data.schema();
    out.base = shared_base;
    out.draws.reserve(cfg.n_draws());
    out.diagnostics.imputed_entries = d.n_missing;

    long accepted = 0, proposals = 0;
    double sum_k = 0.0, sum_sub = 0.0;
    const int total = cfg.burn_in + cfg.iterations;
    for (int sweep = 1; sweep <= total; ++sweep) {
        augment_censored_outcomes(s, d, cfg, rng);
        impute_missing_covariates(s, d, rng);
        if (cfg.update_assignments) {
            if (model == ModelKind::Edpmm) update_assignments(s, d, m, cfg.k_new, rng);
            else update_assignments_dpmm(s, d, m, cfg.k_new, rng);
        }
        update_outcome_params(s, d, m, rng);
        update_subcluster_params(s, d, m, rng);
        if (cfg.update_concentrations) {
            s.alpha_theta = update_alpha_theta(s.alpha_theta, static_cast<int>(s.clusters.size()), d.n, base.a_theta,
                                               base.b_theta, rng);
            if (model == ModelKind::Edpmm) {
                bool acc = false;
                s.alpha_omega = update_alpha_omega(s.alpha_omega, nested_counts(s), base.a_omega, base.b_omega, rng, acc);
                accepted += acc;
                ++proposals;
            }
        }
        require_finite(s, sweep);
        if (observer) observer(sweep, s);
        if (sweep > cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin == 0) {
            out.draws.push_back(snapshot(s, model, shared_base));
            sum_k += static_cast<double>(s.clusters.size());
            sum_sub += s.n_subclusters();
        }
    }
    const double nd = static_cast<double>(out.draws.size());
    out.diagnostics.alpha_omega_acceptance = proposals ? static_cast<double>(accepted) / proposals : 0.0;
    out.diagnostics.mean_clusters = sum_k / nd;
    out.diagnostics.mean_subclusters = sum_sub / nd;
    return out;
}

}  // namespace

PosteriorSample run_edpmm(const Dataset& data, const BaseMeasure& base, const MCMCConfig& cfg,
                          const SweepObserver& observer) {
    return run_chain(ModelKind::Edpmm, data, base, cfg, observer);
}

PosteriorSample run_dpmm(const Dataset& data, const BaseMeasure& base, const MCMCConfig& cfg,
                         const SweepObserver& observer) {
    return run_chain(ModelKind::Dpmm, data, base, cfg, observer);
}

PosteriorSample run_model(ModelKind model, const Dataset& data, const BaseMeasure& base, const MCMCConfig& cfg,
                          const SweepObserver& observer) {
    return run_chain(model, data, base, cfg, observer);
}

}  // namespace resqrl
