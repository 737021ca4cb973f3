#include "resqrl/simulation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <stdexcept>

#include "resqrl/dists.hpp"

namespace resqrl {

namespace {

constexpr std::array<double, 7> kBeta1{0.3, 0.2, -0.3, -0.5, 0.6, -0.5, -0.3};
constexpr std::array<double, 7> kBeta2{2.1, 0.6, -0.5, -0.3, 0.2, -0.3, -0.5};
constexpr std::array<double, 7> kBetaC{0.0, 0.2, -0.1, 0.1, -0.2, 0.1, -0.2};

double linear(const std::array<double, 7>& b, int z, const double* x) {
    double s = b[0] + b[1] * z;
    for (int j = 0; j < 5; ++j) s += b[2 + j] * x[j];
    return s;
}

double sorted_residual_quantile(const double* begin, const double* end, double nu, double rho, long* survivors) {
    const double* it = std::upper_bound(begin, end, nu);
    const long n = static_cast<long>(end - it);
    if (survivors) *survivors = n;
    if (n < 2) throw std::runtime_error("no survivors past the landmark");
    const double h = (n - 1) * rho;
    const long lo = static_cast<long>(std::floor(h));
    const long hi = std::min(lo + 1, n - 1);
    return it[lo] + (h - lo) * (it[hi] - it[lo]) - nu;
}

}  // namespace

Scenario Scenario::get(int id) {
    switch (id) {
        case 1: return {1, 3.20, true};
        case 2: return {2, 1.79, true};
        case 3: return {3, 0.53, false};
        case 4: return {4, -0.95, false};
        default: throw std::invalid_argument("scenario must be 1, 2, 3 or 4");
    }
}

std::vector<EstimandCell> Scenario::default_cells() const {
    std::vector<EstimandCell> out;
    const std::array<double, 2> rhos = light_censoring ? std::array<double, 2>{0.3, 0.6} : std::array<double, 2>{0.1, 0.2};
    for (double nu : {0.0, 1.0, 2.0, 3.0})
        for (double rho : rhos) out.push_back({nu, rho, 0.0, 0.0});
    return out;
}

CovariateSchema benchmark_schema() {
    return CovariateSchema::make({"x1", "x2", "x3", "x4", "x5"},
                                 {CovariateKind::Binary, CovariateKind::Binary, CovariateKind::Continuous,
                                  CovariateKind::Continuous, CovariateKind::Continuous});
}

void draw_benchmark_covariates(Rng& rng, double* x) {
    x[0] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    x[1] = rng.uniform() < 0.4 + 0.2 * x[0] ? 1.0 : 0.0;
    x[2] = rng.normal();
    x[3] = -0.1 + 0.2 * x[0] - 0.15 * x[2] + rng.normal();
    x[4] = 0.1 - 0.2 * x[1] + 0.15 * x[3] + 0.5 * rng.normal();
}

double draw_benchmark_log_outcome(int z, const double* x, Rng& rng) {
    if (rng.uniform() < 0.4) {
        static const LocationScaleT std_t{0.0, 1.0, 10.0};
        return linear(kBeta1, z, x) + 0.3 * std_t.sample(rng);
    }
    return linear(kBeta2, z, x) + 0.4 * rng.normal();
}

SimulatedData simulate_benchmark(double c_star, int n, Rng& rng) {
    if (n < 2) throw std::invalid_argument("sample size must be at least 2");
    std::vector<ObservedRecord> recs(n);
    std::vector<double> y0(n), y1(n);
    for (int i = 0; i < n; ++i) {
        double x[5];
        draw_benchmark_covariates(rng, x);
        const int z = rng.uniform() < normal_cdf(0.2 + 0.1 * x[0] + 0.2 * x[2] - 0.1 * x[4]) ? 1 : 0;
        y0[i] = draw_benchmark_log_outcome(0, x, rng);
        y1[i] = draw_benchmark_log_outcome(1, x, rng);
        const double log_c = c_star + linear(kBetaC, z, x) + 2.0 * rng.normal();
        const double log_y = z ? y1[i] : y0[i];
        auto& r = recs[i];
        r.time = std::exp(std::min(log_y, log_c));
        r.event = log_y <= log_c;
        r.exposure = z;
        r.covariates.assign(x, x + 5);
    }
    return {Dataset(benchmark_schema(), std::move(recs)), std::move(y0), std::move(y1)};
}

SimulatedData simulate_heavy_censoring_study(int n, Rng& rng) {
    if (n < 2) throw std::invalid_argument("sample size must be at least 2");
    const auto schema = CovariateSchema::make({"female", "carrier", "age", "education", "score"},
                                              {CovariateKind::Binary, CovariateKind::Binary, CovariateKind::Continuous,
                                               CovariateKind::Continuous, CovariateKind::Continuous});
    std::vector<ObservedRecord> recs(n);
    std::vector<double> y0(n), y1(n);
    for (int i = 0; i < n; ++i) {
        double x[5];
        x[0] = rng.uniform() < 0.45 ? 1.0 : 0.0;
        x[1] = rng.uniform() < 0.35 + 0.1 * x[0] ? 1.0 : 0.0;
        x[2] = rng.normal();
        x[3] = -0.2 * x[0] + 0.3 * x[2] + rng.normal();
        x[4] = 0.4 * x[1] - 0.3 * x[3] + 0.8 * rng.normal();
        const int z = rng.uniform() < normal_cdf(-0.3 + 0.5 * x[1] + 0.3 * x[2] + 0.2 * x[4]) ? 1 : 0;
        const double m = 2.3 - 0.2 * x[1] - 0.25 * x[2] + 0.1 * x[3] - 0.2 * x[4];
        y0[i] = m + 0.5 * rng.normal();
        y1[i] = m - 0.45 + 0.5 * rng.normal();
        const double log_c = 1.05 + 0.4 * rng.normal();
        const double log_y = z ? y1[i] : y0[i];
        auto& r = recs[i];
        r.time = std::exp(std::min(log_y, log_c));
        r.event = log_y <= log_c;
        r.exposure = z;
        r.covariates.assign(x, x + 5);
    }
    return {Dataset(schema, std::move(recs)), std::move(y0), std::move(y1)};
}

std::vector<TruthCell> true_osqc(std::span<const EstimandCell> cells, long n_mc, std::uint64_t seed, Exec exec,
                                 int batches) {
    if (n_mc < 10000) throw std::invalid_argument("Monte Carlo size must be at least 1e4");
    if (batches < 2 || n_mc / batches < 2) throw std::invalid_argument("invalid batch count");
    std::vector<double> y0(n_mc), y1(n_mc);
    const Rng root(seed);
    auto bounds = [&](int b) {
        const long per = n_mc / batches;
        const long lo = b * per;
        return std::pair<long, long>{lo, b == batches - 1 ? n_mc : lo + per};
    };

    const int C = static_cast<int>(cells.size());
    std::vector<double> batch_delta(static_cast<std::size_t>(batches) * C);
    std::vector<std::exception_ptr> errors(batches);

#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (int b = 0; b < batches; ++b) {
        try {
            Rng rng = root.split("truth-batch", static_cast<std::uint64_t>(b));
            const auto [lo, hi] = bounds(b);
            for (long i = lo; i < hi; ++i) {
                double x[5];
                draw_benchmark_covariates(rng, x);
                y0[i] = std::exp(draw_benchmark_log_outcome(0, x, rng));
                y1[i] = std::exp(draw_benchmark_log_outcome(1, x, rng));
            }
            std::sort(y0.begin() + lo, y0.begin() + hi);
            std::sort(y1.begin() + lo, y1.begin() + hi);
            for (int c = 0; c < C; ++c) {
                const double q1 = sorted_residual_quantile(y1.data() + lo, y1.data() + hi, cells[c].nu, cells[c].rho, nullptr);
                const double q0 = sorted_residual_quantile(y0.data() + lo, y0.data() + hi, cells[c].nu, cells[c].rho, nullptr);
                batch_delta[static_cast<std::size_t>(b) * C + c] = q1 - q0;
            }
        } catch (...) {
            errors[b] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::sort(y0.begin(), y0.end());
    std::sort(y1.begin(), y1.end());
    std::vector<TruthCell> out;
    for (int c = 0; c < C; ++c) {
        TruthCell t;
        t.nu = cells[c].nu;
        t.rho = cells[c].rho;
        t.q1 = sorted_residual_quantile(y1.data(), y1.data() + n_mc, t.nu, t.rho, &t.survivors1);
        t.q0 = sorted_residual_quantile(y0.data(), y0.data() + n_mc, t.nu, t.rho, &t.survivors0);
        if (t.survivors1 < 10000 || t.survivors0 < 10000)
            throw std::runtime_error("fewer than 1e4 Monte Carlo survivors past the landmark");
        t.value = t.q1 - t.q0;
        double mean = 0.0;
        for (int b = 0; b < batches; ++b) mean += batch_delta[static_cast<std::size_t>(b) * C + c];
        mean /= batches;
        double ss = 0.0;
        for (int b = 0; b < batches; ++b) {
            const double d = batch_delta[static_cast<std::size_t>(b) * C + c] - mean;
            ss += d * d;
        }
        t.se = std::sqrt(ss / (batches - 1.0)) / std::sqrt(static_cast<double>(batches));
        out.push_back(t);
    }
    return out;
}

Estimator model_estimator(ModelKind model, const MCMCConfig& mcmc, int cohort_size, double level) {
    return [=](const Dataset& data, std::span<const EstimandCell> cells, std::uint64_t seed) {
        const BaseMeasure base = make_base_measure(data);
        MCMCConfig cfg = mcmc;
        cfg.seed = seed;
        const PosteriorSample post = run_model(model, data, base, cfg);
        OsqcRequest req;
        req.cells.assign(cells.begin(), cells.end());
        req.cohort_size = cohort_size;
        req.level = level;
        req.seed = mix64(seed);
        const OsqcResult res = osqc(post.draws, req, Exec::Serial);
        std::vector<PosteriorSummary> out;
        for (const auto& c : res.cells) out.push_back(c.sdelta);
        return out;
    };
}

MetricsTable run_replicates(const ReplicateConfig& cfg, std::span<const TruthCell> truth, const Estimator& estimator,
                            const std::function<void(const std::string&)>& log) {
    if (cfg.replicates <= 0) throw std::invalid_argument("replicates must be positive");
    if (cfg.cells.empty()) throw std::invalid_argument("no estimand cells");
    if (truth.size() != cfg.cells.size()) throw std::invalid_argument("truth table does not match the requested cells");
    for (std::size_t c = 0; c < cfg.cells.size(); ++c)
        if (truth[c].nu != cfg.cells[c].nu || truth[c].rho != cfg.cells[c].rho)
            throw std::invalid_argument("truth table cell order differs from the requested cells");
    const Scenario sc = Scenario::get(cfg.scenario);
    const int R = cfg.replicates;
    const int C = static_cast<int>(cfg.cells.size());
    std::vector<std::vector<PosteriorSummary>> est(R);
    std::vector<std::string> err(R);
    std::vector<double> cens(R, 0.0);
    const Rng root(cfg.seed);

#pragma omp parallel for schedule(dynamic) if (cfg.exec == Exec::Parallel)
    for (int r = 0; r < R; ++r) {
        try {
            Rng data_rng = root.split("replicate-data", static_cast<std::uint64_t>(r));
            const SimulatedData sim = simulate_benchmark(sc.c_star, cfg.n, data_rng);
            cens[r] = static_cast<double>(sim.data.n_censored()) / sim.data.size();
            const std::uint64_t fit_seed = root.split("replicate-fit", static_cast<std::uint64_t>(r)).next_u64();
            auto e = estimator(sim.data, cfg.cells, fit_seed);
            if (static_cast<int>(e.size()) != C) throw std::runtime_error("estimator returned the wrong number of cells");
            for (const auto& s : e)
                if (!std::isfinite(s.mean) || !std::isfinite(s.lower) || !std::isfinite(s.upper))
                    throw std::runtime_error("estimator returned a non-finite summary");
            est[r] = std::move(e);
        } catch (const std::exception& ex) {
            err[r] = ex.what();
            if (err[r].empty()) err[r] = "unknown error";
        }
        if (log) {
#pragma omp critical(resqrl_log)
            log("replicate " + std::to_string(r) + (err[r].empty() ? " done" : " failed: " + err[r]));
        }
    }

    MetricsTable out;
    for (int r = 0; r < R; ++r)
        if (!err[r].empty()) {
            ++out.failures;
            out.failure_log.push_back("replicate " + std::to_string(r) + ": " + err[r]);
        }
    if (out.failures > cfg.max_failure_rate * R)
        throw std::runtime_error("aborting: " + std::to_string(out.failures) + " of " + std::to_string(R) +
                                 " replicates failed (first: " + out.failure_log.front() + ")");
    int ok = 0;
    for (int r = 0; r < R; ++r)
        if (err[r].empty()) {
            out.censoring_rate += cens[r];
            ++ok;
        }
    out.censoring_rate /= ok;
    for (int c = 0; c < C; ++c) {
        CellMetrics m;
        m.cell = cfg.cells[c];
        m.truth = truth[c].value;
        double sb = 0.0, ss = 0.0;
        int cover = 0;
        for (int r = 0; r < R; ++r) {
            if (!err[r].empty()) continue;
            const auto& s = est[r][c];
            m.estimates.push_back(s);
            const double e = s.mean - m.truth;
            sb += e;
            ss += e * e;
            cover += s.lower <= m.truth && m.truth <= s.upper;
        }
        m.used = ok;
        m.bias = sb / ok;
        m.rmse = std::sqrt(ss / ok);
        m.coverage = 100.0 * cover / ok;
        out.cells.push_back(std::move(m));
    }
    return out;
}

}  // namespace resqrl
