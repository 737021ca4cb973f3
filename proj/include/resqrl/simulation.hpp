#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "resqrl/gcomp.hpp"
#include "resqrl/sampler.hpp"

namespace resqrl {

/// Censoring intercepts of the four benchmark settings (about 20/40/60/80% censoring).
struct Scenario {
    int id = 1;
    double c_star = 3.20;
    bool light_censoring = true;

    static Scenario get(int id);
    /// Landmarks {0,1,2,3} crossed with rho {0.3,0.6} (light) or {0.1,0.2} (heavy).
    std::vector<EstimandCell> default_cells() const;
};

/// Schema of the benchmark design: x1, x2 binary; x3, x4, x5 continuous.
CovariateSchema benchmark_schema();

/// Fills x[0..4] with one covariate vector of the benchmark design.
void draw_benchmark_covariates(Rng& rng, double* x);
/// One draw of the potential log survival time under exposure z.
double draw_benchmark_log_outcome(int z, const double* x, Rng& rng);

struct SimulatedData {
    Dataset data;
    std::vector<double> log_y0, log_y1;  ///< potential outcomes, for diagnostics
};

SimulatedData simulate_benchmark(double c_star, int n, Rng& rng);

/// Smaller design with two binary and three continuous covariates and roughly 85% censoring.
SimulatedData simulate_heavy_censoring_study(int n, Rng& rng);

struct TruthCell {
    double nu = 0.0;
    double rho = 0.0;
    double value = 0.0;  ///< Q1 - Q0 on the original time scale
    double q1 = 0.0, q0 = 0.0;
    double se = 0.0;     ///< batch-means standard error
    long survivors1 = 0, survivors0 = 0;
};

/**
 * Monte Carlo truth of the residual-life quantile contrast under the
 * benchmark design: empirical rho-quantile of Y(z) - nu among Y(z) > nu.
 */
std::vector<TruthCell> true_osqc(std::span<const EstimandCell> cells, long n_mc, std::uint64_t seed,
                                 Exec exec = Exec::Parallel, int batches = 100);

/// Per-cell posterior summaries of the contrast, in the order of the requested cells.
using Estimator = std::function<std::vector<PosteriorSummary>(const Dataset&, std::span<const EstimandCell>, std::uint64_t)>;

Estimator model_estimator(ModelKind model, const MCMCConfig& mcmc, int cohort_size, double level);

struct ReplicateConfig {
    int scenario = 1;
    int n = 500;
    int replicates = 100;
    std::vector<EstimandCell> cells;
    std::uint64_t seed = 0;
    double max_failure_rate = 0.05;
    Exec exec = Exec::Parallel;
};

struct CellMetrics {
    EstimandCell cell;
    double truth = 0.0;
    double bias = 0.0;
    double rmse = 0.0;
    double coverage = 0.0;  ///< percent
    int used = 0;
    std::vector<PosteriorSummary> estimates;
};

struct MetricsTable {
    std::vector<CellMetrics> cells;
    int failures = 0;
    std::vector<std::string> failure_log;
    double censoring_rate = 0.0;
};

/// Simulate, fit and score replicates; failed replicates are logged and excluded, too many aborts.
MetricsTable run_replicates(const ReplicateConfig& cfg, std::span<const TruthCell> truth, const Estimator& estimator,
                            const std::function<void(const std::string&)>& log = {});

}  // namespace resqrl
