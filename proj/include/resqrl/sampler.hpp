#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "resqrl/posterior.hpp"

namespace resqrl {

struct MCMCConfig {
    int burn_in = 20000;
    int iterations = 20000;
    int thin = 20;
    int k_new = 1;
    std::uint64_t seed = 0;
    /// Censored log times are augmented from N(mean + phi, eta * sigma2) above log t.
    double phi = 0.0;
    double eta = 1.0;
    /// Test switches; production runs keep both on.
    bool update_assignments = true;
    bool update_concentrations = true;
    double init_alpha_theta = 1.0;
    double init_alpha_omega = 1.0;

    void validate() const;
    int n_draws() const { return iterations / thin; }
};

/// Immutable per-dataset arrays used by every sweep.
struct SamplerData {
    int n = 0;
    int p = 0;  ///< design width 2 + covariates
    int nb = 0, nc = 0;
    std::vector<double> log_t;
    std::vector<char> event;
    std::vector<int> z;
    std::vector<std::vector<int>> missing;  ///< per subject, covariate indices
    RowMat design0;  ///< (1, z, x) with missing cells set to the observed mode or mean
    int n_missing = 0;

    static SamplerData from(const Dataset& data);
};

struct Subcluster {
    SubclusterParams params;
    CovariateKernel kernel;
    int n = 0;

    void set(SubclusterParams p) {
        params = std::move(p);
        kernel = CovariateKernel(params);
    }
};

struct OutcomeCluster {
    OutcomeParams params;
    OutcomeKernel kernel;
    int n = 0;
    std::vector<Subcluster> subs;

    void set(OutcomeParams p) {
        params = std::move(p);
        kernel = OutcomeKernel(params);
    }
};

/**
 * Full sampler state. The single-layer comparator uses the same structure
 * with exactly one subcluster per cluster.
 */
struct SamplerState {
    Vec y_log;
    RowMat design;
    std::vector<int> s_y;
    std::vector<int> s_x;
    std::vector<OutcomeCluster> clusters;
    double alpha_theta = 1.0;
    double alpha_omega = 1.0;

    int n_subclusters() const;
    /// Covariates of subject i (binary first, then continuous).
    const double* x(int i) const { return design.row(i).data() + 2; }
};

struct SamplerModel {
    BaseMeasure base;
    OutcomePrior prior;
    explicit SamplerModel(const BaseMeasure& b) : base(b), prior(b) {}
};

SamplerState init_state(const SamplerData& d, const SamplerModel& m, const MCMCConfig& cfg, Rng& rng);

void augment_censored_outcomes(SamplerState& s, const SamplerData& d, const MCMCConfig& cfg, Rng& rng);
void impute_missing_covariates(SamplerState& s, const SamplerData& d, Rng& rng);
/// Auxiliary-parameter reassignment over outcome clusters and covariate subclusters.
void update_assignments(SamplerState& s, const SamplerData& d, const SamplerModel& m, int k_new, Rng& rng);
void update_outcome_params(SamplerState& s, const SamplerData& d, const SamplerModel& m, Rng& rng);
void update_subcluster_params(SamplerState& s, const SamplerData& d, const SamplerModel& m, Rng& rng);

/// Probability of the Gamma(a + K, .) component in the auxiliary-variable concentration update.
double alpha_theta_mixture_weight(double a, int k, int n, double rate);
double update_alpha_theta(double alpha, int k, int n, double a, double b, Rng& rng);

/// (cluster size, number of subclusters) per outcome cluster.
using NestedCounts = std::vector<std::pair<int, int>>;
double alpha_omega_log_target(double alpha, const NestedCounts& counts, double a, double b);
/// Log acceptance ratio for a log-scale random-walk proposal.
double alpha_omega_log_accept(double current, double proposed, const NestedCounts& counts, double a, double b);
/// One Metropolis-Hastings step; returns the new value and sets `accepted`.
double update_alpha_omega(double alpha, const NestedCounts& counts, double a, double b, Rng& rng, bool& accepted);

NestedCounts nested_counts(const SamplerState& s);

/// Throws std::logic_error describing the first violated structural invariant.
void check_invariants(const SamplerState& s, const SamplerData& d);

PosteriorDraw snapshot(const SamplerState& s, ModelKind model, std::shared_ptr<const BaseMeasure> base);

using SweepObserver = std::function<void(int sweep, const SamplerState&)>;

/// Run the nested mixture sampler and collect thinned post-burn-in draws.
PosteriorSample run_edpmm(const Dataset& data, const BaseMeasure& base, const MCMCConfig& cfg,
                          const SweepObserver& observer = {});

/// Single-layer comparator: joint kernel per cluster, same base measure and augmentation steps.
void update_assignments_dpmm(SamplerState& s, const SamplerData& d, const SamplerModel& m, int k_new, Rng& rng);
PosteriorSample run_dpmm(const Dataset& data, const BaseMeasure& base, const MCMCConfig& cfg,
                         const SweepObserver& observer = {});

PosteriorSample run_model(ModelKind model, const Dataset& data, const BaseMeasure& base, const MCMCConfig& cfg,
                          const SweepObserver& observer = {});

}  // namespace resqrl
