#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "resqrl/model.hpp"

namespace resqrl {

enum class ModelKind { Edpmm, Dpmm };

const char* model_name(ModelKind m);
ModelKind parse_model(const std::string& s);

struct DrawSubcluster {
    SubclusterParams omega;
    int n = 0;
};

struct DrawCluster {
    OutcomeParams theta;
    int n = 0;
    std::vector<DrawSubcluster> subs;
};

/**
 * One retained MCMC state. A single-layer mixture is stored with one
 * subcluster per cluster and alpha_omega = 0, which makes every downstream
 * formula reduce to its single-layer form.
 */
struct PosteriorDraw {
    ModelKind model = ModelKind::Edpmm;
    double alpha_theta = 1.0;
    double alpha_omega = 0.0;
    int n_total = 0;
    std::vector<DrawCluster> clusters;
    std::shared_ptr<const BaseMeasure> base;

    /// Throws std::invalid_argument if counts or parameters are inconsistent.
    void validate() const;
};

struct ChainDiagnostics {
    double alpha_omega_acceptance = 0.0;
    double mean_clusters = 0.0;
    double mean_subclusters = 0.0;
    int imputed_entries = 0;
};

struct PosteriorSample {
    ModelKind model = ModelKind::Edpmm;
    CovariateSchema schema;
    std::shared_ptr<const BaseMeasure> base;
    std::vector<PosteriorDraw> draws;
    ChainDiagnostics diagnostics;
};

/// Line-delimited JSON: a header line (model, schema, schema hash, base measure) then one draw per line.
void write_draws(const PosteriorSample& s, std::ostream& out);
void save_draws(const PosteriorSample& s, const std::string& path);
PosteriorSample read_draws(std::istream& in);
PosteriorSample load_draws(const std::string& path);

}  // namespace resqrl
