#include <cmath>
#include <vector>

#include "resqrl/dists.hpp"
#include "resqrl/sampler.hpp"

namespace resqrl {

void update_assignments_dpmm(SamplerState& s, const SamplerData& d, const SamplerModel& m, int k_new, Rng& rng) {
    std::vector<double> logw;
    std::vector<OutcomeParams> aux_theta(k_new);
    std::vector<SubclusterParams> aux_omega(k_new);
    const double log_knew = std::log(static_cast<double>(k_new));

    for (int i = 0; i < d.n; ++i) {
        const int k = s.s_y[i];
        auto& C = s.clusters[k];
        --C.n;
        --C.subs[0].n;
        bool reuse = false;
        if (C.n == 0) {
            reuse = true;
            aux_theta[0] = std::move(C.params);
            aux_omega[0] = std::move(C.subs[0].params);
            const int last = static_cast<int>(s.clusters.size()) - 1;
            if (k != last) {
                s.clusters[k] = std::move(s.clusters[last]);
                for (int& v : s.s_y)
                    if (v == last) v = k;
            }
            s.clusters.pop_back();
        }

        const int K = static_cast<int>(s.clusters.size());
        const double* row = s.design.row(i).data();
        const double* x = row + 2;
        const int z = d.z[i];
        const double y = s.y_log[i];
        logw.clear();
        for (const auto& c : s.clusters)
            logw.push_back(std::log(static_cast<double>(c.n)) + c.kernel.log_density(row, d.p, y) +
                           c.subs[0].kernel.log_density(z, x));
        for (int j = 0; j < k_new; ++j) {
            if (!(reuse && j == 0)) {
                aux_theta[j] = draw_outcome_prior(m.base, m.prior, rng);
                aux_omega[j] = draw_subcluster_prior(m.base, rng);
            }
            logw.push_back(std::log(s.alpha_theta) - log_knew + OutcomeKernel(aux_theta[j]).log_density(row, d.p, y) +
                           CovariateKernel(aux_omega[j]).log_density(z, x));
        }

        const int pick = sample_log_weights(logw, rng);
        if (pick < K) {
            s.clusters[pick].n++;
            s.clusters[pick].subs[0].n++;
            s.s_y[i] = pick;
        } else {
            OutcomeCluster nc;
            nc.set(aux_theta[pick - K]);
            nc.n = 1;
            nc.subs.resize(1);
            nc.subs[0].set(aux_omega[pick - K]);
            nc.subs[0].n = 1;
            s.clusters.push_back(std::move(nc));
            s.s_y[i] = K;
        }
        s.s_x[i] = 0;
    }
}

}  // namespace resqrl
