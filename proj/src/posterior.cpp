#include "resqrl/posterior.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace resqrl {

using nlohmann::json;

namespace {

json vec_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vec json_vec(const json& a) {
    Vec v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

json base_json(const BaseMeasure& b) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < b.B_beta.rows(); ++i) rows.push_back(vec_json(b.B_beta.row(i).transpose()));
    return {{"a_beta", vec_json(b.a_beta)}, {"B_beta", rows},          {"c_beta", b.c_beta},
            {"a_sigma", b.a_sigma},         {"b_sigma", b.b_sigma},    {"a_pi", b.a_pi},
            {"b_pi", b.b_pi},               {"a_mu", b.a_mu},          {"b_mu", b.b_mu},
            {"a_tau", b.a_tau},             {"b_tau", b.b_tau},        {"a_theta", b.a_theta},
            {"b_theta", b.b_theta},         {"a_omega", b.a_omega},    {"b_omega", b.b_omega},
            {"n_binary", b.n_binary},       {"n_continuous", b.n_continuous}};
}

BaseMeasure json_base(const json& j) {
    BaseMeasure b;
    b.a_beta = json_vec(j.at("a_beta"));
    const auto& rows = j.at("B_beta");
    b.B_beta.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) b.B_beta.row(static_cast<Eigen::Index>(i)) = json_vec(rows[i]).transpose();
    b.c_beta = j.at("c_beta");
    b.a_sigma = j.at("a_sigma");
    b.b_sigma = j.at("b_sigma");
    b.a_pi = j.at("a_pi");
    b.b_pi = j.at("b_pi");
    b.a_mu = j.at("a_mu");
    b.b_mu = j.at("b_mu");
    b.a_tau = j.at("a_tau");
    b.b_tau = j.at("b_tau");
    b.a_theta = j.at("a_theta");
    b.b_theta = j.at("b_theta");
    b.a_omega = j.at("a_omega");
    b.b_omega = j.at("b_omega");
    b.n_binary = j.at("n_binary");
    b.n_continuous = j.at("n_continuous");
    b.validate();
    return b;
}

json draw_json(const PosteriorDraw& d) {
    json cl = json::array();
    for (const auto& c : d.clusters) {
        json subs = json::array();
        for (const auto& s : c.subs)
            subs.push_back({{"n", s.n},
                            {"exposure_p", s.omega.exposure_p},
                            {"pi", vec_json(s.omega.pi)},
                            {"mu", vec_json(s.omega.mu)},
                            {"tau2", vec_json(s.omega.tau2)}});
        cl.push_back({{"n", c.n}, {"beta", vec_json(c.theta.beta)}, {"sigma2", c.theta.sigma2}, {"subs", subs}});
    }
    return {{"alpha_theta", d.alpha_theta}, {"alpha_omega", d.alpha_omega}, {"clusters", cl}};
}

}  // namespace

const char* model_name(ModelKind m) { return m == ModelKind::Edpmm ? "edpmm" : "dpmm"; }

ModelKind parse_model(const std::string& s) {
    if (s == "edpmm") return ModelKind::Edpmm;
    if (s == "dpmm") return ModelKind::Dpmm;
    throw std::invalid_argument("unknown model '" + s + "' (expected edpmm or dpmm)");
}

void PosteriorDraw::validate() const {
    if (!base) throw std::invalid_argument("draw has no base measure");
    if (!(alpha_theta >= 0.0) || !(alpha_omega >= 0.0)) throw std::invalid_argument("draw has a negative concentration");
    const int p = base->design_dim();
    int total = 0;
    for (const auto& c : clusters) {
        if (c.n <= 0) throw std::invalid_argument("draw has an empty cluster");
        if (c.theta.beta.size() != p || !(c.theta.sigma2 > 0.0) || !c.theta.beta.allFinite())
            throw std::invalid_argument("draw has invalid outcome parameters");
        int sub_total = 0;
        for (const auto& s : c.subs) {
            if (s.n <= 0) throw std::invalid_argument("draw has an empty subcluster");
            const auto& w = s.omega;
            if (!(w.exposure_p > 0.0 && w.exposure_p < 1.0)) throw std::invalid_argument("draw has invalid exposure probability");
            if (w.pi.size() != base->n_binary || w.mu.size() != base->n_continuous || w.tau2.size() != base->n_continuous)
                throw std::invalid_argument("draw subcluster has wrong covariate dimension");
            for (Eigen::Index j = 0; j < w.pi.size(); ++j)
                if (!(w.pi[j] > 0.0 && w.pi[j] < 1.0)) throw std::invalid_argument("draw has invalid covariate probability");
            for (Eigen::Index j = 0; j < w.tau2.size(); ++j)
                if (!(w.tau2[j] > 0.0) || !std::isfinite(w.mu[j])) throw std::invalid_argument("draw has invalid normal kernel");
            sub_total += s.n;
        }
        if (sub_total != c.n) throw std::invalid_argument("subcluster counts do not sum to the cluster count");
        total += c.n;
    }
    if (total != n_total) throw std::invalid_argument("cluster counts do not sum to N");
}

void write_draws(const PosteriorSample& s, std::ostream& out) {
    json names = json::array(), kinds = json::array();
    for (std::size_t j = 0; j < s.schema.size(); ++j) {
        names.push_back(s.schema.name(j));
        kinds.push_back(s.schema.kind(j) == CovariateKind::Binary ? "binary" : "continuous");
    }
    const int n_total = s.draws.empty() ? 0 : s.draws.front().n_total;
    json header = {{"format", "resqrl-draws"},
                   {"version", 1},
                   {"model", model_name(s.model)},
                   {"schema", {{"names", names}, {"kinds", kinds}}},
                   {"schema_hash", s.schema.hash()},
                   {"n_total", n_total},
                   {"n_draws", s.draws.size()},
                   {"base", base_json(*s.base)}};
    out << header.dump() << '\n';
    for (const auto& d : s.draws) out << draw_json(d).dump() << '\n';
}

void save_draws(const PosteriorSample& s, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write draws to '" + path + "'");
    write_draws(s, f);
}

PosteriorSample read_draws(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("draw file is empty");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("draw file header: ") + e.what());
    }
    if (header.value("format", "") != "resqrl-draws") throw std::invalid_argument("not a draw file");
    PosteriorSample s;
    try {
        s.model = parse_model(header.at("model"));
        std::vector<std::string> names;
        std::vector<CovariateKind> kinds;
        for (const auto& n : header.at("schema").at("names")) names.push_back(n);
        for (const auto& k : header.at("schema").at("kinds"))
            kinds.push_back(k.get<std::string>() == "binary" ? CovariateKind::Binary : CovariateKind::Continuous);
        s.schema = CovariateSchema::make(names, kinds);
        if (s.schema.hash() != header.at("schema_hash").get<std::string>())
            throw std::invalid_argument("draw file schema hash does not match its schema");
        s.base = std::make_shared<const BaseMeasure>(json_base(header.at("base")));
        const int n_total = header.at("n_total");
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const json j = json::parse(line);
            PosteriorDraw d;
            d.model = s.model;
            d.alpha_theta = j.at("alpha_theta");
            d.alpha_omega = j.at("alpha_omega");
            d.n_total = n_total;
            d.base = s.base;
            for (const auto& c : j.at("clusters")) {
                DrawCluster dc;
                dc.n = c.at("n");
                dc.theta.beta = json_vec(c.at("beta"));
                dc.theta.sigma2 = c.at("sigma2");
                for (const auto& sc : c.at("subs")) {
                    DrawSubcluster ds;
                    ds.n = sc.at("n");
                    ds.omega.exposure_p = sc.at("exposure_p");
                    ds.omega.pi = json_vec(sc.at("pi"));
                    ds.omega.mu = json_vec(sc.at("mu"));
                    ds.omega.tau2 = json_vec(sc.at("tau2"));
                    dc.subs.push_back(std::move(ds));
                }
                d.clusters.push_back(std::move(dc));
            }
            try {
                d.validate();
            } catch (const std::invalid_argument& e) {
                throw std::invalid_argument("draw file line " + std::to_string(lineno) + ": " + e.what());
            }
            s.draws.push_back(std::move(d));
        }
        if (s.draws.size() != header.at("n_draws").get<std::size_t>())
            throw std::invalid_argument("draw file is truncated");
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed draw file: ") + e.what());
    }
    return s;
}

PosteriorSample load_draws(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open draw file '" + path + "'");
    return read_draws(f);
}

}  // namespace resqrl
