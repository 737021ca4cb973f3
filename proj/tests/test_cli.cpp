#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "resqrl/cli.hpp"
#include "resqrl/data.hpp"
#include "resqrl/simulation.hpp"

using namespace resqrl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("resqrl_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

// small simulated dataset with a sprinkling of missing covariates, plus its fit config
fs::path fit_fixture(const fs::path& dir, double missing_rate) {
    Rng rng(21);
    auto sim = simulate_benchmark(1.79, 80, rng);
    std::vector<ObservedRecord> recs = sim.data.records();
    for (auto& r : recs)
        for (auto& x : r.covariates)
            if (rng.uniform() < missing_rate) x.reset();
    save_dataset(Dataset(sim.data.schema(), recs), (dir / "data.csv").string());
    const json cfg = {{"data", (dir / "data.csv").string()},
                      {"schema", {{"binary", {"x1", "x2"}}, {"continuous", {"x3", "x4", "x5"}}}},
                      {"mcmc", {{"burn_in", 60}, {"iterations", 100}, {"thin", 5}}}};
    write(dir / "fit.json", cfg.dump());
    return dir / "fit.json";
}

}  // namespace

TEST_CASE("configuration and usage errors exit with 2") {
    const auto dir = scratch("errors");
    CHECK(cli({}).code == 2);
    CHECK(cli({"bogus"}).code == 2);
    CHECK(cli({"km", "--help"}).code == 0);

    const auto missing = cli({"fit", "-c", (dir / "absent.json").string(), "--seed", "1"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("absent.json") != std::string::npos);

    write(dir / "unknown.json", R"({"data": "x.csv", "mcmc": {"burnin": 5}})");
    const auto unknown = cli({"fit", "-c", (dir / "unknown.json").string(), "--seed", "1"});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("mcmc.burnin") != std::string::npos);

    write(dir / "broken.json", "{\"data\": ");
    CHECK(cli({"fit", "-c", (dir / "broken.json").string(), "--seed", "1"}).code == 2);

    // seed is mandatory except for km
    write(dir / "d.csv", "time,event,exposure\n1,1,0\n2,0,1\n3,1,0\n");
    write(dir / "fit.json", json{{"data", (dir / "d.csv").string()}}.dump());
    ::unsetenv("RESQRL_SEED");
    const auto no_seed = cli({"fit", "-c", (dir / "fit.json").string(), "-o", dir.string()});
    CHECK(no_seed.code == 2);
    CHECK(no_seed.err.find("seed") != std::string::npos);
    CHECK(cli({"fit", "-c", (dir / "fit.json").string(), "--seed", "-3"}).code == 2);
    CHECK(cli({"fit", "-c", (dir / "fit.json").string(), "--seed", "1", "--set", "mcmc.thin=0"}).code == 2);
    CHECK(cli({"fit", "-c", (dir / "fit.json").string(), "--seed", "1", "--set", "model=\"other\""}).code == 2);
}

TEST_CASE("km on the three-subject toy data") {
    const auto dir = scratch("km");
    write(dir / "toy.csv", "time,event,exposure\n1,1,0\n2,0,1\n3,1,0\n");
    write(dir / "km.json", json{{"data", (dir / "toy.csv").string()}, {"by_exposure", false}}.dump());
    const auto r = cli({"km", "-c", (dir / "km.json").string(), "-o", dir.string()});
    REQUIRE(r.code == 0);
    const auto rows = lines_of(slurp(dir / "km.csv"));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "group,time,survival,at_risk");
    CHECK(rows[1] == "all,1," + format_double(1.0 - 1.0 / 3.0) + ",3");
    CHECK(rows[2] == "all,2," + format_double(1.0 - 1.0 / 3.0) + ",2");
    CHECK(rows[3] == "all,3,0,1");
    CHECK(r.out == slurp(dir / "km.csv"));
    const json m = json::parse(slurp(dir / "manifest.json"));
    CHECK(m.at("command") == "km");
    CHECK(m.at("n_records") == 3);

    const auto by = cli({"km", "-c", (dir / "km.json").string(), "-o", dir.string(), "--set", "by_exposure=true"});
    REQUIRE(by.code == 0);
    CHECK(by.out.find("exposure=1,2,1,1") != std::string::npos);
}

TEST_CASE("a corrupt dataset row exits with 2 and names the row") {
    const auto dir = scratch("corrupt");
    write(dir / "bad.csv", "time,event,exposure,age\n1,1,0,50\n2,0,1,51\n3,x,0,52\n");
    write(dir / "fit.json",
          json{{"data", (dir / "bad.csv").string()}, {"schema", {{"continuous", {"age"}}}}}.dump());
    const auto r = cli({"fit", "-c", (dir / "fit.json").string(), "--seed", "1", "-o", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("row 3") != std::string::npos);
    CHECK(r.err.find("event") != std::string::npos);
}

TEST_CASE("fit, estimate and sensitivity") {
    const auto dir = scratch("pipeline");
    const auto cfg = fit_fixture(dir, 0.05);
    const auto a = cli({"fit", "-c", cfg.string(), "--seed", "7", "-o", (dir / "a").string()});
    REQUIRE(a.code == 0);
    const auto b = cli({"fit", "-c", cfg.string(), "--seed", "7", "-o", (dir / "b").string()});
    REQUIRE(b.code == 0);
    CHECK(slurp(dir / "a" / "draws.jsonl") == slurp(dir / "b" / "draws.jsonl"));
    CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));

    const json m = json::parse(slurp(dir / "a" / "manifest.json"));
    const auto data = load_dataset((dir / "data.csv").string(), benchmark_schema());
    CHECK(data.n_missing_entries() > 0);
    CHECK(m.at("imputed_entries") == data.n_missing_entries());
    CHECK(m.at("n_draws") == 20);
    CHECK(m.at("seed") == 7);
    CHECK(m.at("schema_hash") == benchmark_schema().hash());
    CHECK(m.at("config").at("mcmc").at("burn_in") == 60);
    CHECK(load_draws((dir / "a" / "draws.jsonl").string()).draws.size() == 20);

    // the seed may come from the environment
    ::setenv("RESQRL_SEED", "7", 1);
    const auto e = cli({"fit", "-c", cfg.string(), "-o", (dir / "env").string()});
    ::unsetenv("RESQRL_SEED");
    REQUIRE(e.code == 0);
    CHECK(slurp(dir / "env" / "draws.jsonl") == slurp(dir / "a" / "draws.jsonl"));
    const auto other = cli({"fit", "-c", cfg.string(), "--seed", "8", "-o", (dir / "c").string()});
    REQUIRE(other.code == 0);
    CHECK(slurp(dir / "c" / "draws.jsonl") != slurp(dir / "a" / "draws.jsonl"));

    const json est = {{"draws", (dir / "a" / "draws.jsonl").string()},
                      {"nu", {0, 1}},
                      {"rho", {0.3, 0.6}},
                      {"cohort_size", 200},
                      {"subgroups", {{{"label", "x1=1"}, {"fixed", {{"x1", 1}}}}}},
                      {"survival_times", {1, 5}}};
    write(dir / "est.json", est.dump());
    const auto r1 = cli({"estimate", "-c", (dir / "est.json").string(), "--seed", "3", "-o", (dir / "e1").string()});
    REQUIRE(r1.code == 0);
    const auto r2 = cli({"estimate", "-c", (dir / "est.json").string(), "--seed", "3", "-o", (dir / "e2").string(),
                         "--set", "psi=[[0,0]]"});
    REQUIRE(r2.code == 0);
    CHECK(slurp(dir / "e1" / "osqc.csv") == slurp(dir / "e2" / "osqc.csv"));
    CHECK(slurp(dir / "e1" / "survival.csv") == slurp(dir / "e2" / "survival.csv"));
    const auto osqc_rows = lines_of(slurp(dir / "e1" / "osqc.csv"));
    CHECK(osqc_rows.size() == 1 + 2 * 4);

    const auto s = cli({"sensitivity", "-c", (dir / "est.json").string(), "--seed", "3", "-o", (dir / "s").string()});
    REQUIRE(s.code == 0);
    const auto sens_rows = lines_of(slurp(dir / "s" / "sensitivity.csv"));
    REQUIRE(sens_rows.size() == 1 + 2 * 4 * 9);
    // every unshifted row of the sensitivity table equals the corresponding estimate row
    int matched = 0;
    for (std::size_t i = 1; i < sens_rows.size(); ++i) {
        const auto& row = sens_rows[i];
        std::vector<std::string> f;
        std::stringstream ss(row);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        if (f[3] == "0" && f[4] == "0") {
            CHECK(std::find(osqc_rows.begin(), osqc_rows.end(), row) != osqc_rows.end());
            ++matched;
        }
    }
    CHECK(matched == 8);

    // manifest written by a different schema is rejected
    json bad = json::parse(slurp(dir / "a" / "manifest.json"));
    bad["schema_hash"] = "0000000000000000";
    write(dir / "bad_manifest.json", bad.dump());
    const auto mm = cli({"estimate", "-c", (dir / "est.json").string(), "--seed", "3", "-o", (dir / "e3").string(),
                         "--set", "manifest=\"" + (dir / "bad_manifest.json").string() + "\""});
    CHECK(mm.code == 2);
    CHECK(mm.err.find("schema hash") != std::string::npos);
    CHECK(cli({"estimate", "-c", (dir / "est.json").string(), "--seed", "3", "-o", (dir / "e4").string(), "--set",
               "subgroups=[{\"fixed\":{\"nope\":1}}]"})
              .code == 2);
    CHECK(cli({"estimate", "-c", (dir / "est.json").string(), "--seed", "3", "--set", "rho=[1.2]"}).code == 2);
    CHECK(cli({"estimate", "--seed", "3", "--set", "draws=\"" + (dir / "none.jsonl").string() + "\""}).code != 0);
}

TEST_CASE("user-supplied outcome prior") {
    const auto dir = scratch("prior");
    const auto cfg = fit_fixture(dir, 0.0);
    json c = json::parse(slurp(cfg));
    std::vector<std::vector<double>> B(7, std::vector<double>(7, 0.0));
    for (int i = 0; i < 7; ++i) B[i][i] = 1.0;
    c["prior"] = {{"a_beta", std::vector<double>(7, 0.0)}, {"B_beta", B}, {"c_beta", 10.0}};
    write(dir / "prior.json", c.dump());
    CHECK(cli({"fit", "-c", (dir / "prior.json").string(), "--seed", "1", "-o", (dir / "p").string()}).code == 0);

    c["prior"]["a_beta"] = std::vector<double>(6, 0.0);
    write(dir / "short.json", c.dump());
    CHECK(cli({"fit", "-c", (dir / "short.json").string(), "--seed", "1", "-o", (dir / "q").string()}).code == 2);

    c["prior"].erase("a_beta");
    write(dir / "half.json", c.dump());
    CHECK(cli({"fit", "-c", (dir / "half.json").string(), "--seed", "1", "-o", (dir / "r").string()}).code == 2);

    c["prior"] = {{"c_beta", -1.0}};
    write(dir / "neg.json", c.dump());
    CHECK(cli({"fit", "-c", (dir / "neg.json").string(), "--seed", "1", "-o", (dir / "s").string()}).code == 2);

    // a design without censored-time information cannot center the prior automatically
    write(dir / "cens.csv", "time,event,exposure\n1,0,0\n2,0,1\n3,0,0\n4,0,1\n");
    write(dir / "cens.json", json{{"data", (dir / "cens.csv").string()}}.dump());
    const auto r = cli({"fit", "-c", (dir / "cens.json").string(), "--seed", "1", "-o", (dir / "t").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("a_beta") != std::string::npos);
}

TEST_CASE("simulate smoke run through the installed binary") {
    const auto dir = scratch("simulate");
    const json cfg = {{"scenario", 1},
                      {"n", 100},
                      {"replicates", 2},
                      {"nu", {0, 2}},
                      {"cohort_size", 200},
                      {"truth_n_mc", 1000000},
                      {"mcmc", {{"burn_in", 200}, {"iterations", 200}, {"thin", 20}}}};
    write(dir / "sim.json", cfg.dump());
    auto run = [&](const std::string& out) {
        const std::string cmd = std::string(RESQRL_CLI_PATH) + " simulate -c " + (dir / "sim.json").string() +
                                " --seed 4 -o " + (dir / out).string() + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    REQUIRE(run("a") == 0);
    REQUIRE(run("b") == 0);
    for (const char* f : {"metrics.csv", "estimates.csv", "manifest.json"})
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    const auto rows = lines_of(slurp(dir / "a" / "metrics.csv"));
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == "nu,rho,truth,truth_se,bias,rmse,coverage,replicates");
    CHECK(rows[1].rfind("0,0.3,", 0) == 0);
    CHECK(rows[4].rfind("2,0.6,", 0) == 0);
    const json m = json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(m.at("failures") == 0);
    CHECK(m.at("seed") == 4);

    const std::string missing = std::string(RESQRL_CLI_PATH) + " simulate -c " + (dir / "nope.json").string() +
                                " --seed 1 > /dev/null 2>&1";
    const int status = std::system(missing.c_str());
    CHECK(WEXITSTATUS(status) == 2);
}
