// Drives the mesorisk executable end to end on synthetic data.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path work_root() {
    const char* w = std::getenv("MESORISK_WORK");
    return w ? fs::path(w) : fs::temp_directory_path() / "mesorisk_cli_tests";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Result run(const std::string& args) {
    const char* cli = std::getenv("MESORISK_CLI");
    REQUIRE_MESSAGE(cli != nullptr, "MESORISK_CLI is not set");
    fs::create_directories(work_root());
    const fs::path out = work_root() / "stdout.txt";
    const fs::path err = work_root() / "stderr.txt";
    const std::string cmd = std::string("\"") + cli + "\" " + args + " > \"" + out.string() + "\" 2> \"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

// Fresh directory under the work root.
fs::path dir(const std::string& name) {
    const fs::path d = work_root() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// Synthetic data of the given kind, generated once per test run.
fs::path synth(const std::string& kind, const std::string& extra = "") {
    const fs::path d = work_root() / ("synth_" + kind);
    if (!fs::exists(d / "manifest_synth.json")) {
        fs::remove_all(d);
        const auto r = run("synth --kind " + kind + " --seed 7 --out-dir " + q(d) + " " + extra);
        REQUIRE_MESSAGE(r.code == 0, r.err);
    }
    return d;
}

std::vector<std::string> csv_rows(const fs::path& p) {
    std::vector<std::string> rows;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) rows.push_back(line);
    return rows;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string f; std::getline(in, f, ',');) out.push_back(f);
    return out;
}

// Every regular file in a directory, by name.
std::map<std::string, std::string> contents(const fs::path& d) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(d))
        if (e.is_regular_file()) out[e.path().filename().string()] = slurp(e.path());
    return out;
}

}  // namespace

TEST_CASE("missing input file exits 2 and names the path") {
    const auto out = dir("missing");
    const auto r = run("spectrum --panel " + q(out / "nope.csv") + " --out-dir " + q(out));
    CHECK(r.code == 2);
    CHECK(r.err.find("nope.csv") != std::string::npos);
}

TEST_CASE("usage errors") {
    CHECK(run("--version").code == 0);
    CHECK(run("spectrum --no-such-option 3").code == 2);
    CHECK(run("spectrum --out-dir " + q(dir("nopanel"))).code == 2);
    const auto d = synth("noise");
    const auto r = run("spectrum --panel " + q(d / "panel.csv") + " --resolution 3q --out-dir " + q(dir("badres")));
    CHECK(r.code == 2);
}

TEST_CASE("malformed panel exits 3") {
    const auto d = dir("malformed");
    std::ofstream(d / "panel.csv") << "date,issuer_id,spread_bps\n2020-01-01,X,-5\n";
    const auto r = run("spectrum --panel " + q(d / "panel.csv") + " --out-dir " + q(d));
    CHECK(r.code == 3);
    CHECK(r.err.find("row 2") != std::string::npos);
}

TEST_CASE("noise panel: spectrum inside the bulk and no structure") {
    const auto d = synth("noise");
    const auto out = dir("noise_run");
    auto r = run("spectrum --panel " + q(d / "panel.csv") + " --out-dir " + q(out));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("bulk fraction") != std::string::npos);
    const auto s = read_json(out / "spectrum.json");
    CHECK(s["fraction_in_bulk"].get<double>() >= 0.99);
    CHECK(s["shuffle_fraction_in_bulk"].get<double>() >= 0.99);
    CHECK(csv_rows(out / "eigenvalues.csv").size() == 201);
    CHECK(csv_rows(out / "density.csv").size() == 61);

    r = run("detect --panel " + q(d / "panel.csv") + " --out-dir " + q(out));
    REQUIRE(r.code == 0);
    const auto p = read_json(out / "partition.json");
    CHECK(p["status"] == "no_mesoscopic_structure");
    CHECK(read_json(out / "manifest_detect.json")["correlation_source"] == "spectrum");
}

TEST_CASE("two-block panel: two eigenvalues above the bulk") {
    const auto d = synth("two-block");
    const auto out = dir("two_block_run");
    REQUIRE(run("spectrum --panel " + q(d / "panel.csv") + " --out-dir " + q(out)).code == 0);
    const auto s = read_json(out / "spectrum.json");
    CHECK(s["n_above_bulk"] == 2);
    CHECK(s["market_index"] == 0);
}

TEST_CASE("planted panel: three communities, metadata note") {
    const auto d = synth("planted");
    const auto out = dir("planted_run");
    const auto r = run("detect --panel " + q(d / "panel.csv") + " --out-dir " + q(out));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("note: no metadata") != std::string::npos);
    const auto p = read_json(out / "partition.json");
    CHECK(p["status"] == "ok");
    CHECK(p["n_communities"] == 3);
    CHECK(p["composition"].is_null());
    CHECK_FALSE(fs::exists(out / "composition.csv"));
    CHECK(read_json(out / "manifest_detect.json")["correlation_source"] == "computed");
    CHECK(fs::exists(out / "hierarchy.json"));
}

TEST_CASE("metadata gives composition tables") {
    const auto d = synth("model");
    const auto out = dir("model_detect");
    REQUIRE(run("detect --panel " + q(d / "panel.csv") + " --meta " + q(d / "meta.csv") + " --out-dir " + q(out)).code == 0);
    CHECK(fs::exists(out / "composition.csv"));
    CHECK_FALSE(read_json(out / "partition.json")["composition"].is_null());
}

TEST_CASE("stability outputs") {
    const auto d = synth("planted");
    auto out = dir("stability_multi");
    auto r = run("stability --panel " + q(d / "panel.csv") + " --out-dir " + q(out));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto rows = csv_rows(out / "vi_matrix.csv");
    REQUIRE(rows.size() == 6);
    CHECK(split(rows[1]).size() == 6);
    const auto s = read_json(out / "stability.json");
    CHECK(s["labels"].size() == 5);
    CHECK(s["max_pairwise_vi"].get<double>() <= 0.05);

    out = dir("stability_single");
    r = run("stability --panel " + q(d / "panel.csv") + " --mode sliding --window 5000 --out-dir " + q(out));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(csv_rows(out / "vi_matrix.csv").size() == 2);
    CHECK(read_json(out / "stability.json")["max_pairwise_vi"] == 0.0);
}

TEST_CASE("calibration recovers the generating beta") {
    const auto d = synth("one-factor");
    const auto out = dir("calibrate_one_factor");
    const auto r = run("calibrate --panel " + q(d / "panel.csv") + " --meta " + q(d / "meta.csv") +
                       " --variant M1 --calibration-resolution 1d --out-dir " + q(out));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto m = read_json(out / "calibration_M1.json");
    double sum = 0.0;
    for (const auto& b : m["beta"]) sum += b.get<double>();
    CHECK(std::abs(sum / static_cast<double>(m["beta"].size()) - 0.5) <= 0.05);
}

TEST_CASE("community variants need a hierarchy") {
    const auto d = synth("model");
    const auto out = dir("calibrate_m6");
    const auto r = run("calibrate --panel " + q(d / "panel.csv") + " --variant M6 --out-dir " + q(out));
    CHECK(r.code == 2);
    CHECK(r.err.find("--hierarchy") != std::string::npos);
}

TEST_CASE("all six variants give six calibration documents") {
    const auto d = synth("model");
    const auto out = dir("calibrate_all");
    REQUIRE(run("detect --panel " + q(d / "panel.csv") + " --out-dir " + q(out)).code == 0);
    const auto r = run("calibrate --panel " + q(d / "panel.csv") + " --meta " + q(d / "meta.csv") + " --hierarchy " +
                       q(out / "hierarchy.json") + " --out-dir " + q(out));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (int v = 1; v <= 6; ++v) CHECK(fs::exists(out / ("calibration_M" + std::to_string(v) + ".json")));
    CHECK(csv_rows(out / "r_squared_summary.csv").size() == 7);
}

TEST_CASE("binomial oracle portfolio") {
    const auto d = synth("binomial");
    const auto out = dir("binomial_run");
    const auto r = run("simulate --calibration-dir " + q(d) + " --portfolio " + q(d / "portfolio_binomial.csv") +
                       " --paths 200000 --out-dir " + q(out));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto rows = csv_rows(out / "quantiles.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == "portfolio,kind,model,var_0.99,var_0.995,var_0.999,tail_ratio,normal_ratio,mean_loss");
    const auto f = split(rows[1]);
    // Binomial(50, 0.05) inf-quantiles 7, 7 and 8 defaults.
    CHECK(std::stod(f[3]) == 7.0 / 50.0);
    CHECK(std::stod(f[4]) == 7.0 / 50.0);
    CHECK(std::stod(f[5]) == 8.0 / 50.0);
}

TEST_CASE("schematic portfolios, long-short constraint and replay") {
    const auto d = synth("universe");
    const auto cal = dir("universe_cal");
    REQUIRE(run("calibrate --panel " + q(d / "panel.csv") + " --meta " + q(d / "meta.csv") + " --variant M1,M3 --out-dir " +
                q(cal)).code == 0);

    const auto a = dir("universe_sim_a");
    const auto b = dir("universe_sim_b");
    const std::string common = "simulate --calibration-dir " + q(cal) + " --paths 20000 --seed 3";
    REQUIRE(run(common + " --out-dir " + q(a)).code == 0);
    REQUIRE(run(common + " --threads 3 --out-dir " + q(b)).code == 0);
    CHECK(contents(a) == contents(b));

    const auto m = read_json(a / "manifest_simulate.json");
    REQUIRE(m["portfolios"].size() == 4);
    const auto& pd = m["portfolios"][3];
    CHECK(pd["name"] == "portfolio_D");
    CHECK(pd["kind"] == "long_short");
    CHECK(std::abs(pd["exposure_sum"].get<double>()) < 1e-12);
    CHECK(pd["exposure_constraint"] == "sum = 0");
    CHECK(m["inputs"].contains("calibration_M1"));

    const auto c = dir("universe_sim_c");
    REQUIRE(run("simulate --calibration-dir " + q(cal) + " --paths 20000 --seed 4 --out-dir " + q(c)).code == 0);
    CHECK(slurp(c / "quantiles.csv") != slurp(a / "quantiles.csv"));
}

TEST_CASE("config file with command-line precedence") {
    const auto d = synth("binomial");
    const auto out = dir("config_run");
    std::ofstream(out / "run.ini") << "seed = 5\npaths = 1000\ncalibration-dir = " << d.string() << "\n";
    const auto r = run("simulate --config " + q(out / "run.ini") + " --paths 2000 --portfolio " +
                       q(d / "portfolio_binomial.csv") + " --out-dir " + q(out));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto m = read_json(out / "manifest_simulate.json");
    CHECK(m["seed"] == 5);
    CHECK(m["config"]["paths"] == 2000);
    CHECK(m["n_paths"] == 2000);

    std::ofstream(out / "bad.ini") << "no_such_key = 1\n";
    CHECK(run("simulate --config " + q(out / "bad.ini") + " --out-dir " + q(out)).code == 2);
}
