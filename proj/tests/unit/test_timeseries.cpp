#include <doctest.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "mesorisk/error.hpp"
#include "mesorisk/log.hpp"
#include "mesorisk/timeseries.hpp"

using namespace mesorisk;

namespace {

std::string date_of(int day) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "2020-01-%02d", day);
    return buf;
}

// Long-format CSV with one row per (date, issuer) unless skipped.
std::string panel_csv(int n_dates, const std::vector<std::string>& ids,
                      const std::function<double(int, std::size_t)>& value,
                      const std::function<bool(int, std::size_t)>& skip = {}) {
    std::ostringstream s;
    s << "date,issuer_id,spread_bps\n";
    for (int d = 1; d <= n_dates; ++d)
        for (std::size_t j = 0; j < ids.size(); ++j)
            if (!skip || !skip(d, j)) s << date_of(d) << ',' << ids[j] << ',' << value(d, j) << '\n';
    return s.str();
}

SpreadPanel parse(const std::string& text, const LoadOptions& o = {}) {
    std::istringstream in(text);
    return parse_panel(in, o);
}

}  // namespace

TEST_CASE("well-formed panel is ingested as is") {
    const auto p = parse(panel_csv(10, {"X", "Y", "Z"}, [](int d, std::size_t j) { return 100.0 + d + 10.0 * j; }));
    CHECK(p.n_issuers() == 3);
    CHECK(p.n_dates() == 10);
    CHECK(p.values(3, 2) == doctest::Approx(124.0));
    CHECK(p.dropped.empty());
}

TEST_CASE("issuer missing half its dates is dropped and reported") {
    WarningCapture w;
    const auto p = parse(panel_csv(10, {"X", "Y"}, [](int, std::size_t) { return 50.0; },
                                   [](int d, std::size_t j) { return j == 1 && d % 2 == 0; }));
    REQUIRE(p.n_issuers() == 1);
    CHECK(p.issuers[0] == "X");
    REQUIRE(p.dropped.size() == 1);
    CHECK(p.dropped[0].issuer == "Y");
    CHECK(w.contains("Y"));
}

TEST_CASE("short gaps are forward-filled, long gaps drop the issuer") {
    LoadOptions o;
    o.max_missing_fraction = 0.5;
    o.max_fill_gap = 2;
    const auto p = parse(panel_csv(12, {"F", "G"}, [](int d, std::size_t) { return 10.0 * d; },
                                   [](int d, std::size_t j) {
                                       return (j == 0 && (d == 4 || d == 5)) || (j == 1 && d >= 6 && d <= 8);
                                   }),
                         o);
    REQUIRE(p.n_issuers() == 1);
    CHECK(p.issuers[0] == "F");
    CHECK(p.values(3, 0) == 30.0);
    CHECK(p.values(4, 0) == 30.0);
    CHECK(p.values(5, 0) == 60.0);
}

TEST_CASE("parse errors carry row numbers") {
    CHECK_THROWS_WITH_AS(parse("date,issuer_id,spread_bps\n2020-01-01,X,-3\n"), doctest::Contains("row 2"), DataError);
    CHECK_THROWS_WITH_AS(parse("date,issuer_id,spread_bps\n2020-01-02,X,3\n2020-01-01,X,4\n"),
                         doctest::Contains("row 3"), DataError);
    CHECK_THROWS_AS(parse("date,issuer,spread\n"), DataError);
    CHECK_THROWS_AS(parse("date,issuer_id,spread_bps\n2020-01-01,X,abc\n"), DataError);
    CHECK_THROWS_AS(parse("date,issuer_id,spread_bps\n2020-01-01,X,1\n2020-01-01,X,2\n"), DataError);
}

TEST_CASE("metadata keeps unknown labels and flags them") {
    std::istringstream in("issuer_id,region,sector,rating\nX,Europe,Financials,BBB\nY,Atlantis,Financials,\n");
    const auto recs = parse_metadata(in);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].second.region_known);
    CHECK(recs[0].second.rating == Rating::BBB);
    CHECK(recs[1].second.region == "Atlantis");
    CHECK_FALSE(recs[1].second.region_known);
    CHECK_FALSE(recs[1].second.rating.has_value());
}

TEST_CASE("log returns on a subsampled grid") {
    SUBCASE("constant series gives zero returns") {
        const auto p = parse(panel_csv(6, {"X"}, [](int, std::size_t) { return 80.0; }));
        CHECK(log_returns(p, Resolution::daily()).returns.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("two points give ln 2") {
        const auto p = parse(panel_csv(2, {"X"}, [](int d, std::size_t) { return 100.0 * d; }));
        const auto r = log_returns(p, Resolution::daily());
        REQUIRE(r.n_obs() == 1);
        CHECK(r.returns(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    }
    SUBCASE("2609 points at a monthly step give 124 returns") {
        SpreadPanel p;
        p.issuers = {"X"};
        p.values = Eigen::MatrixXd::Constant(2609, 1, 5.0);
        for (int i = 0; i < 2609; ++i)
            p.dates.push_back(Date{std::chrono::sys_days{std::chrono::year{2000} / 1 / 1} + std::chrono::days{i}});
        CHECK(log_returns(p, Resolution::monthly()).n_obs() == 124);
        CHECK(log_returns(p, Resolution::daily()).n_obs() == 2608);
    }
    SUBCASE("step-k return equals the sum of daily returns") {
        const auto p = parse(panel_csv(21, {"X", "Y"}, [](int d, std::size_t j) {
            return 100.0 + 7.0 * std::sin(d * (1.0 + j));
        }));
        const auto daily = log_returns(p, Resolution::daily());
        const auto weekly = log_returns(p, Resolution::weekly());
        REQUIRE(weekly.n_obs() == 4);
        for (Eigen::Index k = 0; k < 4; ++k)
            for (Eigen::Index j = 0; j < 2; ++j)
                CHECK(std::abs(weekly.returns(k, j) - daily.returns.block(5 * k, j, 5, 1).sum()) < 1e-12);
    }
    SUBCASE("fewer than two sampled points is an error") {
        const auto p = parse(panel_csv(3, {"X"}, [](int d, std::size_t) { return d; }));
        CHECK_THROWS_AS(log_returns(p, Resolution::weekly()), DataError);
    }
}

TEST_CASE("standardize") {
    ReturnPanel r;
    r.issuers = {"a", "b", "c"};
    r.returns.resize(2, 3);
    r.returns << 1, 0, 3, -1, 2, 3;
    SUBCASE("population convention") {
        r.returns.col(2) << 1, 5;
        const auto s = standardize(r);
        CHECK(s.standardized);
        CHECK(s.returns(0, 0) == 1.0);
        CHECK(s.returns(1, 0) == -1.0);
        CHECK(s.returns(0, 1) == -1.0);
        CHECK(s.returns(1, 1) == 1.0);
        const auto twice = standardize(s);
        CHECK((twice.returns - s.returns).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("zero variance names the issuer") {
        CHECK_THROWS_WITH_AS(standardize(r), doctest::Contains("'c'"), DataError);
    }
}

TEST_CASE("sliding windows") {
    auto panel_of = [](int t) {
        ReturnPanel r;
        r.issuers = {"x"};
        r.returns = Eigen::MatrixXd::Zero(t, 1);
        for (int i = 0; i < t; ++i)
            r.dates.push_back(Date{std::chrono::sys_days{std::chrono::year{2000} / 1 / 1} + std::chrono::days{i}});
        return r;
    };
    CHECK(windows(panel_of(10), 5).size() == 2);
    // 2608 = 20 * 126 + 88 and 88 is at least half a window, so it is kept.
    const auto w = windows(panel_of(2608), 126);
    CHECK(w.size() == 21);
    CHECK(w.back().n_obs() == 88);
    CHECK(windows(panel_of(2580), 126).size() == 20);  // remainder 60 < 63
    CHECK(windows(panel_of(70), 126).size() == 1);
    CHECK(windows(panel_of(60), 126).empty());
    CHECK_THROWS_AS(windows(panel_of(10), 1), UsageError);
}

TEST_CASE("resolutions") {
    const auto all = canonical_resolutions();
    REQUIRE(all.size() == 5);
    std::vector<int> steps;
    for (const auto& r : all) steps.push_back(r.step);
    CHECK(steps == std::vector<int>{1, 2, 5, 10, 21});
    CHECK(parse_resolution("1w") == Resolution::weekly());
    CHECK(parse_resolution("1m").label() == "1m");
    CHECK_THROWS(parse_resolution("fortnight"));
}
