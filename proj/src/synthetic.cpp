#include "mesorisk/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include <Eigen/Cholesky>

#include "mesorisk/error.hpp"
#include "mesorisk/matrix_io.hpp"
#include "mesorisk/rng.hpp"

namespace mesorisk::synthetic {

namespace {

Eigen::MatrixXd normals(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        CounterStream rng(seed, static_cast<std::uint64_t>(j));
        for (Eigen::Index t = 0; t < out.rows(); ++t) out(t, j) = rng.normal();
    }
    return out;
}

ReturnPanel wrap(Eigen::MatrixXd returns, std::vector<std::string> issuers) {
    ReturnPanel p;
    p.dates = business_days(Date{std::chrono::year{2010}, std::chrono::January, std::chrono::day{4}},
                            static_cast<std::size_t>(returns.rows()));
    p.issuers = std::move(issuers);
    p.returns = std::move(returns);
    return p;
}

IssuerMeta make_meta(std::string region, std::string sector, std::optional<Rating> rating = std::nullopt) {
    IssuerMeta m;
    m.present = true;
    m.region_known = parse_region(region).has_value();
    m.sector_known = parse_sector(sector).has_value();
    m.region = std::move(region);
    m.sector = std::move(sector);
    m.rating = rating;
    return m;
}

}  // namespace

std::vector<Date> business_days(Date start, std::size_t count) {
    std::vector<Date> out;
    std::chrono::sys_days d{start};
    while (out.size() < count) {
        const std::chrono::weekday wd{d};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) out.emplace_back(d);
        d += std::chrono::days{1};
    }
    return out;
}

std::vector<std::string> numbered_ids(const std::string& prefix, std::size_t n) {
    const int width = n >= 100 ? 3 : 2;
    std::vector<std::string> out;
    for (std::size_t i = 1; i <= n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%0*zu", width, i);
        out.push_back(prefix + buf);
    }
    return out;
}

ReturnPanel gaussian_panel(std::size_t n_series, std::size_t n_obs, std::uint64_t seed) {
    return wrap(normals(n_obs, n_series, derive_seed(seed, "gaussian_panel")), numbered_ids("S", n_series));
}

ReturnPanel correlated_panel(const Eigen::MatrixXd& corr, std::size_t n_obs, std::uint64_t seed) {
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success) throw NumericalError("correlation matrix is not positive definite");
    const auto n = static_cast<std::size_t>(corr.rows());
    Eigen::MatrixXd z = normals(n_obs, n, derive_seed(seed, "correlated_panel"));
    Eigen::MatrixXd x = z * llt.matrixU();
    return wrap(std::move(x), numbered_ids("S", n));
}

Eigen::MatrixXd block_correlation(std::size_t n_blocks, std::size_t block_size, double rho) {
    const auto n = static_cast<Eigen::Index>(n_blocks * block_size);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (static_cast<std::size_t>(i) / block_size == static_cast<std::size_t>(j) / block_size)
                c(i, j) = i == j ? 1.0 : rho;
    return c;
}

PlantedPanel planted_panel(const PlantedSpec& spec, std::uint64_t seed) {
    const double m = spec.market_loading;
    const double l = spec.group_loading;
    if (m * m + l * l >= 1.0) throw UsageError("market and group loadings leave no idiosyncratic variance");
    if (spec.n_groups == 0 || spec.n_series < spec.n_groups) throw UsageError("bad group count");
    const auto g = static_cast<Eigen::Index>(spec.n_groups);
    Eigen::MatrixXd gc = Eigen::MatrixXd::Constant(g, g, spec.group_correlation);
    gc.diagonal().setOnes();
    Eigen::LLT<Eigen::MatrixXd> llt(gc);
    if (llt.info() != Eigen::Success) throw UsageError("group factor correlation is not positive definite");

    const std::uint64_t s = derive_seed(seed, "planted_panel");
    const Eigen::MatrixXd market = normals(spec.n_obs, 1, derive_seed(s, "market"));
    const Eigen::MatrixXd groups = normals(spec.n_obs, spec.n_groups, derive_seed(s, "groups")) * llt.matrixU();
    const Eigen::MatrixXd noise = normals(spec.n_obs, spec.n_series, derive_seed(s, "noise"));

    std::vector<int> labels(spec.n_series);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(spec.n_obs), static_cast<Eigen::Index>(spec.n_series));
    const double idio = std::sqrt(1.0 - m * m - l * l);
    for (std::size_t i = 0; i < spec.n_series; ++i) {
        labels[i] = static_cast<int>(i * spec.n_groups / spec.n_series);
        const auto col = static_cast<Eigen::Index>(i);
        x.col(col) = m * market.col(0) + l * groups.col(labels[i]) + idio * noise.col(col);
    }
    return {wrap(std::move(x), numbered_ids("S", spec.n_series)), Partition::from_labels(labels)};
}

std::vector<IssuerMeta> cycled_meta(std::size_t n) {
    const char* regions[] = {"Europe", "North America", "Asia", "Latin America"};
    const char* sectors[] = {"Financials", "Industrials", "Energy", "Utilities"};
    std::vector<IssuerMeta> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(make_meta(regions[i % 4], sectors[(i / 4) % 4]));
    return out;
}

ReturnPanel model_panel(const std::vector<std::string>& issuers, const std::vector<IssuerMeta>& meta,
                        std::size_t n_obs, const ModelSpec& spec, std::uint64_t seed) {
    const std::size_t n = issuers.size();
    if (meta.size() != n) throw UsageError("metadata does not match issuer count");
    if (!(spec.beta >= 0.0 && spec.beta <= 1.0)) throw UsageError("beta must lie in [0, 1]");
    std::map<std::string, Eigen::Index> region_index, sector_index;
    for (const auto& m : meta) {
        if (!m.present) throw UsageError("model panel needs metadata for every issuer");
        region_index.emplace(m.region, 0);
        sector_index.emplace(m.sector, 0);
    }
    Eigen::Index k = 0;
    for (auto& [name, idx] : region_index) idx = k++;
    for (auto& [name, idx] : sector_index) idx = k++;

    const std::uint64_t s = derive_seed(seed, "model_panel");
    const Eigen::MatrixXd global = normals(n_obs, 1, derive_seed(s, "global"));
    const Eigen::MatrixXd groups = normals(n_obs, static_cast<std::size_t>(k), derive_seed(s, "groups"));
    const Eigen::MatrixXd noise = normals(n_obs, n, derive_seed(s, "noise"));

    // The three factors are independent, so the mix has unit variance after
    // dividing by the weight norm.
    const double norm = std::sqrt(spec.global_weight * spec.global_weight + spec.region_weight * spec.region_weight +
                                  spec.sector_weight * spec.sector_weight);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n_obs), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        const Eigen::VectorXd systematic = (spec.global_weight * global.col(0) +
                                            spec.region_weight * groups.col(region_index[meta[i].region]) +
                                            spec.sector_weight * groups.col(sector_index[meta[i].sector])) /
                                           norm;
        x.col(col) = std::sqrt(spec.beta) * systematic + std::sqrt(1.0 - spec.beta) * noise.col(col);
    }
    ReturnPanel p = wrap(std::move(x), issuers);
    p.meta = meta;
    return p;
}

SpreadPanel spreads_from_returns(const ReturnPanel& returns, double base_bps, double vol) {
    SpreadPanel out;
    const auto t = returns.returns.rows();
    const auto n = returns.returns.cols();
    out.issuers = returns.issuers;
    out.meta = returns.meta;
    // One extra leading date carries the starting level.
    out.dates = business_days(returns.dates.empty() ? Date{std::chrono::year{2010}, std::chrono::January,
                                                           std::chrono::day{1}}
                                                    : returns.dates.front(),
                              static_cast<std::size_t>(t) + 1);
    out.values.resize(t + 1, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double level = std::log(base_bps);
        out.values(0, j) = base_bps;
        for (Eigen::Index r = 0; r < t; ++r) {
            level += vol * returns.returns(r, j);
            out.values(r + 1, j) = std::exp(level);
        }
    }
    return out;
}

void write_spread_csv(std::ostream& out, const SpreadPanel& panel) {
    out << "date,issuer_id,spread_bps\n";
    for (std::size_t r = 0; r < panel.n_dates(); ++r) {
        const std::string date = format_iso_date(panel.dates[r]);
        for (std::size_t j = 0; j < panel.n_issuers(); ++j)
            out << date << ',' << panel.issuers[j] << ','
                << format_double(panel.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j))) << '\n';
    }
}

void write_meta_csv(std::ostream& out, const std::vector<std::string>& issuers, const std::vector<IssuerMeta>& meta) {
    out << "issuer_id,region,sector,rating\n";
    for (std::size_t i = 0; i < issuers.size(); ++i) {
        out << issuers[i] << ',' << meta[i].region << ',' << meta[i].sector << ',';
        if (meta[i].rating) out << to_string(*meta[i].rating);
        out << '\n';
    }
}

namespace {

constexpr std::size_t kSovereigns = 36;
constexpr std::size_t kCorporates = 89;

Rating sovereign_rating(std::size_t k) {  // k is 1-based
    if (k <= 4) return Rating::AAA;
    if (k <= 11) return Rating::AA;
    if (k <= 17) return Rating::A;
    if (k <= 31) return Rating::BBB;
    return Rating::BB;
}

Rating corporate_rating(std::size_t k) {
    if (k <= 6) return Rating::AA;
    if (k <= 38) return Rating::A;
    return Rating::BBB;
}

// Each rating bucket of the long-short portfolio: 3 AA, 15 A, 4 BBB.
bool financial(std::size_t k) { return k <= 3 || (k >= 7 && k <= 21) || (k >= 39 && k <= 42); }
bool short_leg(std::size_t k) { return (k >= 4 && k <= 6) || (k >= 22 && k <= 36) || (k >= 43 && k <= 46); }

}  // namespace

SchematicUniverse schematic_universe() {
    SchematicUniverse u;
    const char* sov_regions[] = {"Europe", "Europe", "Latin America", "Asia", "Eastern Europe", "Middle East"};
    const char* corp_regions[] = {"Europe", "North America", "Europe", "Asia"};
    const char* non_fin[] = {"Industrials", "Energy", "Utilities", "Consumer Goods", "Telecommunications Services",
                             "Basic Materials"};
    for (std::size_t k = 1; k <= kSovereigns; ++k) {
        u.issuers.push_back(numbered_ids("SOV", kSovereigns)[k - 1]);
        u.meta.push_back(make_meta(sov_regions[(k - 1) % 6], "Government", sovereign_rating(k)));
        u.classes.push_back(IssuerClass::Sovereign);
    }
    const auto corp_ids = numbered_ids("CORP", kCorporates);
    for (std::size_t k = 1; k <= kCorporates; ++k) {
        u.issuers.push_back(corp_ids[k - 1]);
        const std::string sector = financial(k) ? "Financials" : non_fin[(k - 1) % 6];
        u.meta.push_back(make_meta(corp_regions[(k - 1) % 4], sector, corporate_rating(k)));
        u.classes.push_back(IssuerClass::Corporate);
    }
    return u;
}

Portfolio schematic_portfolio(char which) {
    const SchematicUniverse u = schematic_universe();
    Portfolio p;
    p.name = std::string("portfolio_") + which;
    auto add = [&](std::size_t i, double exposure) {
        Position pos;
        pos.issuer_id = u.issuers[i];
        pos.exposure = exposure;
        pos.lgd = 1.0;
        pos.rating = u.meta[i].rating;
        pos.issuer_class = u.classes[i];
        p.positions.push_back(std::move(pos));
    };
    switch (which) {
        case 'A':
            for (std::size_t i = 0; i < kSovereigns; ++i) add(i, 1.0 / kSovereigns);
            break;
        case 'B':
            for (std::size_t i = 0; i < kCorporates; ++i) add(kSovereigns + i, 1.0 / kCorporates);
            break;
        case 'C':
            for (std::size_t i = 0; i < u.issuers.size(); ++i) add(i, 1.0 / static_cast<double>(u.issuers.size()));
            break;
        case 'D': {
            for (std::size_t k = 1; k <= kCorporates; ++k)
                if (financial(k)) add(kSovereigns + k - 1, 1.0 / 22.0);
            for (std::size_t k = 1; k <= kCorporates; ++k)
                if (short_leg(k)) add(kSovereigns + k - 1, -1.0 / 22.0);
            break;
        }
        default:
            throw UsageError(std::string("unknown schematic portfolio '") + which + "'");
    }
    p.kind = infer_kind(p.positions);
    return p;
}

std::vector<Portfolio> schematic_portfolios() {
    return {schematic_portfolio('A'), schematic_portfolio('B'), schematic_portfolio('C'), schematic_portfolio('D')};
}

}  // namespace mesorisk::synthetic
