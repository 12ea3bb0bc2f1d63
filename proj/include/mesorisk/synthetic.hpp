#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mesorisk/community.hpp"
#include "mesorisk/risk_engine.hpp"
#include "mesorisk/timeseries.hpp"

// Generators for test and demo data with known structure.
namespace mesorisk::synthetic {

// Weekdays starting at start.
std::vector<Date> business_days(Date start, std::size_t count);

// T x N i.i.d. standard normal returns.
ReturnPanel gaussian_panel(std::size_t n_series, std::size_t n_obs, std::uint64_t seed);

// Rows drawn from N(0, corr) through a Cholesky factor.
ReturnPanel correlated_panel(const Eigen::MatrixXd& corr, std::size_t n_obs, std::uint64_t seed);

// Equicorrelated blocks: rho inside a block, 0 across.
Eigen::MatrixXd block_correlation(std::size_t n_blocks, std::size_t block_size, double rho);

struct PlantedSpec {
    std::size_t n_series = 60;
    std::size_t n_obs = 3000;
    std::size_t n_groups = 3;
    double group_loading = 0.6;
    double group_correlation = -0.3;  // between group factors
    double market_loading = 0.5;
};

struct PlantedPanel {
    ReturnPanel panel;
    Partition truth;
};

// x_i = m M + l G_g(i) + sqrt(1 - m^2 - l^2) e_i with contiguous equal groups.
PlantedPanel planted_panel(const PlantedSpec& spec, std::uint64_t seed);

struct ModelSpec {
    double beta = 0.5;            // systematic variance share of every issuer
    double global_weight = 0.8;   // weights of the systematic mix before normalisation
    double region_weight = 0.35;
    double sector_weight = 0.35;
};

// Returns from a global + region + sector factor model; meta must be present
// for every issuer.
ReturnPanel model_panel(const std::vector<std::string>& issuers, const std::vector<IssuerMeta>& meta,
                        std::size_t n_obs, const ModelSpec& spec, std::uint64_t seed);

// n issuers cycling through four regions and four sectors.
std::vector<IssuerMeta> cycled_meta(std::size_t n);
std::vector<std::string> numbered_ids(const std::string& prefix, std::size_t n);

// Spread levels base * exp(vol * cumulative returns), one row per date.
SpreadPanel spreads_from_returns(const ReturnPanel& returns, double base_bps = 100.0, double vol = 0.02);

// Long-format CSV date,issuer_id,spread_bps and issuer_id,region,sector,rating.
void write_spread_csv(std::ostream& out, const SpreadPanel& panel);
void write_meta_csv(std::ostream& out, const std::vector<std::string>& issuers, const std::vector<IssuerMeta>& meta);

// 36 sovereigns SOV01..SOV36 followed by 89 corporates CORP01..CORP89 with
// the rating histograms of the four schematic portfolios.
struct SchematicUniverse {
    std::vector<std::string> issuers;
    std::vector<IssuerMeta> meta;
    std::vector<IssuerClass> classes;
};

SchematicUniverse schematic_universe();

// 'A' sovereigns, 'B' corporates, 'C' both (equal weights), 'D' long
// financials against short non-financials.
Portfolio schematic_portfolio(char which);
std::vector<Portfolio> schematic_portfolios();

}  // namespace mesorisk::synthetic
