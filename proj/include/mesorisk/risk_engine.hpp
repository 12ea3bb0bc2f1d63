#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mesorisk/factor_model.hpp"
#include "mesorisk/timeseries.hpp"

namespace mesorisk {

enum class IssuerClass { Corporate, Sovereign };

const char* to_string(IssuerClass c);
IssuerClass parse_issuer_class(std::string_view text);

// Annual default probabilities per rating, stored as fractions.
struct RatingPDTable {
    std::array<std::array<double, 2>, kRatingCount> raw{};  // [rating][class]
    double floor = 0.0003;

    // Historical default rates used by default (corporate / sovereign).
    static RatingPDTable historical();
};

double pd_lookup(Rating rating, IssuerClass issuer_class, const RatingPDTable& table = RatingPDTable::historical());

double normal_cdf(double x);
double normal_quantile(double p);

// d = Phi^-1(pd), pd in (0, 1).
double default_threshold(double pd);

struct Position {
    std::string issuer_id;
    double exposure = 0.0;
    double lgd = 1.0;
    std::optional<Rating> rating;
    std::optional<double> pd;  // overrides the rating when set
    IssuerClass issuer_class = IssuerClass::Corporate;

    double resolved_pd(const RatingPDTable& table) const;
};

enum class PortfolioKind { LongOnly, LongShort, Unconstrained };

const char* to_string(PortfolioKind k);

struct Portfolio {
    std::string name;
    std::vector<Position> positions;
    PortfolioKind kind = PortfolioKind::Unconstrained;

    std::size_t size() const { return positions.size(); }
    double exposure_sum() const;
    // Long-only: sum of exposures is 1; long-short: it is 0 (both within 1e-12).
    void validate(const RatingPDTable& table = RatingPDTable::historical()) const;
};

// Kind inferred from the exposures: all non-negative summing to 1 is
// long-only, summing to 0 is long-short, anything else unconstrained.
PortfolioKind infer_kind(const std::vector<Position>& positions);

// CSV with header issuer_id,exposure,lgd,rating_or_pd,class.
Portfolio read_portfolio_csv(std::istream& in, const std::string& name = "");
Portfolio read_portfolio_csv(const std::filesystem::path& path);
void write_portfolio_csv(std::ostream& out, const Portfolio& portfolio);
void write_portfolio_csv(const std::filesystem::path& path, const Portfolio& portfolio);

struct LossDistribution {
    std::vector<double> losses;  // ascending
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    ModelVariant model_variant = ModelVariant::M1_Global;
};

struct SimulationOptions {
    unsigned threads = 1;
    RatingPDTable table = RatingPDTable::historical();
};

// Square root S with S S^T = omega from the symmetric eigendecomposition;
// negative eigenvalues are clipped at zero.
Eigen::MatrixXd covariance_sqrt(const Eigen::MatrixXd& omega);

LossDistribution simulate(const Portfolio& portfolio, const CalibratedModel& model, std::size_t n_paths,
                          std::uint64_t seed, const SimulationOptions& options = {});

// inf{l : P(L <= l) >= alpha}, the order statistic at ceil(alpha n).
double var(const LossDistribution& dist, double alpha);
double var(const std::vector<double>& sorted_losses, double alpha);

// Large-portfolio single-factor loss quantile.
double vasicek_var(double p, double beta, double alpha);

inline const std::vector<double> kReportAlphas = {0.99, 0.995, 0.999};

double normal_tail_ratio(double alpha_high = 0.999, double alpha_low = 0.99);

struct QuantileRow {
    ModelVariant variant = ModelVariant::M1_Global;
    std::vector<double> var;
    double tail_ratio = 0.0;  // VaR at the largest alpha over VaR at the smallest
    double mean_loss = 0.0;
};

struct QuantileReport {
    std::string portfolio;
    std::vector<double> alphas;
    std::vector<QuantileRow> rows;
    double normal_ratio = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
};

double tail_ratio(double var_high, double var_low);

QuantileReport quantile_report(const Portfolio& portfolio, const std::vector<CalibratedModel>& models,
                               const std::vector<double>& alphas, std::size_t n_paths, std::uint64_t seed,
                               const SimulationOptions& options = {});

// Sample correlation of n_paths simulated creditworthiness vectors X.
Eigen::MatrixXd simulated_correlation(const CalibratedModel& model, std::size_t n_paths, std::uint64_t seed);

}  // namespace mesorisk
