#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mesorisk/community.hpp"
#include "mesorisk/spectra.hpp"
#include "mesorisk/timeseries.hpp"

namespace mesorisk {

enum class FactorKind { Global, Industry, Region, Community, Subcommunity };

inline constexpr std::size_t kFactorKindCount = 5;

const char* to_string(FactorKind kind);

// Regression of a group factor on the global factor (no intercept).
struct FactorDiagnostics {
    double gamma = 0.0;
    double t_statistic = 0.0;  // H0: gamma = 1
    double p_value = 1.0;      // two-sided, Student t with T-1 dof
    double r_squared = 0.0;
    double residual_sd = 0.0;
    double factor_sd = 0.0;
    double global_sd = 0.0;
};

struct Factor {
    std::string name;  // e.g. "industry:Financials", "subcommunity:B/B3"
    FactorKind kind = FactorKind::Global;
    std::string group;
    std::vector<std::size_t> members;
    FactorDiagnostics diagnostics;
};

// Per-issuer group keys. Empty string means the issuer has no group of that kind.
struct GroupLabels {
    std::vector<std::string> industry;
    std::vector<std::string> region;
    std::vector<std::string> community;
    std::vector<std::string> subcommunity;
};

GroupLabels group_labels(const std::vector<IssuerMeta>& meta, std::size_t n_issuers,
                         const Partition* partition = nullptr, const Hierarchy* hierarchy = nullptr);
// From label paths like "B/B3": community "B", subcommunity the whole path.
void assign_communities(GroupLabels& labels, const std::vector<std::string>& label_paths);

struct FactorSet {
    std::vector<std::string> issuers;
    std::vector<Factor> factors;       // factors[0] is the global factor
    Eigen::MatrixXd series;            // T x K cross-sectional averages
    Eigen::MatrixXd residual_series;   // T x K; column 0 repeats the global series
    bool orthogonalized = false;
    // issuer_factor[i][kind] = factor index or -1
    std::vector<std::array<int, kFactorKindCount>> issuer_factor;

    std::size_t size() const { return factors.size(); }
    std::vector<std::string> names() const;
};

FactorSet build_factors(const ReturnPanel& panel, const GroupLabels& groups);
FactorSet build_factors(const ReturnPanel& panel, const std::vector<IssuerMeta>& meta,
                        const Partition* partition, const Hierarchy* hierarchy);

FactorSet orthogonalize(const FactorSet& factors);

enum class ModelVariant {
    M1_Global,
    M2_GlobalIndustry,
    M3_GlobalRegion,
    M4_GlobalRegionIndustry,
    M5_GlobalCommunity,
    M6_GlobalSubcommunity,
};

std::vector<ModelVariant> all_variants();
const char* to_string(ModelVariant v);
std::string describe(ModelVariant v);
ModelVariant parse_variant(std::string_view text);
// Group factor kinds the issuer regressions use besides the global factor.
std::vector<FactorKind> variant_kinds(ModelVariant v);

struct CalibratedModel {
    ModelVariant variant = ModelVariant::M1_Global;
    std::vector<std::string> issuers;
    std::vector<std::string> factor_names;  // global first, then residual factors
    Eigen::MatrixXd omega;                  // K x K factor covariance
    Eigen::MatrixXd alpha_hat;              // N x K raw regression loadings
    Eigen::MatrixXd alpha;                  // N x K, alpha_hat / psi
    Eigen::VectorXd beta;                   // clipped R^2
    Eigen::VectorXd r_squared;              // unclipped R^2
    Eigen::VectorXd psi;
    std::vector<std::string> group_path;

    std::size_t n_issuers() const { return issuers.size(); }
    std::size_t n_factors() const { return factor_names.size(); }
    std::optional<std::size_t> index_of(const std::string& issuer) const;
};

CalibratedModel calibrate(const ReturnPanel& panel, const FactorSet& factors, ModelVariant variant);

// rho_ij = (1 - beta_i) 1{i=j} + sqrt(beta_i beta_j) alpha_i' Omega alpha_j
Eigen::MatrixXd model_implied_correlations(const CalibratedModel& model);

struct Histogram {
    double lower = 0.0;
    double upper = 0.0;
    std::vector<std::size_t> counts;
    std::size_t below = 0;
    std::size_t above = 0;

    double bin_width() const { return (upper - lower) / static_cast<double>(counts.size()); }
};

Histogram make_histogram(const std::vector<double>& values, double lower, double upper, std::size_t bins);

struct CorrelationErrorReport {
    std::vector<double> differences;  // model - empirical, upper triangle row-major
    std::vector<double> empirical;
    Histogram difference_histogram;
    Histogram empirical_histogram;
    double mean = 0.0;
    double sd = 0.0;
    double mean_abs = 0.0;
    double max_abs = 0.0;
    double tail_mass = 0.0;  // share of |difference| > tail_threshold
    double tail_threshold = 0.2;
};

CorrelationErrorReport correlation_error_report(const CalibratedModel& model,
                                                const CorrelationMatrix& empirical,
                                                std::size_t bins = 40);

struct RSquaredSummary {
    double mean = 0.0;
    double sd = 0.0;
    double min = 0.0;
    double max = 0.0;
};

RSquaredSummary r_squared_summary(const CalibratedModel& model);

}  // namespace mesorisk
