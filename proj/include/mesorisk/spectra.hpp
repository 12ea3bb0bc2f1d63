#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mesorisk/timeseries.hpp"

namespace mesorisk {

struct CorrelationMatrix {
    Eigen::MatrixXd entries;
    std::size_t n_obs = 0;
    std::vector<std::string> issuers;

    std::size_t n_series() const { return static_cast<std::size_t>(entries.rows()); }
    // Principal submatrix; n_obs is unchanged.
    CorrelationMatrix restrict_to(const std::vector<std::size_t>& members) const;
    // Sum of all entries, i.e. the variance of the summed standardized series.
    double total() const { return entries.sum(); }
};

struct MPBounds {
    double lambda_minus = 0.0;
    double lambda_plus = 0.0;

    bool contains(double lambda) const { return lambda_minus <= lambda && lambda <= lambda_plus; }
};

enum class EigenTag { Random, Group, Market, BelowBulk };

const char* to_string(EigenTag tag);

struct SpectralDecomposition {
    Eigen::VectorXd eigenvalues;   // descending
    Eigen::MatrixXd eigenvectors;  // column k pairs with eigenvalues(k)
    MPBounds bounds;
    std::optional<std::size_t> market_index;
    std::vector<EigenTag> tags;

    std::size_t size() const { return static_cast<std::size_t>(eigenvalues.size()); }
    std::size_t count(EigenTag tag) const;
};

enum class Component { Random, Group, Market };

struct DecomposeOptions {
    // Share of same-signed market eigenvector entries below which a warning
    // is raised.
    double market_sign_share = 0.95;
    // Treat the leading eigenvalue as market mode even when it sits inside
    // the noise bulk. Used for community-mode removal.
    bool force_leading_removal = false;
};

// Pearson correlation with the population (1/T) convention. Standardized
// input gives C = X'X / T directly; raw input is standardized first.
CorrelationMatrix correlation(const ReturnPanel& panel);

MPBounds mp_bounds(std::size_t n_series, std::size_t n_obs);

SpectralDecomposition decompose(const CorrelationMatrix& corr, const DecomposeOptions& options = {});
SpectralDecomposition decompose(const Eigen::MatrixXd& matrix, std::size_t n_obs,
                                const DecomposeOptions& options = {});

// Sum of lambda |v><v| over eigenpairs in the requested class. The group
// component also carries the below-bulk eigenpairs, so that
// random + group + market reconstructs the input.
Eigen::MatrixXd component(const SpectralDecomposition& dec, Component which);

// Matrix used for community detection: group eigenpairs, plus the below-bulk
// ones when include_below_bulk is set.
Eigen::MatrixXd filtered_matrix(const SpectralDecomposition& dec, bool include_below_bulk);

Eigen::MatrixXd spectral_sum(const SpectralDecomposition& dec, const std::vector<EigenTag>& tags);

struct ShuffleResult {
    Eigen::VectorXd eigenvalues;
    MPBounds bounds;
    double fraction_in_bulk = 0.0;
};

// Independently permutes each column (seeded), then recomputes the spectrum.
ShuffleResult shuffle_test(const ReturnPanel& panel, std::uint64_t seed);

// Marchenko-Pastur density at lambda for ratio q = N/T.
double mp_density(double lambda, std::size_t n_series, std::size_t n_obs);

}  // namespace mesorisk
