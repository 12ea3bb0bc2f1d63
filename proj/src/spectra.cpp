#include "mesorisk/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mesorisk/error.hpp"
#include "mesorisk/log.hpp"
#include "mesorisk/rng.hpp"

namespace mesorisk {

const char* to_string(EigenTag tag) {
    switch (tag) {
        case EigenTag::Random: return "random";
        case EigenTag::Group: return "group";
        case EigenTag::Market: return "market";
        case EigenTag::BelowBulk: return "below_bulk";
    }
    return "?";
}

CorrelationMatrix CorrelationMatrix::restrict_to(const std::vector<std::size_t>& members) const {
    CorrelationMatrix out;
    out.n_obs = n_obs;
    const auto n = static_cast<Eigen::Index>(members.size());
    out.entries.resize(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b)
            out.entries(a, b) = entries(static_cast<Eigen::Index>(members[static_cast<std::size_t>(a)]),
                                        static_cast<Eigen::Index>(members[static_cast<std::size_t>(b)]));
        if (!issuers.empty()) out.issuers.push_back(issuers[members[static_cast<std::size_t>(a)]]);
    }
    return out;
}

std::size_t SpectralDecomposition::count(EigenTag tag) const {
    return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), tag));
}

CorrelationMatrix correlation(const ReturnPanel& panel) {
    if (panel.n_obs() < 2) throw DataError("correlation needs at least 2 observations");
    const ReturnPanel std_panel = panel.standardized ? panel : standardize(panel);
    const auto& x = std_panel.returns;
    CorrelationMatrix out;
    out.n_obs = panel.n_obs();
    out.issuers = panel.issuers;
    out.entries = (x.transpose() * x) / static_cast<double>(x.rows());
    out.entries = 0.5 * (out.entries + out.entries.transpose()).eval();
    out.entries = out.entries.cwiseMax(-1.0).cwiseMin(1.0);
    out.entries.diagonal().setOnes();
    return out;
}

MPBounds mp_bounds(std::size_t n_series, std::size_t n_obs) {
    if (n_series == 0 || n_obs == 0)
        throw UsageError("Marchenko-Pastur bounds need positive N and T");
    if (n_obs <= n_series)
        warn("T=" + std::to_string(n_obs) + " does not exceed N=" + std::to_string(n_series) +
             "; Marchenko-Pastur bounds outside their usual regime");
    const double root = std::sqrt(static_cast<double>(n_series) / static_cast<double>(n_obs));
    return {(1.0 - root) * (1.0 - root), (1.0 + root) * (1.0 + root)};
}

double mp_density(double lambda, std::size_t n_series, std::size_t n_obs) {
    const MPBounds b = mp_bounds(n_series, n_obs);
    if (lambda <= 0.0 || !b.contains(lambda)) return 0.0;
    const double ratio = static_cast<double>(n_obs) / static_cast<double>(n_series);
    return ratio * std::sqrt((b.lambda_plus - lambda) * (lambda - b.lambda_minus)) /
           (2.0 * std::numbers::pi * lambda);
}

SpectralDecomposition decompose(const CorrelationMatrix& corr, const DecomposeOptions& options) {
    return decompose(corr.entries, corr.n_obs, options);
}

SpectralDecomposition decompose(const Eigen::MatrixXd& matrix, std::size_t n_obs,
                                const DecomposeOptions& options) {
    const auto n = matrix.rows();
    if (n == 0 || matrix.cols() != n) throw UsageError("decompose needs a non-empty square matrix");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix);
    if (solver.info() != Eigen::Success) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(matrix);
        const auto& s = svd.singularValues();
        std::ostringstream msg;
        msg << "symmetric eigensolver failed (N=" << n << ", singular value range ["
            << s(s.size() - 1) << ", " << s(0) << "])";
        throw NumericalError(msg.str());
    }

    SpectralDecomposition dec;
    dec.eigenvalues = solver.eigenvalues().reverse();
    dec.eigenvectors = solver.eigenvectors().rowwise().reverse();
    dec.bounds = mp_bounds(static_cast<std::size_t>(n), n_obs);
    dec.tags.resize(static_cast<std::size_t>(n));

    // Fix signs so each eigenvector has a non-negative entry sum.
    for (Eigen::Index k = 0; k < n; ++k)
        if (dec.eigenvectors.col(k).sum() < 0.0) dec.eigenvectors.col(k) *= -1.0;

    if (dec.eigenvalues(0) > dec.bounds.lambda_plus || options.force_leading_removal) {
        dec.market_index = 0;
        const auto v = dec.eigenvectors.col(0);
        const auto positive = (v.array() > 0.0).count();
        const auto negative = (v.array() < 0.0).count();
        if (negative > positive) dec.eigenvectors.col(0) *= -1.0;
        const double share = static_cast<double>(std::max(positive, negative)) / static_cast<double>(n);
        if (share < options.market_sign_share && !options.force_leading_removal) {
            std::ostringstream msg;
            msg << "leading eigenvector has only " << share * 100.0
                << "% same-signed entries; treating it as the market mode anyway";
            warn(msg.str());
        }
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        const double lambda = dec.eigenvalues(k);
        auto& tag = dec.tags[static_cast<std::size_t>(k)];
        if (dec.market_index && static_cast<std::size_t>(k) == *dec.market_index)
            tag = EigenTag::Market;
        else if (lambda > dec.bounds.lambda_plus)
            tag = EigenTag::Group;
        else if (lambda < dec.bounds.lambda_minus)
            tag = EigenTag::BelowBulk;
        else
            tag = EigenTag::Random;
    }
    return dec;
}

Eigen::MatrixXd spectral_sum(const SpectralDecomposition& dec, const std::vector<EigenTag>& tags) {
    const auto n = dec.eigenvalues.size();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        if (std::find(tags.begin(), tags.end(), dec.tags[static_cast<std::size_t>(k)]) == tags.end())
            continue;
        const auto v = dec.eigenvectors.col(k);
        out.noalias() += dec.eigenvalues(k) * v * v.transpose();
    }
    return out;
}

Eigen::MatrixXd component(const SpectralDecomposition& dec, Component which) {
    switch (which) {
        case Component::Random: return spectral_sum(dec, {EigenTag::Random});
        case Component::Group: return spectral_sum(dec, {EigenTag::Group, EigenTag::BelowBulk});
        case Component::Market: return spectral_sum(dec, {EigenTag::Market});
    }
    return {};
}

Eigen::MatrixXd filtered_matrix(const SpectralDecomposition& dec, bool include_below_bulk) {
    if (include_below_bulk) return spectral_sum(dec, {EigenTag::Group, EigenTag::BelowBulk});
    return spectral_sum(dec, {EigenTag::Group});
}

ShuffleResult shuffle_test(const ReturnPanel& panel, std::uint64_t seed) {
    ReturnPanel shuffled = panel;
    const std::uint64_t stream_seed = derive_seed(seed, "shuffle");
    const auto t = shuffled.returns.rows();
    for (Eigen::Index j = 0; j < shuffled.returns.cols(); ++j) {
        CounterStream rng(stream_seed, static_cast<std::uint64_t>(j));
        auto col = shuffled.returns.col(j);
        for (Eigen::Index i = t - 1; i > 0; --i) {
            const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
            std::swap(col(i), col(k));
        }
    }
    const CorrelationMatrix corr = correlation(shuffled);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(corr.entries, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed on shuffled panel");
    ShuffleResult out;
    out.eigenvalues = solver.eigenvalues().reverse();
    out.bounds = mp_bounds(corr.n_series(), corr.n_obs);
    const auto inside = std::count_if(out.eigenvalues.begin(), out.eigenvalues.end(),
                                      [&](double l) { return out.bounds.contains(l); });
    out.fraction_in_bulk = static_cast<double>(inside) / static_cast<double>(out.eigenvalues.size());
    return out;
}

}  // namespace mesorisk
