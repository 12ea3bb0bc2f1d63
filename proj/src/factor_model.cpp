#include "mesorisk/factor_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>
#include <Eigen/QR>

#include "mesorisk/error.hpp"
#include "mesorisk/log.hpp"

namespace mesorisk {

const char* to_string(FactorKind kind) {
    switch (kind) {
        case FactorKind::Global: return "global";
        case FactorKind::Industry: return "industry";
        case FactorKind::Region: return "region";
        case FactorKind::Community: return "community";
        case FactorKind::Subcommunity: return "subcommunity";
    }
    return "?";
}

GroupLabels group_labels(const std::vector<IssuerMeta>& meta, std::size_t n_issuers,
                         const Partition* partition, const Hierarchy* hierarchy) {
    GroupLabels g;
    g.industry.assign(n_issuers, "");
    g.region.assign(n_issuers, "");
    g.community.assign(n_issuers, "");
    g.subcommunity.assign(n_issuers, "");
    if (!meta.empty()) {
        if (meta.size() != n_issuers) throw UsageError("metadata does not match issuer count");
        for (std::size_t i = 0; i < n_issuers; ++i) {
            if (!meta[i].present) continue;
            g.industry[i] = meta[i].sector;
            g.region[i] = meta[i].region;
        }
    }
    if (hierarchy) {
        assign_communities(g, hierarchy->label_paths(n_issuers));
    } else if (partition) {
        if (partition->size() != n_issuers) throw UsageError("partition does not match issuer count");
        for (std::size_t i = 0; i < n_issuers; ++i)
            g.community[i] = g.subcommunity[i] =
                community_letter(static_cast<std::size_t>(partition->labels[i]));
    }
    return g;
}

void assign_communities(GroupLabels& labels, const std::vector<std::string>& label_paths) {
    labels.community.assign(label_paths.size(), "");
    labels.subcommunity.assign(label_paths.size(), "");
    for (std::size_t i = 0; i < label_paths.size(); ++i) {
        const auto& path = label_paths[i];
        labels.community[i] = path.substr(0, path.find('/'));
        labels.subcommunity[i] = path;
    }
}

std::vector<std::string> FactorSet::names() const {
    std::vector<std::string> out;
    for (const auto& f : factors) out.push_back(f.name);
    return out;
}

FactorSet build_factors(const ReturnPanel& panel, const GroupLabels& groups) {
    if (!panel.standardized) throw UsageError("factor construction expects standardized returns");
    const std::size_t n = panel.n_series();
    const auto t = static_cast<Eigen::Index>(panel.n_obs());
    if (n == 0 || t < 2) throw DataError("factor construction needs at least one issuer and two dates");

    FactorSet out;
    out.issuers = panel.issuers;
    out.issuer_factor.assign(n, {-1, -1, -1, -1, -1});
    std::vector<Eigen::VectorXd> columns;

    auto add = [&](FactorKind kind, const std::string& group, std::vector<std::size_t> members) {
        Eigen::VectorXd avg = Eigen::VectorXd::Zero(t);
        for (std::size_t i : members) avg += panel.returns.col(static_cast<Eigen::Index>(i));
        avg /= static_cast<double>(members.size());
        const double var = avg.squaredNorm() / static_cast<double>(t);
        const std::string name =
            kind == FactorKind::Global ? "global" : std::string(to_string(kind)) + ":" + group;
        if (!(var > 1e-24)) {
            if (kind == FactorKind::Global) throw NumericalError("global factor has zero variance");
            warn("factor '" + name + "' has zero variance; dropped");
            return;
        }
        const int index = static_cast<int>(out.factors.size());
        for (std::size_t i : members) out.issuer_factor[i][static_cast<std::size_t>(kind)] = index;
        out.factors.push_back({name, kind, group, std::move(members), {}});
        columns.push_back(std::move(avg));
    };

    std::vector<std::size_t> everyone(n);
    for (std::size_t i = 0; i < n; ++i) everyone[i] = i;
    add(FactorKind::Global, "", everyone);

    const std::pair<FactorKind, const std::vector<std::string>*> kinds[] = {
        {FactorKind::Industry, &groups.industry},
        {FactorKind::Region, &groups.region},
        {FactorKind::Community, &groups.community},
        {FactorKind::Subcommunity, &groups.subcommunity},
    };
    for (const auto& [kind, labels] : kinds) {
        if (labels->empty()) continue;
        if (labels->size() != n) throw UsageError("group labels do not match issuer count");
        std::map<std::string, std::vector<std::size_t>> by_group;
        for (std::size_t i = 0; i < n; ++i)
            if (!(*labels)[i].empty()) by_group[(*labels)[i]].push_back(i);
        for (auto& [group, members] : by_group) {
            if (members.size() < 2) {
                warn(std::string(to_string(kind)) + " group '" + group + "' has fewer than 2 members; no factor built");
                continue;
            }
            add(kind, group, std::move(members));
        }
    }

    out.series.resize(t, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) out.series.col(static_cast<Eigen::Index>(k)) = columns[k];
    out.residual_series = out.series;
    return out;
}

FactorSet build_factors(const ReturnPanel& panel, const std::vector<IssuerMeta>& meta,
                        const Partition* partition, const Hierarchy* hierarchy) {
    return build_factors(panel, group_labels(meta, panel.n_series(), partition, hierarchy));
}

FactorSet orthogonalize(const FactorSet& factors) {
    if (factors.factors.empty() || factors.factors.front().kind != FactorKind::Global)
        throw UsageError("factor set lacks a global factor");
    FactorSet out = factors;
    const auto g = factors.series.col(0);
    const auto t = static_cast<double>(g.size());
    const double gg = g.squaredNorm();
    if (!(gg > 0.0)) throw NumericalError("global factor has zero variance");
    const double global_sd = std::sqrt(gg / t);
    out.factors[0].diagnostics.gamma = 1.0;
    out.factors[0].diagnostics.r_squared = 1.0;
    out.factors[0].diagnostics.factor_sd = global_sd;
    out.factors[0].diagnostics.global_sd = global_sd;

    const double dof = t - 1.0;
    for (std::size_t k = 1; k < factors.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        const auto x = factors.series.col(col);
        double gamma = g.dot(x) / gg;
        Eigen::VectorXd residual = x - gamma * g;
        // One more projection pass removes rounding left by the first.
        const double correction = g.dot(residual) / gg;
        residual -= correction * g;
        gamma += correction;
        const double ssr = residual.squaredNorm();
        const double sst = x.squaredNorm();

        FactorDiagnostics& d = out.factors[k].diagnostics;
        d.gamma = gamma;
        d.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 0.0;
        d.residual_sd = std::sqrt(ssr / t);
        d.factor_sd = std::sqrt(sst / t);
        d.global_sd = global_sd;
        const double se = dof > 0.0 ? std::sqrt(ssr / dof / gg) : 0.0;
        if (se > 0.0) {
            d.t_statistic = (gamma - 1.0) / se;
            const boost::math::students_t dist(dof);
            d.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(d.t_statistic)));
        } else {
            d.t_statistic = gamma == 1.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), gamma - 1.0);
            d.p_value = gamma == 1.0 ? 1.0 : 0.0;
        }
        out.residual_series.col(col) = residual;
    }
    out.orthogonalized = true;
    return out;
}

std::vector<ModelVariant> all_variants() {
    return {ModelVariant::M1_Global,          ModelVariant::M2_GlobalIndustry,
            ModelVariant::M3_GlobalRegion,    ModelVariant::M4_GlobalRegionIndustry,
            ModelVariant::M5_GlobalCommunity, ModelVariant::M6_GlobalSubcommunity};
}

const char* to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::M1_Global: return "M1";
        case ModelVariant::M2_GlobalIndustry: return "M2";
        case ModelVariant::M3_GlobalRegion: return "M3";
        case ModelVariant::M4_GlobalRegionIndustry: return "M4";
        case ModelVariant::M5_GlobalCommunity: return "M5";
        case ModelVariant::M6_GlobalSubcommunity: return "M6";
    }
    return "?";
}

std::string describe(ModelVariant v) {
    switch (v) {
        case ModelVariant::M1_Global: return "global factor only";
        case ModelVariant::M2_GlobalIndustry: return "global and industry factors";
        case ModelVariant::M3_GlobalRegion: return "global and region factors";
        case ModelVariant::M4_GlobalRegionIndustry: return "global, region and industry factors";
        case ModelVariant::M5_GlobalCommunity: return "global and community factors";
        case ModelVariant::M6_GlobalSubcommunity: return "global and subcommunity factors";
    }
    return "?";
}

ModelVariant parse_variant(std::string_view text) {
    for (auto v : all_variants()) {
        const std::string_view code = to_string(v);
        if (text == code || (text.size() == 1 && text[0] == code[1])) return v;
    }
    throw UsageError("unknown model variant '" + std::string(text) + "' (expected M1..M6)");
}

std::vector<FactorKind> variant_kinds(ModelVariant v) {
    switch (v) {
        case ModelVariant::M1_Global: return {};
        case ModelVariant::M2_GlobalIndustry: return {FactorKind::Industry};
        case ModelVariant::M3_GlobalRegion: return {FactorKind::Region};
        case ModelVariant::M4_GlobalRegionIndustry: return {FactorKind::Region, FactorKind::Industry};
        case ModelVariant::M5_GlobalCommunity: return {FactorKind::Community};
        case ModelVariant::M6_GlobalSubcommunity: return {FactorKind::Subcommunity};
    }
    return {};
}

std::optional<std::size_t> CalibratedModel::index_of(const std::string& issuer) const {
    const auto it = std::find(issuers.begin(), issuers.end(), issuer);
    if (it == issuers.end()) return std::nullopt;
    return static_cast<std::size_t>(it - issuers.begin());
}

CalibratedModel calibrate(const ReturnPanel& panel, const FactorSet& factors, ModelVariant variant) {
    if (!factors.orthogonalized) throw UsageError("factors must be orthogonalized before calibration");
    if (panel.issuers != factors.issuers) throw UsageError("factor set was built on a different issuer set");
    if (static_cast<Eigen::Index>(panel.n_obs()) != factors.series.rows())
        throw UsageError("factor set and panel have different lengths");
    const auto kinds = variant_kinds(variant);
    const std::size_t n = panel.n_series();
    const auto t = static_cast<Eigen::Index>(panel.n_obs());

    // Model factor columns: global plus every residual factor of the variant's kinds.
    std::vector<std::size_t> columns{0};
    for (std::size_t k = 1; k < factors.size(); ++k)
        if (std::find(kinds.begin(), kinds.end(), factors.factors[k].kind) != kinds.end())
            columns.push_back(k);
    std::unordered_map<std::size_t, Eigen::Index> model_col;
    CalibratedModel model;
    model.variant = variant;
    model.issuers = panel.issuers;
    Eigen::MatrixXd f(t, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
        model_col[columns[c]] = static_cast<Eigen::Index>(c);
        f.col(static_cast<Eigen::Index>(c)) = factors.residual_series.col(static_cast<Eigen::Index>(columns[c]));
        model.factor_names.push_back(factors.factors[columns[c]].name);
    }
    const auto k_model = f.cols();
    model.omega = f.transpose() * f / static_cast<double>(t);
    model.omega = 0.5 * (model.omega + model.omega.transpose()).eval();

    model.alpha_hat = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), k_model);
    model.alpha = model.alpha_hat;
    model.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    model.r_squared = model.beta;
    model.psi = model.beta;
    model.group_path.assign(n, "");

    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        std::vector<Eigen::Index> used{0};
        std::string path;
        for (FactorKind kind : kinds) {
            const int fi = factors.issuer_factor[i][static_cast<std::size_t>(kind)];
            if (fi < 0) {
                warn("issuer '" + panel.issuers[i] + "' has no " + to_string(kind) +
                     " factor under " + to_string(variant) + "; using the global factor alone");
                continue;
            }
            used.push_back(model_col.at(static_cast<std::size_t>(fi)));
            path += (path.empty() ? "" : "|") + factors.factors[static_cast<std::size_t>(fi)].group;
        }
        model.group_path[i] = path;

        Eigen::MatrixXd fi(t, static_cast<Eigen::Index>(used.size()));
        for (std::size_t c = 0; c < used.size(); ++c) fi.col(static_cast<Eigen::Index>(c)) = f.col(used[c]);
        const auto x = panel.returns.col(row);
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(fi);
        if (cod.rank() < fi.cols())
            warn("issuer '" + panel.issuers[i] + "': rank-deficient regressors, using pseudo-inverse");
        const Eigen::VectorXd coef = cod.solve(x);
        const Eigen::VectorXd fitted = fi * coef;
        const double ssr = (x - fitted).squaredNorm();
        const double sst = x.squaredNorm();
        const double r2 = sst > 0.0 ? 1.0 - ssr / sst : 0.0;
        model.r_squared(row) = r2;
        double beta = r2;
        if (beta > 1.0) {
            warn("issuer '" + panel.issuers[i] + "': R^2 above 1 clipped");
            beta = 1.0;
        }
        beta = std::max(beta, 0.0);
        model.beta(row) = beta;

        const double psi = std::sqrt(fitted.squaredNorm() / static_cast<double>(t));
        model.psi(row) = psi;
        for (std::size_t c = 0; c < used.size(); ++c) model.alpha_hat(row, used[c]) = coef(static_cast<Eigen::Index>(c));
        if (psi > 0.0) {
            model.alpha.row(row) = model.alpha_hat.row(row) / psi;
        } else {
            warn("issuer '" + panel.issuers[i] + "': no systematic component; beta set to 0");
            model.beta(row) = 0.0;
            model.alpha(row, 0) = 1.0 / std::sqrt(model.omega(0, 0));
        }
    }
    return model;
}

Eigen::MatrixXd model_implied_correlations(const CalibratedModel& model) {
    const Eigen::MatrixXd cross = model.alpha * model.omega * model.alpha.transpose();
    const Eigen::VectorXd root_beta = model.beta.cwiseSqrt();
    Eigen::MatrixXd rho = (root_beta * root_beta.transpose()).cwiseProduct(cross);
    rho = 0.5 * (rho + rho.transpose()).eval();
    rho.diagonal().setOnes();
    return rho;
}

Histogram make_histogram(const std::vector<double>& values, double lower, double upper, std::size_t bins) {
    if (bins == 0 || !(upper > lower)) throw UsageError("invalid histogram range");
    Histogram h;
    h.lower = lower;
    h.upper = upper;
    h.counts.assign(bins, 0);
    const double width = h.bin_width();
    for (double v : values) {
        if (v < lower) {
            ++h.below;
        } else if (v > upper) {
            ++h.above;
        } else {
            auto b = static_cast<std::size_t>((v - lower) / width);
            ++h.counts[std::min(b, bins - 1)];
        }
    }
    return h;
}

CorrelationErrorReport correlation_error_report(const CalibratedModel& model,
                                                const CorrelationMatrix& empirical, std::size_t bins) {
    if (!empirical.issuers.empty() && empirical.issuers != model.issuers)
        throw UsageError("empirical correlations cover a different issuer set");
    if (empirical.n_series() != model.n_issuers())
        throw UsageError("empirical correlation size does not match the model");
    const Eigen::MatrixXd implied = model_implied_correlations(model);
    CorrelationErrorReport r;
    const auto n = implied.rows();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            r.differences.push_back(implied(i, j) - empirical.entries(i, j));
            r.empirical.push_back(empirical.entries(i, j));
        }
    r.difference_histogram = make_histogram(r.differences, -1.0, 1.0, bins);
    r.empirical_histogram = make_histogram(r.empirical, -1.0, 1.0, bins);
    if (r.differences.empty()) return r;
    const double m = static_cast<double>(r.differences.size());
    double sum = 0.0, sum_abs = 0.0, tail = 0.0;
    for (double d : r.differences) {
        sum += d;
        sum_abs += std::abs(d);
        r.max_abs = std::max(r.max_abs, std::abs(d));
        if (std::abs(d) > r.tail_threshold) tail += 1.0;
    }
    r.mean = sum / m;
    r.mean_abs = sum_abs / m;
    double ss = 0.0;
    for (double d : r.differences) ss += (d - r.mean) * (d - r.mean);
    r.sd = std::sqrt(ss / m);
    r.tail_mass = tail / m;
    return r;
}

RSquaredSummary r_squared_summary(const CalibratedModel& model) {
    RSquaredSummary s;
    const auto& b = model.beta;
    if (b.size() == 0) return s;
    s.mean = b.mean();
    s.sd = std::sqrt((b.array() - s.mean).square().sum() / static_cast<double>(b.size()));
    s.min = b.minCoeff();
    s.max = b.maxCoeff();
    return s;
}

}  // namespace mesorisk
