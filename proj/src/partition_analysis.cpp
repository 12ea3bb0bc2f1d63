#include "mesorisk/partition_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mesorisk/error.hpp"
#include "mesorisk/rng.hpp"

namespace mesorisk {

namespace {

void require_same_size(const Partition& a, const Partition& b) {
    if (a.size() != b.size()) throw UsageError("partitions cover different node sets");
    if (a.size() == 0) throw UsageError("empty partition");
}

// Summing sorted terms makes the result independent of argument order.
double sorted_sum(std::vector<double> terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

std::map<std::pair<int, int>, std::size_t> contingency(const Partition& a, const Partition& b) {
    std::map<std::pair<int, int>, std::size_t> table;
    for (std::size_t i = 0; i < a.size(); ++i) ++table[{a.labels[i], b.labels[i]}];
    return table;
}

std::vector<std::size_t> label_counts(const Partition& p) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(p.n_communities), 0);
    for (int l : p.labels) ++counts[static_cast<std::size_t>(l)];
    return counts;
}

}  // namespace

double entropy(const Partition& p) {
    if (p.size() == 0) throw UsageError("empty partition");
    const double n = static_cast<double>(p.size());
    std::vector<double> terms;
    for (std::size_t c : label_counts(p)) {
        const double q = static_cast<double>(c) / n;
        terms.push_back(-q * std::log(q));
    }
    return sorted_sum(std::move(terms));
}

double mutual_information(const Partition& a, const Partition& b) {
    require_same_size(a, b);
    const double n = static_cast<double>(a.size());
    const auto ca = label_counts(a);
    const auto cb = label_counts(b);
    std::vector<double> terms;
    for (const auto& [cell, count] : contingency(a, b)) {
        const double pab = static_cast<double>(count) / n;
        const double pa = static_cast<double>(ca[static_cast<std::size_t>(cell.first)]) / n;
        const double pb = static_cast<double>(cb[static_cast<std::size_t>(cell.second)]) / n;
        terms.push_back(pab * std::log(pab / (pa * pb)));
    }
    return std::max(0.0, sorted_sum(std::move(terms)));
}

double joint_entropy(const Partition& a, const Partition& b) {
    require_same_size(a, b);
    const double n = static_cast<double>(a.size());
    std::vector<double> terms;
    for (const auto& [cell, count] : contingency(a, b)) {
        const double pab = static_cast<double>(count) / n;
        terms.push_back(-pab * std::log(pab));
    }
    return sorted_sum(std::move(terms));
}

ViResult variation_of_information_detail(const Partition& a, const Partition& b) {
    require_same_size(a, b);
    const Partition ca = Partition::from_labels(a.labels);
    const Partition cb = Partition::from_labels(b.labels);
    const double h = joint_entropy(ca, cb);
    if (h <= 0.0) return {0.0, true};
    if (ca.labels == cb.labels) return {0.0, false};
    const double i = mutual_information(ca, cb);
    return {std::clamp(1.0 - i / h, 0.0, 1.0), false};
}

double variation_of_information(const Partition& a, const Partition& b) {
    return variation_of_information_detail(a, b).value;
}

Eigen::MatrixXd pairwise_vi(const std::vector<Partition>& partitions) {
    const auto k = static_cast<Eigen::Index>(partitions.size());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = i + 1; j < k; ++j)
            out(i, j) = out(j, i) = variation_of_information(partitions[static_cast<std::size_t>(i)],
                                                             partitions[static_cast<std::size_t>(j)]);
    return out;
}

Eigen::MatrixXd CooccurrenceMatrix::ordered() const {
    const auto n = entries.rows();
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            out(i, j) = entries(static_cast<Eigen::Index>(ordering[static_cast<std::size_t>(i)]),
                                static_cast<Eigen::Index>(ordering[static_cast<std::size_t>(j)]));
    return out;
}

std::vector<std::size_t> average_linkage_order(const Eigen::MatrixXd& distance) {
    const auto n = static_cast<std::size_t>(distance.rows());
    if (n == 0) return {};
    // Each active cluster lives in the slot of its smallest original index,
    // so slot order equals minimum-index order.
    Eigen::MatrixXd d = distance;
    std::vector<std::size_t> size(n, 1);
    std::vector<bool> active(n, true);
    std::vector<std::vector<std::size_t>> leaves(n);
    for (std::size_t i = 0; i < n; ++i) leaves[i] = {i};

    for (std::size_t merges = 0; merges + 1 < n; ++merges) {
        std::size_t bi = 0, bj = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!active[j]) continue;
                const double v = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                if (v < best) {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        // bi < bj, so bi's subtree holds the smaller minimum index and goes left.
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == bi || k == bj) continue;
            const auto ki = static_cast<Eigen::Index>(k);
            const double merged =
                (static_cast<double>(size[bi]) * d(ki, static_cast<Eigen::Index>(bi)) +
                 static_cast<double>(size[bj]) * d(ki, static_cast<Eigen::Index>(bj))) /
                static_cast<double>(size[bi] + size[bj]);
            d(ki, static_cast<Eigen::Index>(bi)) = d(static_cast<Eigen::Index>(bi), ki) = merged;
        }
        size[bi] += size[bj];
        active[bj] = false;
        leaves[bi].insert(leaves[bi].end(), leaves[bj].begin(), leaves[bj].end());
        leaves[bj].clear();
    }
    for (std::size_t i = 0; i < n; ++i)
        if (active[i]) return leaves[i];
    return {};
}

CooccurrenceMatrix cooccurrence(const std::vector<Partition>& partitions) {
    if (partitions.empty()) throw UsageError("co-occurrence needs at least one partition");
    const std::size_t n = partitions.front().size();
    for (const auto& p : partitions)
        if (p.size() != n) throw UsageError("partitions cover different node sets");
    CooccurrenceMatrix out;
    const auto ni = static_cast<Eigen::Index>(n);
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(ni, ni);
    for (const auto& p : partitions)
        for (Eigen::Index i = 0; i < ni; ++i)
            for (Eigen::Index j = 0; j < ni; ++j)
                if (p.labels[static_cast<std::size_t>(i)] == p.labels[static_cast<std::size_t>(j)])
                    ++counts(i, j);
    out.entries = counts.cast<double>() / static_cast<double>(partitions.size());
    const Eigen::MatrixXd distance = Eigen::MatrixXd::Ones(ni, ni) - out.entries;
    out.ordering = average_linkage_order(distance);
    return out;
}

double StabilityReport::max_pairwise_vi() const { return vi.size() == 0 ? 0.0 : vi.maxCoeff(); }

StabilityReport stability_study(const SpreadPanel& panel, StabilityMode mode,
                                const StabilityParams& params, std::uint64_t seed) {
    StabilityReport report;
    report.mode = mode;
    auto run = [&](const ReturnPanel& returns, const std::string& label, std::uint64_t index) {
        const Detection d = detect(standardize(returns), derive_seed(seed, "stability", index), params.detect);
        report.labels.push_back(label);
        report.partitions.push_back(d.partition);
        report.statuses.push_back(d.status);
    };

    if (mode == StabilityMode::Multiresolution) {
        if (params.resolutions.empty()) throw UsageError("no resolutions requested");
        std::uint64_t k = 0;
        for (const auto& res : params.resolutions) run(log_returns(panel, res), res.label(), k++);
    } else {
        const ReturnPanel returns = log_returns(panel, params.window_resolution);
        const auto slices = windows(returns, params.window_days);
        if (slices.empty())
            throw DataError("panel shorter than half a window of " + std::to_string(params.window_days) +
                            " returns");
        std::uint64_t k = 0;
        for (const auto& w : slices)
            run(w, format_iso_date(w.dates.front()) + ".." + format_iso_date(w.dates.back()), k++);
        if (slices.size() > 1) {
            run(returns, "full", k);
            report.includes_full_period = true;
        }
    }

    report.vi = pairwise_vi(report.partitions);
    for (std::size_t i = 0; i < report.partitions.size(); ++i)
        report.vi_vs_baseline.push_back(report.vi(static_cast<Eigen::Index>(i), 0));

    std::vector<Partition> for_cooccurrence = report.partitions;
    if (report.includes_full_period) for_cooccurrence.pop_back();
    report.cooccurrence = cooccurrence(for_cooccurrence);
    return report;
}

}  // namespace mesorisk
