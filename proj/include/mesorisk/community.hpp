#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mesorisk/spectra.hpp"
#include "mesorisk/timeseries.hpp"

namespace mesorisk {

// Community assignment. Labels are canonical: consecutive from 0 in order of
// first appearance, so equal partitions compare equal.
struct Partition {
    std::vector<int> labels;
    int n_communities = 0;
    double quality = 0.0;

    static Partition from_labels(std::span<const int> labels, double quality = 0.0);
    static Partition singletons(std::size_t n);

    std::size_t size() const { return labels.size(); }
    std::vector<std::vector<std::size_t>> members() const;
    bool is_trivial() const {
        return n_communities <= 1 || static_cast<std::size_t>(n_communities) == labels.size();
    }
};

// Q = (1/norm) * sum over same-community pairs (diagonal included) of filtered_ij.
double modularity(const Eigen::MatrixXd& filtered, double norm, std::span<const int> labels);
double modularity(const Eigen::MatrixXd& filtered, double norm, const Partition& partition);

// Contribution of each community to Q, indexed by label.
std::vector<double> modularity_contributions(const Eigen::MatrixXd& filtered, double norm,
                                             const Partition& partition);

// Two-phase Louvain for dense, signed modularity matrices. The returned
// quality is the incrementally tracked Q.
Partition louvain(const Eigen::MatrixXd& filtered, double norm, std::uint64_t seed);

enum class NullModel {
    // C(r) + C(m): random bulk and market mode.
    SpectralRmt,
    // s_i s_j / 2W weighted-network null. Comparison only: known to be biased.
    BiasedBaseline,
};

struct DetectOptions {
    int restarts = 10;
    bool include_below_bulk = true;
    NullModel null_model = NullModel::SpectralRmt;
};

enum class DetectionStatus { Ok, NoMesoscopicStructure };

const char* to_string(DetectionStatus status);

struct Detection {
    Partition partition;
    DetectionStatus status = DetectionStatus::Ok;
    double norm = 0.0;
    std::size_t n_group_eigenvalues = 0;
    NullModel null_model = NullModel::SpectralRmt;
    Eigen::MatrixXd filtered;
};

// Best of several seeded Louvain runs: highest Q, ties broken by the
// lexicographically smallest label vector.
Partition best_of_restarts(const Eigen::MatrixXd& filtered, double norm, std::uint64_t seed,
                           int restarts);

// Null-model-corrected matrix for the biased weighted-network baseline.
Eigen::MatrixXd weighted_network_modularity_matrix(const Eigen::MatrixXd& corr);

Detection detect(const CorrelationMatrix& corr, std::uint64_t seed, const DetectOptions& options = {});
Detection detect(const ReturnPanel& panel, std::uint64_t seed, const DetectOptions& options = {});

struct HierarchyOptions {
    int max_depth = 2;
    std::size_t min_size = 4;
    int restarts = 10;
    bool include_below_bulk = true;
};

// One level of the nested community structure. Members are indices into the
// full issuer list; the partition is over the members in that order.
struct Hierarchy {
    std::string name;  // empty at the root
    int depth = 1;
    std::vector<std::size_t> members;
    Partition partition;
    double norm = 0.0;
    std::vector<std::string> community_names;
    std::map<int, Hierarchy> children;

    // Per issuer label path such as "B/B3", indexed like the full issuer list.
    std::vector<std::string> label_paths(std::size_t n_total) const;
    // Leaf communities as (path, members).
    std::vector<std::pair<std::string, std::vector<std::size_t>>> leaves() const;
};

// "A".."Z", "AA", ... for top-level communities.
std::string community_letter(std::size_t index);

Hierarchy hierarchy(const CorrelationMatrix& corr, const Partition& root, std::uint64_t seed,
                    const HierarchyOptions& options = {});
Hierarchy hierarchy(const ReturnPanel& panel, const Partition& root, std::uint64_t seed,
                    const HierarchyOptions& options = {});

}  // namespace mesorisk
