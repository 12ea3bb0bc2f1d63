#include "mesorisk/community.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mesorisk/error.hpp"
#include "mesorisk/log.hpp"
#include "mesorisk/rng.hpp"

namespace mesorisk {

Partition Partition::from_labels(std::span<const int> labels, double quality) {
    Partition p;
    p.quality = quality;
    p.labels.resize(labels.size());
    std::map<int, int> remap;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
        p.labels[i] = it->second;
    }
    p.n_communities = static_cast<int>(remap.size());
    return p;
}

Partition Partition::singletons(std::size_t n) {
    std::vector<int> labels(n);
    std::iota(labels.begin(), labels.end(), 0);
    return from_labels(labels);
}

std::vector<std::vector<std::size_t>> Partition::members() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(n_communities));
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[static_cast<std::size_t>(labels[i])].push_back(i);
    return out;
}

double modularity(const Eigen::MatrixXd& filtered, double norm, std::span<const int> labels) {
    if (!(norm > 0.0)) throw NumericalError("modularity normalisation must be positive");
    if (static_cast<std::size_t>(filtered.rows()) != labels.size())
        throw UsageError("partition size does not match matrix");
    const auto n = filtered.rows();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)])
                sum += filtered(i, j);
    return sum / norm;
}

double modularity(const Eigen::MatrixXd& filtered, double norm, const Partition& partition) {
    return modularity(filtered, norm, partition.labels);
}

std::vector<double> modularity_contributions(const Eigen::MatrixXd& filtered, double norm,
                                             const Partition& partition) {
    if (!(norm > 0.0)) throw NumericalError("modularity normalisation must be positive");
    std::vector<double> out(static_cast<std::size_t>(partition.n_communities), 0.0);
    const auto& labels = partition.labels;
    for (std::size_t j = 0; j < labels.size(); ++j)
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == labels[j])
                out[static_cast<std::size_t>(labels[i])] +=
                    filtered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    for (auto& v : out) v /= norm;
    return out;
}

namespace {

constexpr double kMinGain = 1e-12;

// Phase 1 on a (possibly aggregated) matrix. comm holds community ids in
// [0, n). Accumulates Q * norm in q_norm. Returns true if any node moved.
bool local_moves(const Eigen::MatrixXd& m, std::vector<int>& comm, double norm, double& q_norm,
                 CounterStream& rng) {
    const auto n = static_cast<std::size_t>(m.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    std::vector<int> community_size(n, 0);
    for (int c : comm) ++community_size[static_cast<std::size_t>(c)];
    std::vector<double> link(n);

    bool any_move = false;
    bool moved = true;
    while (moved) {
        moved = false;
        for (std::size_t i : order) {
            std::fill(link.begin(), link.end(), 0.0);
            const auto col = m.col(static_cast<Eigen::Index>(i));
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) link[static_cast<std::size_t>(comm[j])] += col(static_cast<Eigen::Index>(j));
            const int own = comm[i];
            const double own_link = link[static_cast<std::size_t>(own)];
            // Lowest id among the maximal candidates; empty communities offer
            // a zero link (isolating the node).
            const bool alone = community_size[static_cast<std::size_t>(own)] == 1;
            int best = -1;
            double best_link = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                if (static_cast<int>(c) == own || (alone && community_size[c] == 0)) continue;
                if (best < 0 || link[c] > best_link) {
                    best = static_cast<int>(c);
                    best_link = link[c];
                }
            }
            if (best < 0) continue;
            const double gain = 2.0 * (best_link - own_link) / norm;
            if (gain > kMinGain) {
                --community_size[static_cast<std::size_t>(own)];
                ++community_size[static_cast<std::size_t>(best)];
                comm[i] = best;
                q_norm += 2.0 * (best_link - own_link);
                moved = true;
                any_move = true;
            }
        }
    }
    return any_move;
}

// Renumbers comm to 0..k-1 (first appearance) and returns k.
int compress(std::vector<int>& comm) {
    std::map<int, int> remap;
    for (auto& c : comm) {
        auto [it, inserted] = remap.try_emplace(c, static_cast<int>(remap.size()));
        c = it->second;
    }
    return static_cast<int>(remap.size());
}

Eigen::MatrixXd aggregate(const Eigen::MatrixXd& w, const std::vector<int>& comm, int k) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
    const auto n = w.rows();
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            out(comm[static_cast<std::size_t>(i)], comm[static_cast<std::size_t>(j)]) += w(i, j);
    return out;
}

void multilevel(const Eigen::MatrixXd& w, std::vector<int>& comm, double norm, double& q_norm,
                CounterStream& rng) {
    for (;;) {
        const int k = compress(comm);
        const Eigen::MatrixXd m = aggregate(w, comm, k);
        std::vector<int> super(static_cast<std::size_t>(k));
        std::iota(super.begin(), super.end(), 0);
        if (!local_moves(m, super, norm, q_norm, rng)) return;
        for (auto& c : comm) c = super[static_cast<std::size_t>(c)];
    }
}

bool lexicographically_less(const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

Partition louvain(const Eigen::MatrixXd& filtered, double norm, std::uint64_t seed) {
    if (!(norm > 0.0)) throw NumericalError("modularity normalisation must be positive");
    if (filtered.rows() != filtered.cols()) throw UsageError("louvain needs a square matrix");
    const auto n = static_cast<std::size_t>(filtered.rows());
    if (n == 0) return {};
    CounterStream rng(seed, 0);
    std::vector<int> comm(n);
    std::iota(comm.begin(), comm.end(), 0);
    double q_norm = filtered.trace();
    // Aggregated moves can leave single nodes misplaced; alternate with a
    // node-level pass until neither improves Q.
    for (;;) {
        multilevel(filtered, comm, norm, q_norm, rng);
        compress(comm);
        if (!local_moves(filtered, comm, norm, q_norm, rng)) break;
    }
    return Partition::from_labels(comm, q_norm / norm);
}

Partition best_of_restarts(const Eigen::MatrixXd& filtered, double norm, std::uint64_t seed,
                           int restarts) {
    if (restarts < 1) throw UsageError("restart count must be at least 1");
    Partition best;
    for (int r = 0; r < restarts; ++r) {
        Partition p = louvain(filtered, norm, derive_seed(seed, "louvain", static_cast<std::uint64_t>(r)));
        if (r == 0 || p.quality > best.quality + kMinGain ||
            (std::abs(p.quality - best.quality) <= kMinGain && lexicographically_less(p.labels, best.labels)))
            best = std::move(p);
    }
    return best;
}

const char* to_string(DetectionStatus status) {
    return status == DetectionStatus::Ok ? "ok" : "no_mesoscopic_structure";
}

Eigen::MatrixXd weighted_network_modularity_matrix(const Eigen::MatrixXd& corr) {
    const Eigen::VectorXd strength = corr.rowwise().sum();
    const double two_w = corr.sum();
    if (!(two_w > 0.0)) throw NumericalError("total correlation mass must be positive");
    return corr - strength * strength.transpose() / two_w;
}

Detection detect(const CorrelationMatrix& corr, std::uint64_t seed, const DetectOptions& options) {
    Detection out;
    out.null_model = options.null_model;
    out.norm = corr.total();
    if (!(out.norm > 0.0))
        throw NumericalError("sum of correlation entries is not positive; modularity undefined");
    const auto n = corr.n_series();

    if (options.null_model == NullModel::BiasedBaseline) {
        warn("weighted-network null model selected: biased baseline, comparison only");
        out.filtered = weighted_network_modularity_matrix(corr.entries);
        out.partition = best_of_restarts(out.filtered, out.norm, seed, options.restarts);
        return out;
    }

    const SpectralDecomposition dec = decompose(corr);
    out.n_group_eigenvalues = dec.count(EigenTag::Group);
    out.filtered = filtered_matrix(dec, options.include_below_bulk);
    if (out.n_group_eigenvalues == 0) {
        out.status = DetectionStatus::NoMesoscopicStructure;
        out.partition = Partition::singletons(n);
        out.partition.quality = modularity(out.filtered, out.norm, out.partition);
        return out;
    }
    out.partition = best_of_restarts(out.filtered, out.norm, seed, options.restarts);
    return out;
}

Detection detect(const ReturnPanel& panel, std::uint64_t seed, const DetectOptions& options) {
    if (!panel.standardized) throw UsageError("detect expects a standardized return panel");
    return detect(correlation(panel), seed, options);
}

std::string community_letter(std::size_t index) {
    std::string out;
    ++index;
    while (index > 0) {
        --index;
        out.insert(out.begin(), static_cast<char>('A' + index % 26));
        index /= 26;
    }
    return out;
}

namespace {

std::vector<std::string> child_names(const std::string& parent, int depth, int count) {
    std::vector<std::string> names;
    for (int k = 0; k < count; ++k) {
        if (depth == 1)
            names.push_back(community_letter(static_cast<std::size_t>(k)));
        else if (depth == 2)
            names.push_back(parent + std::to_string(k + 1));
        else
            names.push_back(parent + "." + std::to_string(k + 1));
    }
    return names;
}

void subdivide(Hierarchy& node, const CorrelationMatrix& corr, std::uint64_t seed,
               const HierarchyOptions& options) {
    if (node.depth >= options.max_depth) return;
    const auto groups = node.partition.members();
    for (std::size_t c = 0; c < groups.size(); ++c) {
        if (groups[c].size() < options.min_size) continue;
        std::vector<std::size_t> members;
        for (std::size_t local : groups[c]) members.push_back(node.members[local]);
        const CorrelationMatrix sub = corr.restrict_to(members);
        DecomposeOptions dopt;
        dopt.force_leading_removal = true;  // the community mode
        const SpectralDecomposition dec = decompose(sub, dopt);
        if (dec.count(EigenTag::Group) == 0) continue;
        const double norm = sub.total();
        if (!(norm > 0.0)) continue;
        const Eigen::MatrixXd filtered = filtered_matrix(dec, options.include_below_bulk);
        const std::uint64_t child_seed =
            derive_seed(seed, node.community_names[c], static_cast<std::uint64_t>(node.depth));
        Partition p = best_of_restarts(filtered, norm, child_seed, options.restarts);
        if (p.is_trivial()) continue;

        Hierarchy child;
        child.name = node.community_names[c];
        child.depth = node.depth + 1;
        child.members = std::move(members);
        child.partition = std::move(p);
        child.norm = norm;
        child.community_names = child_names(child.name, child.depth, child.partition.n_communities);
        subdivide(child, corr, seed, options);
        node.children.emplace(static_cast<int>(c), std::move(child));
    }
}

void collect_paths(const Hierarchy& node, const std::string& prefix, std::vector<std::string>& out) {
    for (std::size_t local = 0; local < node.members.size(); ++local) {
        const int c = node.partition.labels[local];
        const std::string path =
            (prefix.empty() ? "" : prefix + "/") + node.community_names[static_cast<std::size_t>(c)];
        out[node.members[local]] = path;
    }
    for (const auto& [c, child] : node.children) {
        const std::string path =
            (prefix.empty() ? "" : prefix + "/") + node.community_names[static_cast<std::size_t>(c)];
        collect_paths(child, path, out);
    }
}

}  // namespace

std::vector<std::string> Hierarchy::label_paths(std::size_t n_total) const {
    std::vector<std::string> out(n_total);
    collect_paths(*this, "", out);
    return out;
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> Hierarchy::leaves() const {
    std::vector<std::string> paths = label_paths(
        members.empty() ? 0 : *std::max_element(members.begin(), members.end()) + 1);
    std::map<std::string, std::vector<std::size_t>> grouped;
    for (std::size_t i : members) grouped[paths[i]].push_back(i);
    return {grouped.begin(), grouped.end()};
}

Hierarchy hierarchy(const CorrelationMatrix& corr, const Partition& root, std::uint64_t seed,
                    const HierarchyOptions& options) {
    if (root.size() != corr.n_series()) throw UsageError("partition does not match correlation matrix");
    Hierarchy h;
    h.depth = 1;
    h.members.resize(root.size());
    std::iota(h.members.begin(), h.members.end(), 0);
    h.partition = root;
    h.norm = corr.total();
    h.community_names = child_names("", 1, root.n_communities);
    subdivide(h, corr, derive_seed(seed, "hierarchy"), options);
    return h;
}

Hierarchy hierarchy(const ReturnPanel& panel, const Partition& root, std::uint64_t seed,
                    const HierarchyOptions& options) {
    if (!panel.standardized) throw UsageError("hierarchy expects a standardized return panel");
    return hierarchy(correlation(panel), root, seed, options);
}

}  // namespace mesorisk
