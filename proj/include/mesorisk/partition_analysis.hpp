#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mesorisk/community.hpp"
#include "mesorisk/timeseries.hpp"

namespace mesorisk {

// Natural-log information measures over empirical label frequencies.
double entropy(const Partition& p);
double mutual_information(const Partition& a, const Partition& b);
double joint_entropy(const Partition& a, const Partition& b);

struct ViResult {
    double value = 0.0;
    // Joint entropy was zero (both partitions a single block); value set to 0.
    bool degenerate = false;
};

// Normalised variation of information 1 - I/H, in [0, 1].
ViResult variation_of_information_detail(const Partition& a, const Partition& b);
double variation_of_information(const Partition& a, const Partition& b);

Eigen::MatrixXd pairwise_vi(const std::vector<Partition>& partitions);

struct CooccurrenceMatrix {
    Eigen::MatrixXd entries;
    std::vector<std::size_t> ordering;  // leaf order of the average-linkage dendrogram

    // entries permuted by ordering on both axes
    Eigen::MatrixXd ordered() const;
};

// Leaf order of average-linkage agglomerative clustering over a distance
// matrix. At each merge the subtree holding the smaller original index goes
// left; ties between equal distances pick the lowest cluster pair.
std::vector<std::size_t> average_linkage_order(const Eigen::MatrixXd& distance);

CooccurrenceMatrix cooccurrence(const std::vector<Partition>& partitions);

enum class StabilityMode { Multiresolution, SlidingWindow };

struct StabilityParams {
    std::vector<Resolution> resolutions = canonical_resolutions();
    int window_days = kSixMonthTradingDays;
    Resolution window_resolution = Resolution::daily();
    DetectOptions detect;
};

struct StabilityReport {
    StabilityMode mode = StabilityMode::Multiresolution;
    std::vector<std::string> labels;  // one per partition (resolution or window span)
    std::vector<Partition> partitions;
    std::vector<DetectionStatus> statuses;
    // Multiresolution: K x K. Sliding window: (W+1) x (W+1) with the
    // full-period partition last when W > 1.
    Eigen::MatrixXd vi;
    // VI of each partition against the first one.
    std::vector<double> vi_vs_baseline;
    CooccurrenceMatrix cooccurrence;
    bool includes_full_period = false;

    double max_pairwise_vi() const;
};

StabilityReport stability_study(const SpreadPanel& panel, StabilityMode mode,
                                const StabilityParams& params, std::uint64_t seed);

}  // namespace mesorisk
