#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mesorisk {

using Date = std::chrono::year_month_day;

Date parse_iso_date(std::string_view text);
std::string format_iso_date(const Date& date);

enum class Region {
    Africa,
    Asia,
    EasternEurope,
    Europe,
    India,
    LatinAmerica,
    MiddleEast,
    NorthAmerica,
    Oceania,
};

enum class Sector {
    BasicMaterials,
    ConsumerGoods,
    ConsumerServices,
    Energy,
    Financials,
    Government,
    HealthCare,
    Industrials,
    Technology,
    Telecommunications,
    Utilities,
};

enum class Rating { AAA, AA, A, BBB, BB, B, CCC_C };

inline constexpr std::size_t kRegionCount = 9;
inline constexpr std::size_t kSectorCount = 11;
inline constexpr std::size_t kRatingCount = 7;

std::string_view to_string(Region r);
std::string_view to_string(Sector s);
std::string_view to_string(Rating r);
std::optional<Region> parse_region(std::string_view label);
std::optional<Sector> parse_sector(std::string_view label);
std::optional<Rating> parse_rating(std::string_view label);

// Region and sector labels are kept verbatim; the *_known flags record
// whether they belong to the standard vocabularies.
struct IssuerMeta {
    bool present = false;
    std::string region;
    bool region_known = false;
    std::string sector;
    bool sector_known = false;
    std::optional<Rating> rating;
};

struct DroppedIssuer {
    std::string issuer;
    std::string reason;
};

struct LoadOptions {
    double max_missing_fraction = 0.10;
    int max_fill_gap = 5;
};

// Spreads in basis points, dates along rows and issuers along columns.
// After loading every entry is finite and strictly positive.
struct SpreadPanel {
    std::vector<Date> dates;
    std::vector<std::string> issuers;
    Eigen::MatrixXd values;
    std::vector<IssuerMeta> meta;  // empty, or one entry per issuer
    std::vector<DroppedIssuer> dropped;

    std::size_t n_dates() const { return dates.size(); }
    std::size_t n_issuers() const { return issuers.size(); }
    bool has_meta() const { return !meta.empty(); }

    // Throws DataError if any structural invariant is violated.
    void validate() const;
};

struct ReturnPanel {
    std::vector<Date> dates;  // date at the end of each return interval
    std::vector<std::string> issuers;
    Eigen::MatrixXd returns;  // T x N log-returns
    bool standardized = false;
    std::vector<IssuerMeta> meta;

    std::size_t n_obs() const { return static_cast<std::size_t>(returns.rows()); }
    std::size_t n_series() const { return static_cast<std::size_t>(returns.cols()); }

    // Column subset, in the given order.
    ReturnPanel select_columns(const std::vector<std::size_t>& columns) const;
    // Row range [begin, begin + count).
    ReturnPanel slice_rows(std::size_t begin, std::size_t count) const;
};

// Sampling step in trading days.
struct Resolution {
    int step = 1;

    static constexpr Resolution daily() { return {1}; }
    static constexpr Resolution two_days() { return {2}; }
    static constexpr Resolution weekly() { return {5}; }
    static constexpr Resolution two_weeks() { return {10}; }
    static constexpr Resolution monthly() { return {21}; }

    std::string label() const;
    friend bool operator==(const Resolution&, const Resolution&) = default;
};

// 1 day, 2 days, 1 week, 2 weeks, 1 month.
std::vector<Resolution> canonical_resolutions();
Resolution parse_resolution(std::string_view text);

inline constexpr int kSixMonthTradingDays = 126;

SpreadPanel parse_panel(std::istream& spreads, const LoadOptions& options = {});
std::vector<std::pair<std::string, IssuerMeta>> parse_metadata(std::istream& meta);
void attach_metadata(SpreadPanel& panel,
                     const std::vector<std::pair<std::string, IssuerMeta>>& records);

SpreadPanel load_panel(const std::filesystem::path& path,
                       const std::optional<std::filesystem::path>& meta_path = std::nullopt,
                       const LoadOptions& options = {});

ReturnPanel log_returns(const SpreadPanel& panel, Resolution res);

// Zero mean, unit population variance per column.
ReturnPanel standardize(const ReturnPanel& panel);

// Consecutive non-overlapping slices of window_days rows. A trailing partial
// slice is kept only if it has at least half the window length.
std::vector<ReturnPanel> windows(const ReturnPanel& panel, int window_days);

}  // namespace mesorisk
