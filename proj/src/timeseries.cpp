#include "mesorisk/timeseries.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "mesorisk/error.hpp"
#include "mesorisk/log.hpp"

namespace mesorisk {

namespace {

constexpr std::array<std::string_view, kRegionCount> kRegionNames = {
    "Africa",        "Asia",        "Eastern Europe", "Europe",  "India",
    "Latin America", "Middle East", "North America",  "Oceania",
};

constexpr std::array<std::string_view, kSectorCount> kSectorNames = {
    "Basic Materials", "Consumer Goods", "Consumer Services",
    "Energy",          "Financials",     "Government",
    "Health Care",     "Industrials",    "Technology",
    "Telecommunications Services",       "Utilities",
};

constexpr std::array<std::string_view, kRatingCount> kRatingNames = {
    "AAA", "AA", "A", "BBB", "BB", "B", "CCC/C",
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto ca = static_cast<unsigned char>(a[i]);
        const auto cb = static_cast<unsigned char>(b[i]);
        if (std::tolower(ca) != std::tolower(cb)) return false;
    }
    return true;
}

std::string row_error(std::size_t row, const std::string& what) {
    return "row " + std::to_string(row) + ": " + what;
}

}  // namespace

Date parse_iso_date(std::string_view text) {
    text = trim(text);
    int y = 0;
    unsigned m = 0, d = 0;
    auto parse_part = [&](std::string_view part, auto& out) {
        const auto res = std::from_chars(part.data(), part.data() + part.size(), out);
        return res.ec == std::errc{} && res.ptr == part.data() + part.size();
    };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' ||
        !parse_part(text.substr(0, 4), y) || !parse_part(text.substr(5, 2), m) ||
        !parse_part(text.substr(8, 2), d))
        throw DataError("invalid ISO-8601 date '" + std::string(text) + "'");
    const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
    return date;
}

std::string format_iso_date(const Date& date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

std::string_view to_string(Region r) { return kRegionNames[static_cast<std::size_t>(r)]; }
std::string_view to_string(Sector s) { return kSectorNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(Rating r) { return kRatingNames[static_cast<std::size_t>(r)]; }

std::optional<Region> parse_region(std::string_view label) {
    label = trim(label);
    for (std::size_t i = 0; i < kRegionNames.size(); ++i)
        if (iequals(label, kRegionNames[i])) return static_cast<Region>(i);
    return std::nullopt;
}

std::optional<Sector> parse_sector(std::string_view label) {
    label = trim(label);
    for (std::size_t i = 0; i < kSectorNames.size(); ++i)
        if (iequals(label, kSectorNames[i])) return static_cast<Sector>(i);
    if (iequals(label, "Telecommunications")) return Sector::Telecommunications;
    return std::nullopt;
}

std::optional<Rating> parse_rating(std::string_view label) {
    label = trim(label);
    for (std::size_t i = 0; i < kRatingNames.size(); ++i)
        if (iequals(label, kRatingNames[i])) return static_cast<Rating>(i);
    if (iequals(label, "CCC") || iequals(label, "CC") || iequals(label, "C"))
        return Rating::CCC_C;
    return std::nullopt;
}

void SpreadPanel::validate() const {
    if (static_cast<std::size_t>(values.rows()) != dates.size() ||
        static_cast<std::size_t>(values.cols()) != issuers.size())
        throw DataError("spread matrix dimensions do not match dates x issuers");
    for (std::size_t t = 1; t < dates.size(); ++t)
        if (!(dates[t - 1] < dates[t])) throw DataError("dates are not strictly increasing");
    std::unordered_set<std::string> seen;
    for (const auto& id : issuers)
        if (!seen.insert(id).second) throw DataError("duplicate issuer '" + id + "'");
    if (!meta.empty() && meta.size() != issuers.size())
        throw DataError("metadata size does not match issuer count");
    for (Eigen::Index j = 0; j < values.cols(); ++j)
        for (Eigen::Index t = 0; t < values.rows(); ++t)
            if (!(values(t, j) > 0.0) || !std::isfinite(values(t, j)))
                throw DataError("non-positive or missing spread for issuer '" +
                                issuers[static_cast<std::size_t>(j)] + "'");
}

ReturnPanel ReturnPanel::select_columns(const std::vector<std::size_t>& columns) const {
    ReturnPanel out;
    out.dates = dates;
    out.standardized = standardized;
    out.returns.resize(returns.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) {
        out.returns.col(static_cast<Eigen::Index>(k)) =
            returns.col(static_cast<Eigen::Index>(columns[k]));
        out.issuers.push_back(issuers[columns[k]]);
        if (!meta.empty()) out.meta.push_back(meta[columns[k]]);
    }
    return out;
}

ReturnPanel ReturnPanel::slice_rows(std::size_t begin, std::size_t count) const {
    ReturnPanel out;
    out.issuers = issuers;
    out.meta = meta;
    out.standardized = false;
    out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(begin),
                     dates.begin() + static_cast<std::ptrdiff_t>(begin + count));
    out.returns = returns.middleRows(static_cast<Eigen::Index>(begin),
                                     static_cast<Eigen::Index>(count));
    return out;
}

std::string Resolution::label() const {
    switch (step) {
        case 1: return "1d";
        case 2: return "2d";
        case 5: return "1w";
        case 10: return "2w";
        case 21: return "1m";
        default: return std::to_string(step) + "td";
    }
}

std::vector<Resolution> canonical_resolutions() {
    return {Resolution::daily(), Resolution::two_days(), Resolution::weekly(),
            Resolution::two_weeks(), Resolution::monthly()};
}

Resolution parse_resolution(std::string_view text) {
    text = trim(text);
    for (const auto& r : canonical_resolutions())
        if (text == r.label()) return r;
    int step = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), step);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || step <= 0)
        throw UsageError("invalid resolution '" + std::string(text) +
                         "' (expected 1d, 2d, 1w, 2w, 1m or a positive day count)");
    return {step};
}

SpreadPanel parse_panel(std::istream& in, const LoadOptions& options) {
    std::string line;
    std::size_t row = 1;
    if (!std::getline(in, line)) throw DataError("empty spread file");
    {
        const auto header = split_csv(line);
        if (header.size() != 3 || header[0] != "date" || header[1] != "issuer_id" ||
            header[2] != "spread_bps")
            throw DataError(row_error(row, "expected header 'date,issuer_id,spread_bps'"));
    }

    struct Observation {
        std::size_t date_index;
        std::size_t issuer_index;
        double spread;
    };
    std::vector<Date> dates;
    std::vector<std::string> issuers;
    std::unordered_map<std::string, std::size_t> issuer_index;
    std::vector<Observation> observations;
    std::unordered_set<std::uint64_t> seen_pairs;

    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 3)
            throw DataError(row_error(row, "expected 3 fields, found " +
                                               std::to_string(fields.size())));
        Date date;
        try {
            date = parse_iso_date(fields[0]);
        } catch (const DataError& e) {
            throw DataError(row_error(row, e.what()));
        }
        if (fields[1].empty()) throw DataError(row_error(row, "empty issuer_id"));
        double spread = 0.0;
        const auto res = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), spread);
        if (res.ec != std::errc{} || res.ptr != fields[2].data() + fields[2].size())
            throw DataError(row_error(row, "unparseable spread '" + std::string(fields[2]) + "'"));
        if (!(spread > 0.0) || !std::isfinite(spread))
            throw DataError(row_error(row, "non-positive spread " + std::string(fields[2])));

        if (dates.empty() || dates.back() < date) {
            dates.push_back(date);
        } else if (date < dates.back()) {
            throw DataError(row_error(row, "date " + std::string(fields[0]) +
                                               " precedes the previous row's date"));
        }
        const std::string id(fields[1]);
        auto [it, inserted] = issuer_index.try_emplace(id, issuers.size());
        if (inserted) issuers.push_back(id);
        const std::size_t d = dates.size() - 1;
        const std::uint64_t key = (static_cast<std::uint64_t>(d) << 32) | it->second;
        if (!seen_pairs.insert(key).second)
            throw DataError(row_error(row, "duplicate observation for issuer '" + id + "'"));
        observations.push_back({d, it->second, spread});
    }
    if (dates.empty()) throw DataError("spread file contains no observations");

    const auto n_dates = static_cast<Eigen::Index>(dates.size());
    Eigen::MatrixXd raw = Eigen::MatrixXd::Constant(
        n_dates, static_cast<Eigen::Index>(issuers.size()), std::numeric_limits<double>::quiet_NaN());
    for (const auto& obs : observations)
        raw(static_cast<Eigen::Index>(obs.date_index), static_cast<Eigen::Index>(obs.issuer_index)) =
            obs.spread;

    SpreadPanel panel;
    panel.dates = std::move(dates);
    std::vector<Eigen::Index> kept;
    for (std::size_t j = 0; j < issuers.size(); ++j) {
        auto col = raw.col(static_cast<Eigen::Index>(j));
        const auto missing = static_cast<double>((col.array() != col.array()).count());
        const double fraction = missing / static_cast<double>(n_dates);
        if (fraction > options.max_missing_fraction) {
            std::ostringstream why;
            why << "missing fraction " << fraction << " exceeds " << options.max_missing_fraction;
            panel.dropped.push_back({issuers[j], why.str()});
            continue;
        }
        // Longest run of missing observations decides whether gaps can be filled.
        Eigen::Index run = 0, longest = 0;
        for (Eigen::Index t = 0; t < n_dates; ++t) {
            run = std::isnan(col(t)) ? run + 1 : 0;
            longest = std::max(longest, run);
        }
        if (longest > options.max_fill_gap) {
            panel.dropped.push_back({issuers[j], "gap of " + std::to_string(longest) +
                                                     " dates exceeds fill limit " +
                                                     std::to_string(options.max_fill_gap)});
            continue;
        }
        Eigen::Index first = 0;
        while (std::isnan(col(first))) ++first;
        for (Eigen::Index t = 0; t < first; ++t) col(t) = col(first);  // leading gap: back-fill
        for (Eigen::Index t = first + 1; t < n_dates; ++t)
            if (std::isnan(col(t))) col(t) = col(t - 1);
        kept.push_back(static_cast<Eigen::Index>(j));
    }
    for (const auto& d : panel.dropped) warn("dropped issuer '" + d.issuer + "': " + d.reason);
    if (kept.empty()) throw DataError("no issuers left after missing-data filtering");

    panel.values.resize(n_dates, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) {
        panel.values.col(static_cast<Eigen::Index>(k)) = raw.col(kept[k]);
        panel.issuers.push_back(issuers[static_cast<std::size_t>(kept[k])]);
    }
    panel.validate();
    return panel;
}

std::vector<std::pair<std::string, IssuerMeta>> parse_metadata(std::istream& in) {
    std::string line;
    std::size_t row = 1;
    if (!std::getline(in, line)) throw DataError("empty metadata file");
    const auto header = split_csv(line);
    const bool with_rating = header.size() == 4 && header[3] == "rating";
    if (header.size() < 3 || header[0] != "issuer_id" || header[1] != "region" ||
        header[2] != "sector" || (header.size() == 4 && !with_rating) || header.size() > 4)
        throw DataError(row_error(row, "expected header 'issuer_id,region,sector[,rating]'"));

    std::vector<std::pair<std::string, IssuerMeta>> records;
    std::unordered_set<std::string> seen;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != header.size())
            throw DataError(row_error(row, "expected " + std::to_string(header.size()) + " fields"));
        const std::string id(fields[0]);
        if (id.empty()) throw DataError(row_error(row, "empty issuer_id"));
        if (!seen.insert(id).second)
            throw DataError(row_error(row, "duplicate metadata for issuer '" + id + "'"));
        IssuerMeta m;
        m.present = true;
        m.region = std::string(fields[1]);
        m.sector = std::string(fields[2]);
        if (const auto r = parse_region(m.region)) {
            m.region = std::string(to_string(*r));
            m.region_known = true;
        } else {
            warn("issuer '" + id + "': unknown region '" + m.region + "' kept verbatim");
        }
        if (const auto s = parse_sector(m.sector)) {
            m.sector = std::string(to_string(*s));
            m.sector_known = true;
        } else {
            warn("issuer '" + id + "': unknown sector '" + m.sector + "' kept verbatim");
        }
        if (with_rating && !fields[3].empty()) {
            m.rating = parse_rating(fields[3]);
            if (!m.rating)
                throw DataError(row_error(row, "unknown rating '" + std::string(fields[3]) + "'"));
        }
        records.emplace_back(id, std::move(m));
    }
    return records;
}

void attach_metadata(SpreadPanel& panel,
                     const std::vector<std::pair<std::string, IssuerMeta>>& records) {
    std::unordered_map<std::string, const IssuerMeta*> by_id;
    for (const auto& [id, m] : records) by_id.emplace(id, &m);
    panel.meta.assign(panel.issuers.size(), IssuerMeta{});
    for (std::size_t j = 0; j < panel.issuers.size(); ++j) {
        const auto it = by_id.find(panel.issuers[j]);
        if (it != by_id.end())
            panel.meta[j] = *it->second;
        else
            warn("no metadata for issuer '" + panel.issuers[j] + "'");
    }
}

SpreadPanel load_panel(const std::filesystem::path& path,
                       const std::optional<std::filesystem::path>& meta_path,
                       const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open spread file '" + path.string() + "'");
    SpreadPanel panel;
    try {
        panel = parse_panel(in, options);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    if (meta_path) {
        std::ifstream meta_in(*meta_path);
        if (!meta_in) throw UsageError("cannot open metadata file '" + meta_path->string() + "'");
        try {
            attach_metadata(panel, parse_metadata(meta_in));
        } catch (const DataError& e) {
            throw DataError(meta_path->string() + ": " + e.what());
        }
    }
    return panel;
}

ReturnPanel log_returns(const SpreadPanel& panel, Resolution res) {
    if (res.step <= 0) throw UsageError("resolution step must be positive");
    const auto n_raw = static_cast<Eigen::Index>(panel.n_dates());
    const Eigen::Index n_sampled = n_raw == 0 ? 0 : (n_raw - 1) / res.step + 1;
    if (n_sampled < 2)
        throw DataError("empty return panel: fewer than 2 sampled dates at step " +
                        std::to_string(res.step));
    ReturnPanel out;
    out.issuers = panel.issuers;
    out.meta = panel.meta;
    out.returns.resize(n_sampled - 1, panel.values.cols());
    for (Eigen::Index k = 1; k < n_sampled; ++k) {
        const Eigen::Index now = k * res.step;
        const Eigen::Index before = now - res.step;
        out.returns.row(k - 1) =
            (panel.values.row(now).array() / panel.values.row(before).array()).log();
        out.dates.push_back(panel.dates[static_cast<std::size_t>(now)]);
    }
    return out;
}

ReturnPanel standardize(const ReturnPanel& panel) {
    if (panel.returns.rows() < 1) throw DataError("cannot standardize an empty panel");
    ReturnPanel out = panel;
    const double n = static_cast<double>(panel.returns.rows());
    for (Eigen::Index j = 0; j < out.returns.cols(); ++j) {
        auto col = out.returns.col(j);
        const double mean = col.sum() / n;
        col.array() -= mean;
        const double var = col.squaredNorm() / n;
        if (!(var > 1e-28 * std::max(1.0, mean * mean)))
            throw DataError("zero-variance series for issuer '" +
                            panel.issuers[static_cast<std::size_t>(j)] + "'");
        col /= std::sqrt(var);
    }
    out.standardized = true;
    return out;
}

std::vector<ReturnPanel> windows(const ReturnPanel& panel, int window_days) {
    if (window_days < 2) throw UsageError("window length must be at least 2");
    const std::size_t w = static_cast<std::size_t>(window_days);
    const std::size_t n = panel.n_obs();
    std::vector<ReturnPanel> out;
    std::size_t begin = 0;
    for (; begin + w <= n; begin += w) out.push_back(panel.slice_rows(begin, w));
    const std::size_t rest = n - begin;
    if (rest > 0 && 2 * rest >= w) out.push_back(panel.slice_rows(begin, rest));
    return out;
}

}  // namespace mesorisk
