#include "mesorisk/risk_engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <Eigen/Eigenvalues>

#include "mesorisk/error.hpp"
#include "mesorisk/log.hpp"
#include "mesorisk/matrix_io.hpp"
#include "mesorisk/rng.hpp"

namespace mesorisk {

namespace {

// Per-path generator: a Philox block keyed by (seed, path) seeds a
// xoshiro256++ state, so every draw of a path depends only on the seed and
// the path index.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t path) {
        const philox::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
        const auto a = philox::block({static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), 0u, 0u}, key);
        const auto b = philox::block({static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), 1u, 0u}, key);
        s_[0] = (static_cast<std::uint64_t>(a[0]) << 32) | a[1];
        s_[1] = (static_cast<std::uint64_t>(a[2]) << 32) | a[3];
        s_[2] = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
        s_[3] = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
    }

    std::uint64_t next() {
        const std::uint64_t out = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return out;
    }

    // (0, 1]
    double uniform_open_low() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_open_low()));
        const double theta = 2.0 * std::numbers::pi * (static_cast<double>(next() >> 11) * 0x1.0p-53);
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::optional<double> parse_number(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

struct RiskClass {
    double threshold = 0.0;   // d
    double beta = 0.0;
    Eigen::RowVectorXd load;  // sqrt(beta) alpha' S
};

}  // namespace

const char* to_string(IssuerClass c) { return c == IssuerClass::Corporate ? "corporate" : "sovereign"; }

IssuerClass parse_issuer_class(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "corporate" || s == "corp") return IssuerClass::Corporate;
    if (s == "sovereign" || s == "sov") return IssuerClass::Sovereign;
    throw DataError("unknown issuer class '" + std::string(text) + "' (expected corporate or sovereign)");
}

RatingPDTable RatingPDTable::historical() {
    RatingPDTable t;
    // Percent, corporate then sovereign.
    const double pct[kRatingCount][2] = {
        {0.00, 0.00}, {0.02, 0.00}, {0.06, 0.00}, {0.17, 0.00}, {0.65, 0.49}, {3.44, 2.82}, {26.63, 41.56},
    };
    for (std::size_t r = 0; r < kRatingCount; ++r)
        for (std::size_t c = 0; c < 2; ++c) t.raw[r][c] = pct[r][c] / 100.0;
    return t;
}

double pd_lookup(Rating rating, IssuerClass issuer_class, const RatingPDTable& table) {
    const auto r = static_cast<std::size_t>(rating);
    if (r >= kRatingCount) throw UsageError("unknown rating");
    const double raw = table.raw[r][issuer_class == IssuerClass::Corporate ? 0 : 1];
    return std::max(raw, table.floor);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return boost::math::quantile(boost::math::normal(), p);
}

double default_threshold(double pd) {
    if (!(pd > 0.0 && pd < 1.0)) throw UsageError("default probability must lie in (0, 1)");
    return normal_quantile(pd);
}

double Position::resolved_pd(const RatingPDTable& table) const {
    if (pd) return *pd;
    if (!rating) throw DataError("position '" + issuer_id + "' has neither a rating nor a pd");
    return pd_lookup(*rating, issuer_class, table);
}

const char* to_string(PortfolioKind k) {
    switch (k) {
        case PortfolioKind::LongOnly: return "long_only";
        case PortfolioKind::LongShort: return "long_short";
        case PortfolioKind::Unconstrained: return "unconstrained";
    }
    return "?";
}

double Portfolio::exposure_sum() const {
    double s = 0.0;
    for (const auto& p : positions) s += p.exposure;
    return s;
}

void Portfolio::validate(const RatingPDTable& table) const {
    if (positions.empty()) throw DataError("portfolio '" + name + "' is empty");
    for (const auto& p : positions) {
        const double pd = p.resolved_pd(table);
        if (!(pd >= 0.0 && pd <= 1.0)) throw DataError("position '" + p.issuer_id + "' has pd outside [0, 1]");
        if (!(p.lgd >= 0.0 && p.lgd <= 1.0)) throw DataError("position '" + p.issuer_id + "' has lgd outside [0, 1]");
        if (!std::isfinite(p.exposure)) throw DataError("position '" + p.issuer_id + "' has a non-finite exposure");
    }
    const double s = exposure_sum();
    if (kind == PortfolioKind::LongOnly && std::abs(s - 1.0) > 1e-12)
        throw DataError("long-only portfolio exposures sum to " + format_double(s) + ", not 1");
    if (kind == PortfolioKind::LongShort && std::abs(s) > 1e-12)
        throw DataError("long-short portfolio exposures sum to " + format_double(s) + ", not 0");
}

PortfolioKind infer_kind(const std::vector<Position>& positions) {
    double s = 0.0;
    bool negative = false;
    for (const auto& p : positions) {
        s += p.exposure;
        negative = negative || p.exposure < 0.0;
    }
    if (!negative && std::abs(s - 1.0) <= 1e-12) return PortfolioKind::LongOnly;
    if (negative && std::abs(s) <= 1e-12) return PortfolioKind::LongShort;
    return PortfolioKind::Unconstrained;
}

Portfolio read_portfolio_csv(std::istream& in, const std::string& name) {
    Portfolio out;
    out.name = name;
    std::string line;
    if (!std::getline(in, line)) throw DataError("portfolio file is empty");
    const auto header = split_csv(line);
    const std::vector<std::string> expected = {"issuer_id", "exposure", "lgd", "rating_or_pd", "class"};
    if (header != expected) throw DataError("portfolio header must be issuer_id,exposure,lgd,rating_or_pd,class");
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        const std::string where = "portfolio row " + std::to_string(row);
        if (f.size() != 5) throw DataError(where + ": expected 5 fields");
        Position p;
        p.issuer_id = f[0];
        if (p.issuer_id.empty()) throw DataError(where + ": empty issuer_id");
        const auto e = parse_number(f[1]);
        if (!e) throw DataError(where + ": bad exposure '" + f[1] + "'");
        p.exposure = *e;
        if (f[2].empty()) {
            p.lgd = 1.0;
        } else {
            const auto q = parse_number(f[2]);
            if (!q) throw DataError(where + ": bad lgd '" + f[2] + "'");
            p.lgd = *q;
        }
        if (auto r = parse_rating(f[3])) {
            p.rating = *r;
        } else if (auto pd = parse_number(f[3])) {
            p.pd = *pd;
        } else {
            throw DataError(where + ": '" + f[3] + "' is neither a rating nor a probability");
        }
        p.issuer_class = parse_issuer_class(f[4]);
        out.positions.push_back(std::move(p));
    }
    out.kind = infer_kind(out.positions);
    return out;
}

Portfolio read_portfolio_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open portfolio file " + path.string());
    return read_portfolio_csv(in, path.stem().string());
}

void write_portfolio_csv(std::ostream& out, const Portfolio& portfolio) {
    out << "issuer_id,exposure,lgd,rating_or_pd,class\n";
    for (const auto& p : portfolio.positions) {
        out << p.issuer_id << ',' << format_double(p.exposure) << ',' << format_double(p.lgd) << ',';
        if (p.pd)
            out << format_double(*p.pd);
        else if (p.rating)
            out << to_string(*p.rating);
        out << ',' << to_string(p.issuer_class) << '\n';
    }
}

void write_portfolio_csv(const std::filesystem::path& path, const Portfolio& portfolio) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write " + path.string());
    write_portfolio_csv(out, portfolio);
}

Eigen::MatrixXd covariance_sqrt(const Eigen::MatrixXd& omega) {
    if (omega.rows() != omega.cols() || omega.rows() == 0) throw UsageError("factor covariance must be square");
    if (!omega.allFinite()) throw NumericalError("factor covariance has non-finite entries");
    const Eigen::MatrixXd sym = 0.5 * (omega + omega.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed on factor covariance");
    Eigen::VectorXd lambda = solver.eigenvalues();
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    const double smallest = lambda.minCoeff();
    if (smallest < -1e-6 * scale) {
        std::ostringstream msg;
        msg << "factor covariance is not positive semidefinite (smallest eigenvalue " << smallest << ")";
        throw NumericalError(msg.str());
    }
    if (smallest < -1e-8) {
        std::ostringstream msg;
        msg << "clipping negative factor covariance eigenvalue " << smallest << " to 0";
        warn(msg.str());
    }
    lambda = lambda.cwiseMax(0.0);
    return solver.eigenvectors() * lambda.cwiseSqrt().asDiagonal();
}

LossDistribution simulate(const Portfolio& portfolio, const CalibratedModel& model, std::size_t n_paths,
                          std::uint64_t seed, const SimulationOptions& options) {
    if (n_paths == 0) throw UsageError("number of paths must be positive");
    portfolio.validate(options.table);
    const Eigen::MatrixXd s = covariance_sqrt(model.omega);
    const auto k = s.cols();

    // Positions sharing (d, beta, loading) are one risk class: their
    // conditional default probability is computed once per path.
    std::vector<RiskClass> classes;
    std::map<std::vector<double>, std::size_t> class_index;
    std::vector<std::vector<std::size_t>> class_members;
    // Positions with the same loss weight q*e share a default counter.
    std::vector<double> weights;
    std::map<double, std::size_t> weight_index;
    std::vector<std::size_t> weight_of;

    for (const auto& p : portfolio.positions) {
        const auto idx = model.index_of(p.issuer_id);
        if (!idx) throw DataError("issuer '" + p.issuer_id + "' is not in the calibrated model");
        const double pd = p.resolved_pd(options.table);
        RiskClass c;
        c.threshold = normal_quantile(pd);
        c.beta = std::clamp(model.beta(static_cast<Eigen::Index>(*idx)), 0.0, 1.0);
        c.load = std::sqrt(c.beta) * (model.alpha.row(static_cast<Eigen::Index>(*idx)) * s);
        std::vector<double> key = {c.threshold, c.beta};
        key.insert(key.end(), c.load.data(), c.load.data() + c.load.size());
        auto [it, inserted] = class_index.emplace(std::move(key), classes.size());
        if (inserted) {
            classes.push_back(std::move(c));
            class_members.emplace_back();
        }
        class_members[it->second].push_back(weight_of.size());

        const double w = p.lgd * p.exposure;
        auto [wit, winserted] = weight_index.emplace(w, weights.size());
        if (winserted) weights.push_back(w);
        weight_of.push_back(wit->second);
    }

    const std::uint64_t stream_seed = derive_seed(seed, "simulate");

    LossDistribution out;
    out.n_paths = n_paths;
    out.seed = seed;
    out.model_variant = model.variant;
    out.losses.assign(n_paths, 0.0);

    auto run = [&](std::size_t begin, std::size_t end) {
        Eigen::VectorXd z(k);
        std::vector<std::uint64_t> counts(weights.size());
        for (std::size_t path = begin; path < end; ++path) {
            PathRng rng(stream_seed, path);
            for (Eigen::Index j = 0; j < k; ++j) z(j) = rng.normal();
            std::fill(counts.begin(), counts.end(), 0);
            for (std::size_t c = 0; c < classes.size(); ++c) {
                const RiskClass& rc = classes[c];
                const auto& members = class_members[c];
                const double systematic = rc.load.dot(z);
                double prob;
                if (rc.beta >= 1.0)
                    prob = systematic <= rc.threshold ? 1.0 : 0.0;
                else
                    prob = normal_cdf((rc.threshold - systematic) / std::sqrt(1.0 - rc.beta));
                if (prob <= 0.0) continue;
                if (prob >= 1.0) {
                    for (std::size_t i : members) ++counts[weight_of[i]];
                    continue;
                }
                // Given F the class members default independently with
                // probability prob; jump between defaults with geometric gaps
                // instead of drawing one uniform per member.
                const double log_survive = std::log1p(-prob);
                const auto size = static_cast<double>(members.size());
                double next = 0.0;
                for (;;) {
                    next += std::floor(std::log(rng.uniform_open_low()) / log_survive);
                    if (next >= size) break;
                    ++counts[weight_of[members[static_cast<std::size_t>(next)]]];
                    next += 1.0;
                }
            }
            double loss = 0.0;
            for (std::size_t w = 0; w < weights.size(); ++w)
                if (counts[w]) loss += weights[w] * static_cast<double>(counts[w]);
            out.losses[path] = loss;
        }
    };

    const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, n_paths);
    if (threads == 1) {
        run(0, n_paths);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n_paths + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t b = t * chunk;
            const std::size_t e = std::min(n_paths, b + chunk);
            if (b < e) pool.emplace_back(run, b, e);
        }
        for (auto& th : pool) th.join();
    }
    std::sort(out.losses.begin(), out.losses.end());
    return out;
}

double var(const std::vector<double>& sorted_losses, double alpha) {
    if (sorted_losses.empty()) throw UsageError("empty loss distribution");
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
    const double n = static_cast<double>(sorted_losses.size());
    const double target = alpha * n;
    // alpha * n such as 0.999 * 1e6 lands a hair off an integer in binary.
    const double nearest = std::round(target);
    const double rank = std::abs(target - nearest) <= 1e-9 * std::max(1.0, target) ? nearest : std::ceil(target);
    const auto index = static_cast<std::size_t>(std::clamp(rank, 1.0, n));
    return sorted_losses[index - 1];
}

double var(const LossDistribution& dist, double alpha) { return var(dist.losses, alpha); }

double vasicek_var(double p, double beta, double alpha) {
    if (!(p > 0.0 && p < 1.0)) throw UsageError("p must lie in (0, 1)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
    if (!(beta >= 0.0 && beta < 1.0)) throw UsageError("beta must lie in [0, 1)");
    return normal_cdf((normal_quantile(p) + std::sqrt(beta) * normal_quantile(alpha)) / std::sqrt(1.0 - beta));
}

double normal_tail_ratio(double alpha_high, double alpha_low) {
    return normal_quantile(alpha_high) / normal_quantile(alpha_low);
}

double tail_ratio(double var_high, double var_low) {
    if (var_low > 0.0) return var_high / var_low;
    if (var_high > 0.0) return std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
}

QuantileReport quantile_report(const Portfolio& portfolio, const std::vector<CalibratedModel>& models,
                               const std::vector<double>& alphas, std::size_t n_paths, std::uint64_t seed,
                               const SimulationOptions& options) {
    if (models.empty()) throw UsageError("quantile report needs at least one model");
    if (alphas.empty()) throw UsageError("quantile report needs at least one alpha");
    for (const auto& m : models)
        if (m.issuers != models.front().issuers)
            throw UsageError("models were calibrated on different issuer universes");
    std::vector<double> sorted_alphas = alphas;
    std::sort(sorted_alphas.begin(), sorted_alphas.end());

    QuantileReport report;
    report.portfolio = portfolio.name;
    report.alphas = sorted_alphas;
    report.n_paths = n_paths;
    report.seed = seed;
    report.normal_ratio = normal_tail_ratio(sorted_alphas.back(), sorted_alphas.front());
    for (const auto& model : models) {
        // Same seed for every model: common random numbers across rows.
        const LossDistribution dist = simulate(portfolio, model, n_paths, seed, options);
        QuantileRow row;
        row.variant = model.variant;
        for (double a : sorted_alphas) row.var.push_back(var(dist, a));
        row.tail_ratio = tail_ratio(row.var.back(), row.var.front());
        double sum = 0.0;
        for (double l : dist.losses) sum += l;
        row.mean_loss = sum / static_cast<double>(n_paths);
        report.rows.push_back(std::move(row));
    }
    return report;
}

Eigen::MatrixXd simulated_correlation(const CalibratedModel& model, std::size_t n_paths, std::uint64_t seed) {
    if (n_paths < 2) throw UsageError("correlation needs at least 2 paths");
    const Eigen::MatrixXd s = covariance_sqrt(model.omega);
    const auto n = static_cast<Eigen::Index>(model.n_issuers());
    const auto k = s.cols();
    Eigen::MatrixXd load(n, k);
    Eigen::VectorXd idio(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double b = std::clamp(model.beta(i), 0.0, 1.0);
        load.row(i) = std::sqrt(b) * (model.alpha.row(i) * s);
        idio(i) = std::sqrt(1.0 - b);
    }
    const std::uint64_t stream_seed = derive_seed(seed, "creditworthiness");
    constexpr std::size_t kBlock = 4096;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(kBlock), n);
    Eigen::VectorXd z(k);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t begin = 0; begin < n_paths; begin += kBlock) {
        const std::size_t rows = std::min(kBlock, n_paths - begin);
        for (std::size_t r = 0; r < rows; ++r) {
            PathRng rng(stream_seed, begin + r);
            for (Eigen::Index j = 0; j < k; ++j) z(j) = rng.normal();
            const auto ri = static_cast<Eigen::Index>(r);
            x.row(ri) = (load * z).transpose();
            for (Eigen::Index i = 0; i < n; ++i) x(ri, i) += idio(i) * rng.normal();
        }
        const auto block = x.topRows(static_cast<Eigen::Index>(rows));
        sum += block.colwise().sum().transpose();
        cross.noalias() += block.transpose() * block;
    }
    const double count = static_cast<double>(n_paths);
    const Eigen::VectorXd mean = sum / count;
    Eigen::MatrixXd cov = cross / count - mean * mean.transpose();
    const Eigen::VectorXd sd = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd corr(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            corr(i, j) = (sd(i) > 0.0 && sd(j) > 0.0) ? cov(i, j) / (sd(i) * sd(j)) : (i == j ? 1.0 : 0.0);
    return corr;
}

}  // namespace mesorisk
