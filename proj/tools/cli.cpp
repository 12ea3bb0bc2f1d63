#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <openssl/evp.h>

#include "mesorisk/community.hpp"
#include "mesorisk/error.hpp"
#include "mesorisk/matrix_io.hpp"
#include "mesorisk/partition_analysis.hpp"
#include "mesorisk/risk_engine.hpp"
#include "mesorisk/rng.hpp"
#include "mesorisk/spectra.hpp"
#include "mesorisk/synthetic.hpp"
#include "mesorisk/timeseries.hpp"

namespace mesorisk::cli {

using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void require_file(const std::optional<fs::path>& path, const std::string& option) {
    if (!path) throw UsageError("missing required option --" + option);
    if (!fs::exists(*path)) throw UsageError("input file not found: " + path->string());
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = r == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows[0].size());
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != c)
            throw DataError("ragged matrix in document");
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    }
    return m;
}

json vector_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd vector_from_json(const json& arr) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    return v;
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

SpreadPanel load_spreads(const RunConfig& c) {
    require_file(c.panel, "panel");
    if (c.meta) require_file(c.meta, "meta");
    LoadOptions opts;
    opts.max_missing_fraction = c.max_missing;
    opts.max_fill_gap = c.max_gap;
    return load_panel(*c.panel, c.meta, opts);
}

std::string fmt(double v) { return format_double(v); }

std::string letter_label(const Partition& p, std::size_t i) {
    return community_letter(static_cast<std::size_t>(p.labels[i]));
}

DetectOptions detect_options(const RunConfig& c) {
    DetectOptions o;
    o.restarts = c.restarts;
    o.include_below_bulk = c.include_below_bulk;
    o.null_model = c.biased_baseline ? NullModel::BiasedBaseline : NullModel::SpectralRmt;
    return o;
}

std::vector<ModelVariant> requested_variants(const RunConfig& c) {
    return c.variants.empty() ? all_variants() : c.variants;
}

json hierarchy_json(const Hierarchy& h, const std::vector<std::string>& issuers) {
    json node;
    node["name"] = h.name;
    node["depth"] = h.depth;
    json members = json::array();
    for (std::size_t m : h.members) members.push_back(issuers[m]);
    node["members"] = members;
    node["n_communities"] = h.partition.n_communities;
    node["quality"] = h.partition.quality;
    node["norm"] = h.norm;
    json communities = json::array();
    const auto groups = h.partition.members();
    for (std::size_t k = 0; k < groups.size(); ++k) {
        json entry;
        entry["name"] = h.community_names[k];
        json ids = json::array();
        for (std::size_t local : groups[k]) ids.push_back(issuers[h.members[local]]);
        entry["members"] = ids;
        const auto it = h.children.find(static_cast<int>(k));
        entry["children"] = it == h.children.end() ? json(nullptr) : hierarchy_json(it->second, issuers);
        communities.push_back(std::move(entry));
    }
    node["communities"] = communities;
    return node;
}

json model_json(const CalibratedModel& m) {
    json doc;
    doc["schema"] = "mesorisk.calibration/1";
    doc["variant"] = to_string(m.variant);
    doc["description"] = describe(m.variant);
    doc["issuers"] = m.issuers;
    doc["factor_names"] = m.factor_names;
    doc["omega"] = matrix_json(m.omega);
    doc["alpha_hat"] = matrix_json(m.alpha_hat);
    doc["alpha"] = matrix_json(m.alpha);
    doc["beta"] = vector_json(m.beta);
    doc["r_squared"] = vector_json(m.r_squared);
    doc["psi"] = vector_json(m.psi);
    doc["group_path"] = m.group_path;
    return doc;
}

CalibratedModel model_from_json(const json& doc, const fs::path& source) {
    try {
        CalibratedModel m;
        m.variant = parse_variant(doc.at("variant").get<std::string>());
        m.issuers = doc.at("issuers").get<std::vector<std::string>>();
        m.factor_names = doc.at("factor_names").get<std::vector<std::string>>();
        m.omega = matrix_from_json(doc.at("omega"));
        m.alpha = matrix_from_json(doc.at("alpha"));
        m.alpha_hat = doc.contains("alpha_hat") ? matrix_from_json(doc["alpha_hat"]) : m.alpha;
        m.beta = vector_from_json(doc.at("beta"));
        m.r_squared = doc.contains("r_squared") ? vector_from_json(doc["r_squared"]) : m.beta;
        m.psi = doc.contains("psi") ? vector_from_json(doc["psi"]) : Eigen::VectorXd::Ones(m.beta.size());
        if (doc.contains("group_path")) m.group_path = doc["group_path"].get<std::vector<std::string>>();
        const auto n = static_cast<Eigen::Index>(m.issuers.size());
        const auto k = static_cast<Eigen::Index>(m.factor_names.size());
        if (m.omega.rows() != k || m.omega.cols() != k || m.alpha.rows() != n || m.alpha.cols() != k ||
            m.beta.size() != n)
            throw DataError("inconsistent dimensions in " + source.string());
        return m;
    } catch (const json::exception& e) {
        throw DataError("bad calibration document " + source.string() + ": " + e.what());
    }
}

// Histogram of values over [lower, upper) as a density.
std::vector<double> density(const Eigen::VectorXd& values, double lower, double upper, std::size_t bins) {
    std::vector<double> out(bins, 0.0);
    const double width = (upper - lower) / static_cast<double>(bins);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        const double v = values(i);
        if (v < lower || v >= upper) continue;
        ++out[std::min(bins - 1, static_cast<std::size_t>((v - lower) / width))];
    }
    for (double& d : out) d /= static_cast<double>(values.size()) * width;
    return out;
}

}  // namespace

std::string RunConfig::display_path(const fs::path& p) const {
    // Paths under the output directory are recorded relative to it, so a
    // replay into another directory yields the same manifest.
    const fs::path rel = p.lexically_normal().lexically_relative(out_dir.lexically_normal());
    if (!rel.empty() && *rel.begin() != "..") return "$OUT/" + rel.generic_string();
    return p.generic_string();
}

json RunConfig::to_json() const {
    auto opt_path = [&](const std::optional<fs::path>& p) { return p ? json(display_path(*p)) : json(nullptr); };
    json j;
    j["panel"] = opt_path(panel);
    j["meta"] = opt_path(meta);
    j["hierarchy"] = opt_path(hierarchy);
    j["calibration_dir"] = opt_path(calibration_dir);
    json ports = json::array();
    for (const auto& p : portfolios) ports.push_back(display_path(p));
    j["portfolios"] = ports;
    j["seed"] = seed;
    j["resolution"] = resolution;
    j["calibration_resolution"] = calibration_resolution;
    j["resolutions"] = resolutions;
    j["mode"] = mode;
    j["window"] = window;
    j["restarts"] = restarts;
    json vs = json::array();
    for (auto v : requested_variants(*this)) vs.push_back(to_string(v));
    j["variants"] = vs;
    j["paths"] = paths;
    j["alphas"] = alphas;
    j["include_below_bulk"] = include_below_bulk;
    j["biased_baseline"] = biased_baseline;
    j["max_depth"] = max_depth;
    j["min_size"] = min_size;
    j["max_missing"] = max_missing;
    j["max_gap"] = max_gap;
    j["tolerances"] = {{"long_only_sum", 1e-12}, {"long_short_sum", 1e-12}, {"louvain_gain", 1e-12}};
    return j;
}

std::string blob_sha1(const std::string& content) {
    const std::string framed = "blob " + std::to_string(content.size()) + '\0' + content;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(framed.data(), framed.size(), digest, &len, EVP_sha1(), nullptr) != 1)
        throw NumericalError("SHA-1 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

std::string file_blob_sha1(const fs::path& path) { return blob_sha1(read_file(path)); }

OutputDir::OutputDir(fs::path root) : root_(std::move(root)) {}

void OutputDir::write(const std::string& name, const std::string& content) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw UsageError("cannot create output directory " + root_.string() + ": " + ec.message());
    std::ofstream out(root_ / name, std::ios::binary);
    if (!out) throw UsageError("cannot write " + (root_ / name).string());
    out << content;
    written_[name] = blob_sha1(content);
}

void OutputDir::write_json(const std::string& name, const json& doc) { write(name, doc.dump(2) + "\n"); }

void write_manifest(Context& ctx, const std::string& command, const std::map<std::string, fs::path>& inputs,
                    const json& extra) {
    json m;
    m["schema"] = "mesorisk.manifest/1";
    m["command"] = command;
    m["version"] = kVersion;
    m["seed"] = ctx.config.seed;
    m["config"] = ctx.config.to_json();
    json in = json::object();
    for (const auto& [role, path] : inputs)
        in[role] = {{"path", ctx.config.display_path(path)}, {"sha1", file_blob_sha1(path)}};
    m["inputs"] = in;
    m["outputs"] = ctx.out.written();
    m["warnings"] = ctx.warnings;
    for (const auto& [k, v] : extra.items()) m[k] = v;
    ctx.out.write_json("manifest_" + command + ".json", m);
}

void cmd_spectrum(Context& ctx) {
    const RunConfig& c = ctx.config;
    const SpreadPanel spreads = load_spreads(c);
    const Resolution res = parse_resolution(c.resolution);
    const ReturnPanel returns = standardize(log_returns(spreads, res));
    const CorrelationMatrix corr = correlation(returns);
    const SpectralDecomposition dec = decompose(corr);
    const ShuffleResult shuffled = shuffle_test(returns, derive_seed(c.seed, "spectrum"));
    const auto n = dec.eigenvalues.size();

    std::ostringstream ev;
    ev << "rank,eigenvalue,tag,shuffled_eigenvalue\n";
    for (Eigen::Index k = 0; k < n; ++k)
        ev << k + 1 << ',' << fmt(dec.eigenvalues(k)) << ',' << to_string(dec.tags[static_cast<std::size_t>(k)])
           << ',' << fmt(shuffled.eigenvalues(k)) << '\n';
    ctx.out.write("eigenvalues.csv", ev.str());

    const std::size_t bins = 60;
    const double upper = 2.0 * dec.bounds.lambda_plus;
    const auto emp = density(dec.eigenvalues, 0.0, upper, bins);
    const auto shuf = density(shuffled.eigenvalues, 0.0, upper, bins);
    std::ostringstream dens;
    dens << "lambda_lower,lambda_upper,empirical_density,shuffled_density,mp_density\n";
    const double width = upper / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        const double lo = width * static_cast<double>(b);
        dens << fmt(lo) << ',' << fmt(lo + width) << ',' << fmt(emp[b]) << ',' << fmt(shuf[b]) << ','
             << fmt(mp_density(lo + 0.5 * width, corr.n_series(), corr.n_obs)) << '\n';
    }
    ctx.out.write("density.csv", dens.str());

    std::ostringstream bin;
    write_matrix_binary(bin, corr.entries);
    ctx.out.write("correlation.mrk", bin.str());

    std::size_t inside = 0;
    for (Eigen::Index k = 0; k < n; ++k) inside += dec.bounds.contains(dec.eigenvalues(k)) ? 1 : 0;
    const double fraction = static_cast<double>(inside) / static_cast<double>(n);
    std::size_t above = 0;
    for (Eigen::Index k = 0; k < n; ++k) above += dec.eigenvalues(k) > dec.bounds.lambda_plus ? 1 : 0;

    json doc;
    doc["schema"] = "mesorisk.spectrum/1";
    doc["panel_sha1"] = file_blob_sha1(*c.panel);
    doc["resolution"] = res.label();
    doc["n_series"] = corr.n_series();
    doc["n_obs"] = corr.n_obs;
    doc["issuers"] = corr.issuers;
    doc["lambda_minus"] = dec.bounds.lambda_minus;
    doc["lambda_plus"] = dec.bounds.lambda_plus;
    doc["largest_eigenvalue"] = dec.eigenvalues(0);
    doc["market_index"] = dec.market_index ? json(*dec.market_index) : json(nullptr);
    doc["counts"] = {{"random", dec.count(EigenTag::Random)},
                     {"group", dec.count(EigenTag::Group)},
                     {"market", dec.count(EigenTag::Market)},
                     {"below_bulk", dec.count(EigenTag::BelowBulk)}};
    doc["n_above_bulk"] = above;
    doc["fraction_in_bulk"] = fraction;
    doc["shuffle_fraction_in_bulk"] = shuffled.fraction_in_bulk;
    json dropped = json::array();
    for (const auto& d : spreads.dropped) dropped.push_back({{"issuer", d.issuer}, {"reason", d.reason}});
    doc["dropped"] = dropped;
    ctx.out.write_json("spectrum.json", doc);
    write_manifest(ctx, "spectrum", {{"panel", *c.panel}});

    std::cout << "spectrum: N=" << corr.n_series() << " T=" << corr.n_obs << " lambda- = " << fmt(dec.bounds.lambda_minus)
              << " lambda+ = " << fmt(dec.bounds.lambda_plus) << "\n"
              << "  largest eigenvalue " << fmt(dec.eigenvalues(0)) << ", eigenvalues above bulk: " << above
              << " (group " << dec.count(EigenTag::Group) << ", market " << dec.count(EigenTag::Market) << ")\n"
              << "  bulk fraction " << fmt(fraction) << ", shuffled bulk fraction " << fmt(shuffled.fraction_in_bulk)
              << "\n";
}

void cmd_detect(Context& ctx) {
    const RunConfig& c = ctx.config;
    const SpreadPanel spreads = load_spreads(c);
    const Resolution res = parse_resolution(c.resolution);

    // Reuse the spectrum command's correlation when it came from the same panel.
    std::optional<CorrelationMatrix> corr;
    const fs::path spectrum_doc = c.out_dir / "spectrum.json";
    const fs::path spectrum_bin = c.out_dir / "correlation.mrk";
    bool reused = false;
    if (fs::exists(spectrum_doc) && fs::exists(spectrum_bin)) {
        const json s = read_json(spectrum_doc);
        if (s.value("panel_sha1", "") == file_blob_sha1(*c.panel) && s.value("resolution", "") == res.label() &&
            s.value("issuers", std::vector<std::string>{}) == spreads.issuers) {
            CorrelationMatrix m;
            m.entries = read_matrix_binary(spectrum_bin);
            m.n_obs = s.at("n_obs").get<std::size_t>();
            m.issuers = spreads.issuers;
            if (m.entries.rows() == static_cast<Eigen::Index>(spreads.n_issuers())) {
                corr = std::move(m);
                reused = true;
            }
        }
    }
    if (!corr) corr = correlation(standardize(log_returns(spreads, res)));

    const Detection d = detect(*corr, derive_seed(c.seed, "detect"), detect_options(c));
    HierarchyOptions hopt;
    hopt.max_depth = c.max_depth;
    hopt.min_size = c.min_size;
    hopt.restarts = c.restarts;
    hopt.include_below_bulk = c.include_below_bulk;
    const Hierarchy h = hierarchy(*corr, d.partition, derive_seed(c.seed, "hierarchy"), hopt);
    const auto& issuers = spreads.issuers;
    const std::size_t n = issuers.size();
    const auto paths = h.label_paths(n);

    json part;
    part["schema"] = "mesorisk.partition/1";
    part["status"] = to_string(d.status);
    part["null_model"] = d.null_model == NullModel::SpectralRmt ? "spectral_rmt" : "biased_baseline";
    part["quality"] = d.partition.quality;
    part["norm"] = d.norm;
    part["n_group_eigenvalues"] = d.n_group_eigenvalues;
    part["n_communities"] = d.partition.n_communities;
    part["issuers"] = issuers;
    json labels = json::array();
    for (std::size_t i = 0; i < n; ++i) labels.push_back(letter_label(d.partition, i));
    part["labels"] = labels;
    const auto contributions = modularity_contributions(d.filtered, d.norm, d.partition);
    json communities = json::array();
    const auto groups = d.partition.members();
    for (std::size_t k = 0; k < groups.size(); ++k) {
        json ids = json::array();
        for (std::size_t i : groups[k]) ids.push_back(issuers[i]);
        communities.push_back({{"name", community_letter(k)},
                               {"size", groups[k].size()},
                               {"members", ids},
                               {"contribution", contributions[k]}});
    }
    part["communities"] = communities;

    std::ostringstream comm;
    comm << "issuer_id,community,path\n";
    for (std::size_t i = 0; i < n; ++i) comm << issuers[i] << ',' << letter_label(d.partition, i) << ',' << paths[i] << '\n';

    if (spreads.has_meta()) {
        std::ostringstream comp;
        comp << "community,dimension,category,count\n";
        json breakdown = json::array();
        for (std::size_t k = 0; k < groups.size(); ++k) {
            std::map<std::string, std::size_t> by_sector, by_region;
            for (std::size_t i : groups[k]) {
                const auto& m = spreads.meta[i];
                ++by_sector[m.present ? m.sector : "unknown"];
                ++by_region[m.present ? m.region : "unknown"];
            }
            for (const auto& [cat, count] : by_sector)
                comp << community_letter(k) << ",sector," << cat << ',' << count << '\n';
            for (const auto& [cat, count] : by_region)
                comp << community_letter(k) << ",region," << cat << ',' << count << '\n';
            breakdown.push_back({{"community", community_letter(k)}, {"sector", by_sector}, {"region", by_region}});
        }
        ctx.out.write("composition.csv", comp.str());
        part["composition"] = breakdown;
    } else {
        part["composition"] = nullptr;
        part["note"] = "no metadata supplied; composition breakdowns omitted";
    }
    ctx.out.write_json("partition.json", part);

    json hdoc;
    hdoc["schema"] = "mesorisk.hierarchy/1";
    hdoc["issuers"] = issuers;
    hdoc["paths"] = paths;
    hdoc["max_depth"] = c.max_depth;
    hdoc["min_size"] = c.min_size;
    hdoc["tree"] = hierarchy_json(h, issuers);
    ctx.out.write_json("hierarchy.json", hdoc);
    ctx.out.write("communities.csv", comm.str());

    std::map<std::string, fs::path> inputs{{"panel", *c.panel}};
    if (c.meta) inputs["meta"] = *c.meta;
    write_manifest(ctx, "detect", inputs, {{"correlation_source", reused ? "spectrum" : "computed"}});

    std::cout << "detect: status " << to_string(d.status) << ", " << d.partition.n_communities
              << " communities, Q = " << fmt(d.partition.quality) << ", group eigenvalues "
              << d.n_group_eigenvalues << (reused ? " (correlation reused)" : "") << "\n";
    for (const auto& [path, members] : h.leaves())
        std::cout << "  " << path << ": " << members.size() << " issuers\n";
    if (!spreads.has_meta()) std::cout << "  note: no metadata supplied; composition breakdowns omitted\n";
}

void cmd_stability(Context& ctx) {
    const RunConfig& c = ctx.config;
    const SpreadPanel spreads = load_spreads(c);
    StabilityParams params;
    params.detect = detect_options(c);
    StabilityMode mode;
    if (c.mode == "multiresolution") {
        mode = StabilityMode::Multiresolution;
        params.resolutions.clear();
        for (const auto& r : c.resolutions) params.resolutions.push_back(parse_resolution(r));
    } else if (c.mode == "sliding") {
        mode = StabilityMode::SlidingWindow;
        params.window_days = c.window;
        params.window_resolution = parse_resolution(c.resolution);
    } else {
        throw UsageError("unknown stability mode '" + c.mode + "' (multiresolution or sliding)");
    }
    const StabilityReport r = stability_study(spreads, mode, params, derive_seed(c.seed, "stability"));

    std::ostringstream vi;
    vi << "label";
    for (const auto& l : r.labels) vi << ',' << l;
    vi << '\n';
    for (Eigen::Index i = 0; i < r.vi.rows(); ++i) {
        vi << r.labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < r.vi.cols(); ++j) vi << ',' << fmt(r.vi(i, j));
        vi << '\n';
    }
    ctx.out.write("vi_matrix.csv", vi.str());

    std::vector<std::string> ordered_ids;
    for (std::size_t k : r.cooccurrence.ordering) ordered_ids.push_back(spreads.issuers[k]);
    std::ostringstream co;
    write_matrix_csv(co, r.cooccurrence.ordered(), ordered_ids);
    ctx.out.write("cooccurrence.csv", co.str());

    json doc;
    doc["schema"] = "mesorisk.stability/1";
    doc["mode"] = c.mode;
    doc["labels"] = r.labels;
    json statuses = json::array(), counts = json::array(), parts = json::array();
    for (std::size_t k = 0; k < r.partitions.size(); ++k) {
        statuses.push_back(to_string(r.statuses[k]));
        counts.push_back(r.partitions[k].n_communities);
        parts.push_back(r.partitions[k].labels);
    }
    doc["statuses"] = statuses;
    doc["n_communities"] = counts;
    doc["partitions"] = parts;
    doc["issuers"] = spreads.issuers;
    doc["vi_vs_baseline"] = r.vi_vs_baseline;
    doc["max_pairwise_vi"] = r.max_pairwise_vi();
    doc["includes_full_period"] = r.includes_full_period;
    doc["cooccurrence_order"] = ordered_ids;
    ctx.out.write_json("stability.json", doc);
    write_manifest(ctx, "stability", {{"panel", *c.panel}});

    std::cout << "stability: " << r.partitions.size() << " partitions (" << c.mode << "), VI matrix "
              << r.vi.rows() << "x" << r.vi.cols() << ", max pairwise VI " << fmt(r.max_pairwise_vi()) << "\n";
}

void cmd_calibrate(Context& ctx) {
    const RunConfig& c = ctx.config;
    const auto variants = requested_variants(c);
    bool needs_meta = false, needs_hierarchy = false;
    for (auto v : variants) {
        for (auto kind : variant_kinds(v)) {
            if (kind == FactorKind::Industry || kind == FactorKind::Region) needs_meta = true;
            if (kind == FactorKind::Community || kind == FactorKind::Subcommunity) needs_hierarchy = true;
        }
    }
    if (needs_hierarchy && !c.hierarchy)
        throw UsageError("variants M5 and M6 need community labels: pass --hierarchy with a hierarchy.json "
                         "written by the detect command, or drop M5/M6 via --variant");
    if (needs_meta && !c.meta)
        throw UsageError("variants M2-M4 need issuer metadata: pass --meta, or drop them via --variant");
    if (c.hierarchy) require_file(c.hierarchy, "hierarchy");

    const SpreadPanel spreads = load_spreads(c);
    const ReturnPanel returns = standardize(log_returns(spreads, parse_resolution(c.calibration_resolution)));
    GroupLabels groups = group_labels(spreads.meta, spreads.n_issuers());
    if (c.hierarchy) {
        const json h = read_json(*c.hierarchy);
        const auto ids = h.at("issuers").get<std::vector<std::string>>();
        if (ids != spreads.issuers)
            throw DataError("hierarchy " + c.hierarchy->string() + " covers a different issuer set than the panel");
        assign_communities(groups, h.at("paths").get<std::vector<std::string>>());
    }
    const FactorSet factors = orthogonalize(build_factors(returns, groups));
    const CorrelationMatrix empirical = correlation(returns);

    std::ostringstream fac;
    fac << "factor,kind,group,members,gamma,t_statistic,p_value,r_squared,residual_sd,factor_sd,global_sd\n";
    for (const auto& f : factors.factors) {
        const auto& d = f.diagnostics;
        fac << f.name << ',' << to_string(f.kind) << ',' << f.group << ',' << f.members.size() << ',' << fmt(d.gamma)
            << ',' << fmt(d.t_statistic) << ',' << fmt(d.p_value) << ',' << fmt(d.r_squared) << ','
            << fmt(d.residual_sd) << ',' << fmt(d.factor_sd) << ',' << fmt(d.global_sd) << '\n';
    }
    ctx.out.write("factors.csv", fac.str());

    std::ostringstream r2, err;
    r2 << "variant,description,mean,sd,min,max\n";
    err << "variant,mean,sd,mean_abs,max_abs,tail_mass\n";
    json summary = json::array();
    for (auto v : variants) {
        const CalibratedModel model = calibrate(returns, factors, v);
        const std::string tag = to_string(v);
        ctx.out.write_json("calibration_" + tag + ".json", model_json(model));

        std::ostringstream load;
        load << "issuer_id,group_path,beta,r_squared,psi";
        for (const auto& f : model.factor_names) load << ",alpha:" << f;
        load << '\n';
        for (std::size_t i = 0; i < model.n_issuers(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            load << model.issuers[i] << ',' << (i < model.group_path.size() ? model.group_path[i] : "") << ','
                 << fmt(model.beta(ii)) << ',' << fmt(model.r_squared(ii)) << ',' << fmt(model.psi(ii));
            for (Eigen::Index k = 0; k < model.alpha.cols(); ++k) load << ',' << fmt(model.alpha(ii, k));
            load << '\n';
        }
        ctx.out.write("loadings_" + tag + ".csv", load.str());

        const RSquaredSummary s = r_squared_summary(model);
        r2 << tag << ',' << describe(v) << ',' << fmt(s.mean) << ',' << fmt(s.sd) << ',' << fmt(s.min) << ','
           << fmt(s.max) << '\n';
        const CorrelationErrorReport e = correlation_error_report(model, empirical);
        err << tag << ',' << fmt(e.mean) << ',' << fmt(e.sd) << ',' << fmt(e.mean_abs) << ',' << fmt(e.max_abs) << ','
            << fmt(e.tail_mass) << '\n';

        std::ostringstream hist;
        hist << "bin_lower,bin_upper,difference_count,empirical_count\n";
        const auto& dh = e.difference_histogram;
        for (std::size_t b = 0; b < dh.counts.size(); ++b) {
            const double lo = dh.lower + dh.bin_width() * static_cast<double>(b);
            hist << fmt(lo) << ',' << fmt(lo + dh.bin_width()) << ',' << dh.counts[b] << ','
                 << e.empirical_histogram.counts[b] << '\n';
        }
        ctx.out.write("correlation_errors_" + tag + ".csv", hist.str());
        summary.push_back({{"variant", tag},
                           {"r_squared_mean", s.mean},
                           {"r_squared_sd", s.sd},
                           {"error_mean_abs", e.mean_abs},
                           {"error_max_abs", e.max_abs}});
        std::cout << "calibrate " << tag << " (" << describe(v) << "): mean beta " << fmt(s.mean) << ", sd "
                  << fmt(s.sd) << ", mean |model - empirical| correlation " << fmt(e.mean_abs) << "\n";
    }
    ctx.out.write("r_squared_summary.csv", r2.str());
    ctx.out.write("correlation_errors.csv", err.str());

    json doc;
    doc["schema"] = "mesorisk.calibrate/1";
    doc["resolution"] = parse_resolution(c.calibration_resolution).label();
    doc["n_obs"] = returns.n_obs();
    doc["n_issuers"] = returns.n_series();
    doc["factors"] = factors.names();
    doc["variants"] = summary;
    ctx.out.write_json("calibrate.json", doc);

    std::map<std::string, fs::path> inputs{{"panel", *c.panel}};
    if (c.meta) inputs["meta"] = *c.meta;
    if (c.hierarchy) inputs["hierarchy"] = *c.hierarchy;
    write_manifest(ctx, "calibrate", inputs);
}

void cmd_simulate(Context& ctx) {
    const RunConfig& c = ctx.config;
    if (c.paths == 0) throw UsageError("--paths must be positive");
    for (double a : c.alphas)
        if (!(a > 0.0 && a < 1.0)) throw UsageError("alphas must lie in (0, 1)");
    const fs::path dir = c.calibration_dir.value_or(c.out_dir);
    if (!fs::is_directory(dir)) throw UsageError("calibration directory not found: " + dir.string());

    std::map<std::string, fs::path> inputs;
    std::vector<CalibratedModel> models;
    for (auto v : requested_variants(c)) {
        const fs::path file = dir / ("calibration_" + std::string(to_string(v)) + ".json");
        if (!fs::exists(file)) {
            if (c.variants.empty()) continue;
            throw UsageError("calibration document not found: " + file.string());
        }
        models.push_back(model_from_json(read_json(file), file));
        inputs["calibration_" + std::string(to_string(v))] = file;
    }
    if (models.empty()) throw UsageError("no calibration documents in " + dir.string() + "; run calibrate first");

    std::vector<Portfolio> portfolios;
    if (c.portfolios.empty()) {
        portfolios = synthetic::schematic_portfolios();
    } else {
        for (const auto& p : c.portfolios) {
            if (!fs::exists(p)) throw UsageError("input file not found: " + p.string());
            portfolios.push_back(read_portfolio_csv(p));
            inputs["portfolio_" + portfolios.back().name] = p;
        }
    }

    SimulationOptions opts;
    opts.threads = c.threads;
    std::vector<double> alphas = c.alphas;
    std::sort(alphas.begin(), alphas.end());

    std::ostringstream csv;
    csv << "portfolio,kind,model";
    for (double a : alphas) csv << ",var_" << fmt(a);
    csv << ",tail_ratio,normal_ratio,mean_loss\n";
    json reports = json::array();
    json portfolio_info = json::array();
    for (const auto& p : portfolios) {
        p.validate(opts.table);
        const QuantileReport r = quantile_report(p, models, alphas, c.paths, c.seed, opts);
        json rows = json::array();
        for (const auto& row : r.rows) {
            csv << p.name << ',' << to_string(p.kind) << ',' << to_string(row.variant);
            for (double v : row.var) csv << ',' << fmt(v);
            csv << ',' << fmt(row.tail_ratio) << ',' << fmt(r.normal_ratio) << ',' << fmt(row.mean_loss) << '\n';
            rows.push_back({{"model", to_string(row.variant)},
                            {"var", row.var},
                            {"tail_ratio", std::isfinite(row.tail_ratio) ? json(row.tail_ratio) : json(fmt(row.tail_ratio))},
                            {"mean_loss", row.mean_loss}});
        }
        reports.push_back({{"portfolio", p.name}, {"rows", rows}});
        double pd_sum = 0.0;
        for (const auto& pos : p.positions) pd_sum += pos.resolved_pd(opts.table);
        portfolio_info.push_back({{"name", p.name},
                                  {"kind", to_string(p.kind)},
                                  {"size", p.size()},
                                  {"exposure_sum", p.exposure_sum()},
                                  // validate() above has already enforced the constraint.
                                  {"exposure_constraint", p.kind == PortfolioKind::LongOnly    ? json("sum = 1")
                                                          : p.kind == PortfolioKind::LongShort ? json("sum = 0")
                                                                                               : json(nullptr)},
                                  {"average_pd", pd_sum / static_cast<double>(p.size())}});
        std::cout << "simulate " << p.name << " (" << to_string(p.kind) << ", " << p.size() << " names)\n";
        for (const auto& row : r.rows) {
            std::cout << "  " << to_string(row.variant);
            for (std::size_t k = 0; k < alphas.size(); ++k) std::cout << "  VaR " << fmt(alphas[k]) << " = " << fmt(row.var[k]);
            std::cout << "  tail ratio " << fmt(row.tail_ratio) << "\n";
        }
    }
    ctx.out.write("quantiles.csv", csv.str());
    json doc;
    doc["schema"] = "mesorisk.quantiles/1";
    doc["alphas"] = alphas;
    doc["n_paths"] = c.paths;
    doc["normal_ratio"] = normal_tail_ratio(alphas.back(), alphas.front());
    doc["reports"] = reports;
    ctx.out.write_json("quantiles.json", doc);
    write_manifest(ctx, "simulate", inputs,
                   {{"n_paths", c.paths}, {"portfolios", portfolio_info},
                    {"model_variants", [&] {
                         json v = json::array();
                         for (const auto& m : models) v.push_back(to_string(m.variant));
                         return v;
                     }()}});
}

void cmd_pipeline(Context& ctx) {
    cmd_spectrum(ctx);
    cmd_detect(ctx);
    cmd_stability(ctx);
    RunConfig& c = ctx.config;
    if (!c.hierarchy) c.hierarchy = c.out_dir / "hierarchy.json";
    if (!c.meta && c.variants.empty())
        c.variants = {ModelVariant::M1_Global, ModelVariant::M5_GlobalCommunity, ModelVariant::M6_GlobalSubcommunity};
    cmd_calibrate(ctx);
    if (!c.calibration_dir) c.calibration_dir = c.out_dir;
    cmd_simulate(ctx);
    write_manifest(ctx, "pipeline", {{"panel", *c.panel}});
}

void cmd_synth(Context& ctx) {
    const RunConfig& c = ctx.config;
    json doc;
    doc["schema"] = "mesorisk.synth/1";
    doc["kind"] = c.kind;
    doc["seed"] = c.seed;
    auto emit_panel = [&](const ReturnPanel& returns) {
        const SpreadPanel spreads = synthetic::spreads_from_returns(returns);
        std::ostringstream s;
        synthetic::write_spread_csv(s, spreads);
        ctx.out.write("panel.csv", s.str());
        if (!returns.meta.empty()) {
            std::ostringstream m;
            synthetic::write_meta_csv(m, returns.issuers, returns.meta);
            ctx.out.write("meta.csv", m.str());
        }
        doc["n_series"] = returns.n_series();
        doc["n_obs"] = returns.n_obs();
    };
    auto obs = [&](std::size_t fallback) { return c.n_obs > 0 ? c.n_obs : fallback; };

    if (c.kind == "noise") {
        emit_panel(synthetic::gaussian_panel(200, obs(1000), c.seed));
    } else if (c.kind == "two-block") {
        emit_panel(synthetic::correlated_panel(synthetic::block_correlation(2, 50, 0.5), obs(1000), c.seed));
        doc["block_size"] = 50;
        doc["rho"] = 0.5;
    } else if (c.kind == "planted") {
        synthetic::PlantedSpec spec;
        spec.n_obs = obs(3000);
        const auto planted = synthetic::planted_panel(spec, c.seed);
        emit_panel(planted.panel);
        std::ostringstream t;
        t << "issuer_id,group\n";
        for (std::size_t i = 0; i < planted.panel.n_series(); ++i)
            t << planted.panel.issuers[i] << ',' << community_letter(static_cast<std::size_t>(planted.truth.labels[i])) << '\n';
        ctx.out.write("truth.csv", t.str());
        doc["n_groups"] = spec.n_groups;
        doc["group_loading"] = spec.group_loading;
        doc["group_correlation"] = spec.group_correlation;
        doc["market_loading"] = spec.market_loading;
    } else if (c.kind == "model" || c.kind == "one-factor" || c.kind == "universe") {
        synthetic::ModelSpec spec;
        spec.beta = c.beta;
        if (c.kind == "one-factor") spec.region_weight = spec.sector_weight = 0.0;
        std::vector<std::string> ids;
        std::vector<IssuerMeta> meta;
        if (c.kind != "universe") {
            ids = synthetic::numbered_ids("ISS", 40);
            meta = synthetic::cycled_meta(40);
        } else {
            const auto u = synthetic::schematic_universe();
            ids = u.issuers;
            meta = u.meta;
        }
        // Monthly calibration needs 21 daily steps per observation.
        emit_panel(synthetic::model_panel(ids, meta, obs(c.kind == "universe" ? 2608 : 2520), spec, c.seed));
        doc["beta"] = spec.beta;
        if (c.kind == "universe") {
            for (const auto& p : synthetic::schematic_portfolios()) {
                std::ostringstream s;
                write_portfolio_csv(s, p);
                ctx.out.write(p.name + ".csv", s.str());
            }
        }
    } else if (c.kind == "binomial") {
        // Independent issuers: a one-factor model with zero systematic share.
        CalibratedModel m;
        m.variant = ModelVariant::M1_Global;
        m.issuers = synthetic::numbered_ids("BIN", 50);
        m.factor_names = {"global"};
        m.omega = Eigen::MatrixXd::Ones(1, 1);
        m.alpha = m.alpha_hat = Eigen::MatrixXd::Ones(50, 1);
        m.beta = m.r_squared = Eigen::VectorXd::Zero(50);
        m.psi = Eigen::VectorXd::Ones(50);
        m.group_path.assign(50, "");
        ctx.out.write_json("calibration_M1.json", model_json(m));
        Portfolio p;
        p.name = "binomial";
        for (const auto& id : m.issuers) {
            Position pos;
            pos.issuer_id = id;
            pos.exposure = 1.0 / 50.0;
            pos.pd = 0.05;
            p.positions.push_back(pos);
        }
        std::ostringstream s;
        write_portfolio_csv(s, p);
        ctx.out.write("portfolio_binomial.csv", s.str());
    } else {
        throw UsageError("unknown synth kind '" + c.kind + "' (noise, two-block, planted, model, one-factor, universe, binomial)");
    }
    ctx.out.write_json("synth.json", doc);
    write_manifest(ctx, "synth", {});
    std::cout << "synth: wrote " << c.kind << " data to " << c.out_dir.string() << "\n";
}

}  // namespace mesorisk::cli
