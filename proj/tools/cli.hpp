#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mesorisk/factor_model.hpp"

namespace mesorisk::cli {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.3.0";

struct RunConfig {
    std::optional<fs::path> panel;
    std::optional<fs::path> meta;
    std::optional<fs::path> hierarchy;
    std::optional<fs::path> calibration_dir;
    std::vector<fs::path> portfolios;
    fs::path out_dir = "out";
    std::uint64_t seed = 42;
    std::string resolution = "1d";
    std::string calibration_resolution = "1m";
    std::vector<std::string> resolutions = {"1d", "2d", "1w", "2w", "1m"};
    std::string mode = "multiresolution";
    int window = 126;
    int restarts = 10;
    std::vector<ModelVariant> variants;  // empty: all
    std::size_t paths = 100000;
    std::vector<double> alphas = {0.99, 0.995, 0.999};
    unsigned threads = 1;
    bool include_below_bulk = true;
    bool biased_baseline = false;
    int max_depth = 2;
    std::size_t min_size = 4;
    double max_missing = 0.10;
    int max_gap = 5;
    std::string kind = "universe";  // synth only
    std::size_t n_obs = 0;          // synth only; 0 picks the kind default
    double beta = 0.5;              // synth only

    // Everything that affects outputs. The thread count is left out on
    // purpose: outputs do not depend on it.
    nlohmann::json to_json() const;
    std::string display_path(const fs::path& p) const;
};

// Git-style blob hash: SHA-1 of "blob <size>\0" followed by the content.
std::string blob_sha1(const std::string& content);
std::string file_blob_sha1(const fs::path& path);

// Collects the files a command writes so the manifest can list their hashes.
class OutputDir {
public:
    explicit OutputDir(fs::path root);
    const fs::path& root() const { return root_; }
    void write(const std::string& name, const std::string& content);
    void write_json(const std::string& name, const nlohmann::json& doc);
    const std::map<std::string, std::string>& written() const { return written_; }

private:
    fs::path root_;
    std::map<std::string, std::string> written_;  // name -> blob hash
};

struct Context {
    RunConfig config;
    OutputDir out;
    std::vector<std::string> warnings;
};

void write_manifest(Context& ctx, const std::string& command, const std::map<std::string, fs::path>& inputs,
                    const nlohmann::json& extra = nlohmann::json::object());

void cmd_spectrum(Context& ctx);
void cmd_detect(Context& ctx);
void cmd_stability(Context& ctx);
void cmd_calibrate(Context& ctx);
void cmd_simulate(Context& ctx);
void cmd_pipeline(Context& ctx);
void cmd_synth(Context& ctx);

}  // namespace mesorisk::cli
