#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "quadshade/proposal.hpp"
#include "quadshade/types.hpp"

namespace quadshade {

// File formats: PFM depth/intensity maps, 16-bit PGM masks, and the versioned
// JSON proposals container.

// --- PFM (grayscale "Pf", little-endian written with scale -1.0; big-endian
// inputs with positive scale are converted on read) ---
void write_pfm(const std::string& path, const Eigen::ArrayXXd& data);
Eigen::ArrayXXd read_pfm(const std::string& path);

// --- binary 16-bit PGM (used for masks: 0 = masked out, 65535 = valid) ---
void write_pgm16(const std::string& path,
                 const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& mask);
Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> read_pgm16(const std::string& path);

// --- proposals container, schema "quadshade/proposals/v1" ---
struct ImageProposals {
    int height = 0, width = 0;
    LightVector light;
    NoiseModel noise;
    int J = 21;
    FitOptions fit;
    std::vector<ScaleDistributions> scales;
    nlohmann::json config; // fully-resolved run configuration
};

nlohmann::json proposals_to_json(const ImageProposals& p);
ImageProposals proposals_from_json(const nlohmann::json& j);
void write_proposals(const std::string& path, const ImageProposals& p);
ImageProposals read_proposals(const std::string& path);

// --- run configuration ---
// Full default configuration document; every run emits its resolved copy.
nlohmann::json default_run_config();

// Overlay user values onto the defaults; unknown keys are rejected.
nlohmann::json resolve_run_config(const nlohmann::json& user);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);
nlohmann::json read_json_file(const std::string& path);

} // namespace quadshade
