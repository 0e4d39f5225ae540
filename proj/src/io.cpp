#include "quadshade/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "quadshade/util.hpp"

namespace quadshade {

namespace {

std::string fnv_hex(const std::string& data) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(data);
    return os.str();
}

uint16_t swap16(uint16_t v) { return static_cast<uint16_t>((v >> 8) | (v << 8)); }

float swap_float(float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    u = ((u >> 24) & 0xff) | ((u >> 8) & 0xff00) | ((u << 8) & 0xff0000) | (u << 24);
    std::memcpy(&f, &u, 4);
    return f;
}

std::string next_token(std::istream& in) {
    std::string tok;
    in >> tok;
    if (!in) throw IoError("unexpected end of header");
    return tok;
}

} // namespace

void write_pfm(const std::string& path, const Eigen::ArrayXXd& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_pfm: cannot open " + path);
    const int rows = static_cast<int>(data.rows());
    const int cols = static_cast<int>(data.cols());
    out << "Pf\n" << cols << " " << rows << "\n-1.0\n";
    // PFM scanlines run bottom-to-top.
    std::vector<float> line(cols);
    for (int r = rows - 1; r >= 0; --r) {
        for (int c = 0; c < cols; ++c) line[c] = static_cast<float>(data(r, c));
        out.write(reinterpret_cast<const char*>(line.data()), sizeof(float) * cols);
    }
    if (!out) throw IoError("write_pfm: write failed for " + path);
}

Eigen::ArrayXXd read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_pfm: cannot open " + path);
    std::string magic = next_token(in);
    if (magic != "Pf") throw IoError("read_pfm: expected grayscale 'Pf', got '" + magic + "'");
    int cols, rows;
    double scale;
    try {
        cols = std::stoi(next_token(in));
        rows = std::stoi(next_token(in));
        scale = std::stod(next_token(in));
    } catch (const std::exception&) {
        throw IoError("read_pfm: malformed header in " + path);
    }
    if (cols <= 0 || rows <= 0 || scale == 0.0)
        throw IoError("read_pfm: invalid dimensions or scale in " + path);
    in.get(); // single whitespace byte before the raster
    const bool big_endian = scale > 0.0;

    std::vector<float> line(cols);
    Eigen::ArrayXXd data(rows, cols);
    for (int r = rows - 1; r >= 0; --r) {
        in.read(reinterpret_cast<char*>(line.data()), sizeof(float) * cols);
        if (!in) throw IoError("read_pfm: truncated raster in " + path);
        for (int c = 0; c < cols; ++c)
            data(r, c) = big_endian ? swap_float(line[c]) : line[c];
    }
    return data;
}

void write_pgm16(const std::string& path,
                 const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_pgm16: cannot open " + path);
    const int rows = static_cast<int>(mask.rows());
    const int cols = static_cast<int>(mask.cols());
    out << "P5\n" << cols << " " << rows << "\n65535\n";
    std::vector<uint16_t> line(cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            uint16_t v = mask(r, c) ? 65535 : 0;
            if constexpr (std::endian::native == std::endian::little) v = swap16(v);
            line[c] = v;
        }
        out.write(reinterpret_cast<const char*>(line.data()), 2 * cols);
    }
    if (!out) throw IoError("write_pgm16: write failed for " + path);
}

Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> read_pgm16(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_pgm16: cannot open " + path);
    if (next_token(in) != "P5") throw IoError("read_pgm16: not a binary PGM: " + path);
    int cols, rows, maxval;
    try {
        cols = std::stoi(next_token(in));
        rows = std::stoi(next_token(in));
        maxval = std::stoi(next_token(in));
    } catch (const std::exception&) {
        throw IoError("read_pgm16: malformed header in " + path);
    }
    if (maxval != 65535) throw IoError("read_pgm16: expected 16-bit maxval in " + path);
    in.get();
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask(rows, cols);
    std::vector<uint16_t> line(cols);
    for (int r = 0; r < rows; ++r) {
        in.read(reinterpret_cast<char*>(line.data()), 2 * cols);
        if (!in) throw IoError("read_pgm16: truncated raster in " + path);
        for (int c = 0; c < cols; ++c) {
            uint16_t v = line[c];
            if constexpr (std::endian::native == std::endian::little) v = swap16(v);
            mask(r, c) = v != 0;
        }
    }
    return mask;
}

// =============================================================================
// Proposals container
// =============================================================================

nlohmann::json proposals_to_json(const ImageProposals& p) {
    nlohmann::json j;
    j["schema"] = "quadshade/proposals/v1";
    j["config"] = p.config;
    j["config_hash"] = fnv_hex(p.config.dump());
    j["image"] = {{"height", p.height}, {"width", p.width}};
    j["light"] = {p.light.lx, p.light.ly, p.light.lz};
    j["noise"] = {{"sigma_i", p.noise.sigma_i}, {"sigma_n0_sq", p.noise.sigma_n0_sq}};
    j["theta"] = {{"J", p.J}};
    j["fit"] = {{"max_iterations", p.fit.max_iterations},
                {"step_tol", p.fit.step_tol},
                {"rel_decrease_tol", p.fit.rel_decrease_tol},
                {"lm_lambda_init", p.fit.lm_lambda_init},
                {"lm_up", p.fit.lm_up},
                {"lm_down", p.fit.lm_down},
                {"lm_min", p.fit.lm_min},
                {"lm_max", p.fit.lm_max},
                {"rescue_sse_per_pixel", p.fit.rescue_sse_per_pixel},
                {"rescue_curvature", p.fit.rescue_curvature}};
    nlohmann::json scales = nlohmann::json::array();
    for (const auto& sd : p.scales) {
        nlohmann::json js;
        js["size"] = sd.patch_size;
        js["row0"] = sd.row0;
        js["col0"] = sd.col0;
        js["rows"] = sd.rows;
        js["cols"] = sd.cols;
        nlohmann::json patches = nlohmann::json::array();
        for (const auto& set : sd.sets) {
            if (!set) continue;
            nlohmann::json jp;
            jp["o"] = {set->row, set->col};
            nlohmann::json th = nlohmann::json::array(), aa = nlohmann::json::array(),
                           sse = nlohmann::json::array(), d = nlohmann::json::array();
            for (const auto& pr : set->proposals) {
                th.push_back(pr.theta);
                aa.push_back({pr.shape.a1, pr.shape.a2, pr.shape.a3, pr.shape.a4, pr.shape.a5});
                sse.push_back(pr.residual_sse);
                d.push_back(pr.cost);
            }
            jp["th"] = std::move(th);
            jp["a"] = std::move(aa);
            jp["sse"] = std::move(sse);
            jp["d"] = std::move(d);
            patches.push_back(std::move(jp));
        }
        js["patches"] = std::move(patches);
        scales.push_back(std::move(js));
    }
    j["scales"] = std::move(scales);
    return j;
}

ImageProposals proposals_from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "quadshade/proposals/v1")
        throw IoError("proposals container: unknown schema");
    ImageProposals p;
    p.height = j.at("image").at("height").get<int>();
    p.width = j.at("image").at("width").get<int>();
    auto l = j.at("light");
    p.light = LightVector(l.at(0).get<double>(), l.at(1).get<double>(), l.at(2).get<double>());
    p.noise.sigma_i = j.at("noise").at("sigma_i").get<double>();
    p.noise.sigma_n0_sq = j.at("noise").at("sigma_n0_sq").get<double>();
    p.J = j.at("theta").at("J").get<int>();
    const auto& jf = j.at("fit");
    p.fit.max_iterations = jf.at("max_iterations").get<int>();
    p.fit.step_tol = jf.at("step_tol").get<double>();
    p.fit.rel_decrease_tol = jf.at("rel_decrease_tol").get<double>();
    p.fit.lm_lambda_init = jf.at("lm_lambda_init").get<double>();
    p.fit.lm_up = jf.at("lm_up").get<double>();
    p.fit.lm_down = jf.at("lm_down").get<double>();
    p.fit.lm_min = jf.at("lm_min").get<double>();
    p.fit.lm_max = jf.at("lm_max").get<double>();
    p.fit.rescue_sse_per_pixel = jf.at("rescue_sse_per_pixel").get<double>();
    p.fit.rescue_curvature = jf.at("rescue_curvature").get<double>();
    p.config = j.value("config", nlohmann::json::object());

    for (const auto& js : j.at("scales")) {
        ScaleDistributions sd;
        sd.patch_size = js.at("size").get<int>();
        sd.row0 = js.at("row0").get<int>();
        sd.col0 = js.at("col0").get<int>();
        sd.rows = js.at("rows").get<int>();
        sd.cols = js.at("cols").get<int>();
        sd.sets.assign(static_cast<size_t>(sd.rows) * sd.cols, std::nullopt);
        for (const auto& jp : js.at("patches")) {
            ProposalSet set;
            set.row = jp.at("o").at(0).get<int>();
            set.col = jp.at("o").at(1).get<int>();
            set.size = sd.patch_size;
            const auto& th = jp.at("th");
            const auto& aa = jp.at("a");
            const auto& sse = jp.at("sse");
            const auto& d = jp.at("d");
            for (size_t k = 0; k < th.size(); ++k) {
                Proposal pr;
                pr.theta = th.at(k).get<double>();
                pr.shape = QuadShape(aa.at(k).at(0).get<double>(), aa.at(k).at(1).get<double>(),
                                     aa.at(k).at(2).get<double>(), aa.at(k).at(3).get<double>(),
                                     aa.at(k).at(4).get<double>());
                pr.residual_sse = sse.at(k).get<double>();
                pr.cost = d.at(k).get<double>();
                set.proposals.push_back(pr);
            }
            size_t idx = static_cast<size_t>(set.row - sd.row0) * sd.cols + (set.col - sd.col0);
            if (idx >= sd.sets.size()) throw IoError("proposals container: patch origin out of range");
            sd.sets[idx] = std::move(set);
        }
        p.scales.push_back(std::move(sd));
    }
    return p;
}

void write_proposals(const std::string& path, const ImageProposals& p) {
    write_text_file(path, proposals_to_json(p).dump());
}

ImageProposals read_proposals(const std::string& path) {
    return proposals_from_json(read_json_file(path));
}

// =============================================================================
// Run configuration
// =============================================================================

nlohmann::json default_run_config() {
    nlohmann::json j;
    j["light"] = {{"elevation_deg", 60.0}, {"azimuth_deg", 0.0}, {"strength", 1.0},
                  {"vector", nullptr}};
    j["noise"] = {{"sigma_i", 0.01}, {"sigma_n0_sq", 1e-6}};
    j["theta"] = {{"J", 21}};
    j["patches"] = {{"sizes", {3, 5, 9, 17}}, {"min_valid_fraction", 0.6}};
    j["fit"] = {{"max_iterations", 200}, {"step_tol", 1e-10}, {"rel_decrease_tol", 1e-12},
                {"lm_lambda_init", 1e-3}, {"lm_up", 10.0}, {"lm_down", 0.1},
                {"lm_min", 1e-12}, {"lm_max", 1e12},
                {"rescue_sse_per_pixel", 1e-10}, {"rescue_curvature", 0.3}};
    j["reconstruction"] = {{"lambda", 0.0}, {"d_phi", 0.0}, {"sigma0", 8.0},
                           {"sigma_factor", 0.5}, {"cg_iters", 100},
                           {"convergence_tol", 1e-6}, {"max_rounds_per_stage", 100},
                           {"use_dummy", true}};
    j["synth"] = {{"size", {128, 128}}, {"amplitude", 8.0}, {"noise_sigma", 0.0},
                  {"beckmann_roughness", nullptr}, {"specular_strength", 0.0},
                  {"saturation", 1.0}};
    j["seeds"] = {{"surface", 1}, {"render", 1}};
    j["workers"] = 0;
    return j;
}

namespace {

void merge_checked(nlohmann::json& base, const nlohmann::json& user, const std::string& prefix) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key()))
            throw ConfigError("unknown config key: " + path);
        if (base[it.key()].is_object() && it.value().is_object())
            merge_checked(base[it.key()], it.value(), path);
        else
            base[it.key()] = it.value();
    }
}

} // namespace

nlohmann::json resolve_run_config(const nlohmann::json& user) {
    nlohmann::json cfg = default_run_config();
    if (!user.is_null()) {
        if (!user.is_object()) throw ConfigError("config root must be an object");
        merge_checked(cfg, user, "");
    }
    return cfg;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json_file(const std::string& path) {
    std::string text = read_text_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw IoError("malformed JSON in " + path + ": " + e.what());
    }
}

} // namespace quadshade
