// quadshade command-line tool: synthetic scene generation, per-patch shape
// inference, global reconstruction, and evaluation.
//
// Exit codes: 0 ok, 2 configuration error, 3 I/O failure, 4 inconsistent
// data (e.g. an all-shadow image), 5 non-convergence (outputs still written).

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "quadshade/evalkit.hpp"
#include "quadshade/io.hpp"
#include "quadshade/proposal.hpp"
#include "quadshade/reconstruct.hpp"
#include "quadshade/synth.hpp"
#include "quadshade/util.hpp"

namespace fs = std::filesystem;
using namespace quadshade;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;
constexpr int kExitNonConvergence = 5;

LightVector light_from_config(const json& cfg) {
    const auto& lc = cfg.at("light");
    if (!lc.at("vector").is_null()) {
        const auto& v = lc.at("vector");
        return LightVector(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
    }
    double elev = lc.at("elevation_deg").get<double>() * M_PI / 180.0;
    double az = lc.at("azimuth_deg").get<double>() * M_PI / 180.0;
    return LightVector::from_angles(elev, az, lc.at("strength").get<double>());
}

std::vector<double> parse_triple(const std::string& s) {
    std::vector<double> vals;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != 3) throw ConfigError("--light expects lx,ly,lz");
    return vals;
}

json load_user_config(const std::string& path) {
    if (path.empty()) return json::object();
    return read_json_file(path);
}

// The emitted configuration carries every numeric constant of the run but no
// execution details, so outputs are bit-identical for any worker count.
json emitted_config(json cfg) {
    cfg.erase("workers");
    return cfg;
}

FitOptions fit_options_from(const json& cfg) {
    const auto& f = cfg.at("fit");
    FitOptions fo;
    fo.max_iterations = f.at("max_iterations").get<int>();
    fo.step_tol = f.at("step_tol").get<double>();
    fo.rel_decrease_tol = f.at("rel_decrease_tol").get<double>();
    fo.lm_lambda_init = f.at("lm_lambda_init").get<double>();
    fo.lm_up = f.at("lm_up").get<double>();
    fo.lm_down = f.at("lm_down").get<double>();
    fo.lm_min = f.at("lm_min").get<double>();
    fo.lm_max = f.at("lm_max").get<double>();
    fo.rescue_sse_per_pixel = f.at("rescue_sse_per_pixel").get<double>();
    fo.rescue_curvature = f.at("rescue_curvature").get<double>();
    return fo;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------
struct SynthArgs {
    std::string out_dir;
    std::string config_path;
    uint64_t seed = 1;
    int size = 128;
    double light_elev = 60.0, light_az = 0.0, light_strength = 1.0;
    double noise = 0.0;
    double beckmann = 0.0; // 0 = disabled
    double spec_strength = 0.0;
    double saturation = 1.0;
    double amplitude = 8.0;
};

int run_synth(const SynthArgs& args, const CLI::App& cmd) {
    if (args.noise < 0) throw ConfigError("--noise must be non-negative");
    if (args.size < 16) throw ConfigError("--size must be at least 16");
    if (args.beckmann < 0) throw ConfigError("--beckmann must be positive when given");
    if (args.amplitude <= 0) throw ConfigError("--amplitude must be positive");

    // explicit flags override the config file; everything else keeps the
    // file's (or default) value
    json cfg = resolve_run_config(load_user_config(args.config_path));
    cfg["seeds"]["surface"] = args.seed;
    cfg["seeds"]["render"] = args.seed + 1;
    cfg["synth"]["size"] = {args.size, args.size};
    if (cmd.count("--amplitude")) cfg["synth"]["amplitude"] = args.amplitude;
    if (cmd.count("--noise")) cfg["synth"]["noise_sigma"] = args.noise;
    if (cmd.count("--beckmann"))
        cfg["synth"]["beckmann_roughness"] = args.beckmann > 0 ? json(args.beckmann) : json(nullptr);
    if (cmd.count("--spec-strength")) cfg["synth"]["specular_strength"] = args.spec_strength;
    if (cmd.count("--saturation")) cfg["synth"]["saturation"] = args.saturation;
    if (cmd.count("--light-elev")) cfg["light"]["elevation_deg"] = args.light_elev;
    if (cmd.count("--light-az")) cfg["light"]["azimuth_deg"] = args.light_az;
    if (cmd.count("--light-strength")) cfg["light"]["strength"] = args.light_strength;

    SurfaceSpec spec;
    spec.seed = args.seed;
    spec.height = spec.width = args.size;
    spec.amplitude = cfg["synth"]["amplitude"].get<double>();
    DepthMap z = random_surface(spec);

    RenderSpec rs;
    rs.light = light_from_config(cfg);
    rs.noise_sigma = cfg["synth"]["noise_sigma"].get<double>();
    if (!cfg["synth"]["beckmann_roughness"].is_null())
        rs.beckmann_roughness = cfg["synth"]["beckmann_roughness"].get<double>();
    rs.specular_strength = cfg["synth"]["specular_strength"].get<double>();
    rs.saturation_level = cfg["synth"]["saturation"].get<double>();
    Scene scene = render_scene(z, rs, args.seed + 1);

    fs::create_directories(args.out_dir);
    fs::path dir(args.out_dir);
    write_pfm((dir / "image.pfm").string(), scene.image);
    write_pfm((dir / "depth_true.pfm").string(), z.z);
    write_pgm16((dir / "mask.pgm").string(), scene.mask);

    json desc;
    desc["schema"] = "quadshade/scene/v1";
    desc["config"] = emitted_config(cfg);
    desc["light"] = {rs.light.lx, rs.light.ly, rs.light.lz};
    desc["saturated_pixels"] = static_cast<long>((scene.mask == false).count());
    write_text_file((dir / "scene.json").string(), desc.dump(2) + "\n");
    write_text_file((dir / "resolved_config.json").string(), emitted_config(cfg).dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------
struct InferArgs {
    std::string image_path, mask_path, out_path, config_path;
    std::string light; // "lx,ly,lz"
    std::string sizes = "3,5,9,17";
    int j = 21;
    double sigma_i = 0.01;
    int workers = 0;
};

int run_infer(const InferArgs& args, const CLI::App& cmd) {
    json cfg = resolve_run_config(load_user_config(args.config_path));
    if (cmd.count("--J")) cfg["theta"]["J"] = args.j;
    if (cmd.count("--sigma-i")) cfg["noise"]["sigma_i"] = args.sigma_i;
    if (!args.light.empty()) cfg["light"]["vector"] = parse_triple(args.light);
    if (cmd.count("--sizes")) {
        std::vector<int> sizes;
        std::stringstream ss(args.sizes);
        std::string tok;
        while (std::getline(ss, tok, ',')) sizes.push_back(std::stoi(tok));
        cfg["patches"]["sizes"] = sizes;
    }

    Eigen::ArrayXXd image = read_pfm(args.image_path);
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
    if (!args.mask_path.empty()) {
        mask = read_pgm16(args.mask_path);
        if (mask.rows() != image.rows() || mask.cols() != image.cols())
            throw DataError("mask and image sizes differ");
    } else {
        mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(image.rows(),
                                                                            image.cols(), true);
    }

    LightVector light = light_from_config(cfg);
    NoiseModel nm{cfg["noise"]["sigma_i"].get<double>(),
                  cfg["noise"]["sigma_n0_sq"].get<double>()};

    InferOptions opts;
    opts.patch_sizes = cfg["patches"]["sizes"].get<std::vector<int>>();
    opts.J = cfg["theta"]["J"].get<int>();
    opts.workers = args.workers;
    opts.min_valid_fraction = cfg["patches"]["min_valid_fraction"].get<double>();
    opts.fit = fit_options_from(cfg);

    for (int s : opts.patch_sizes)
        if (s < 3 || s % 2 == 0 || s > std::min(image.rows(), image.cols()))
            throw ConfigError("--sizes entries must be odd, >= 3 and fit the image");
    if (opts.J < 3) throw ConfigError("--J must be at least 3");
    if (nm.sigma_i < 0) throw ConfigError("--sigma-i must be non-negative");

    auto scales = infer_image(image, mask, light, nm, opts);

    size_t present = 0;
    for (const auto& sd : scales)
        for (const auto& s : sd.sets) present += s.has_value();
    if (present == 0) throw DataError("no patch produced proposals: image/light inconsistent");

    ImageProposals out;
    out.height = static_cast<int>(image.rows());
    out.width = static_cast<int>(image.cols());
    out.light = light;
    out.noise = nm;
    out.J = opts.J;
    out.fit = opts.fit;
    out.scales = std::move(scales);
    out.config = emitted_config(cfg);
    write_proposals(args.out_path, out);

    fs::path dir = fs::path(args.out_path).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    write_text_file((dir / "resolved_config.json").string(), emitted_config(cfg).dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------
struct ReconArgs {
    std::string proposals_path, out_dir, config_path;
    double lambda = 0.0, d_phi = 0.0;
    double sigma0 = 8.0, sigma_factor = 0.5;
    int cg_iters = 100;
    bool no_dummy = false;
    int workers = 0;
};

int run_reconstruct(const ReconArgs& args, const CLI::App& cmd) {
    json cfg = resolve_run_config(load_user_config(args.config_path));
    if (cmd.count("--lambda")) cfg["reconstruction"]["lambda"] = args.lambda;
    if (cmd.count("--d-phi")) cfg["reconstruction"]["d_phi"] = args.d_phi;
    if (cmd.count("--sigma0")) cfg["reconstruction"]["sigma0"] = args.sigma0;
    if (cmd.count("--sigma-factor")) cfg["reconstruction"]["sigma_factor"] = args.sigma_factor;
    if (cmd.count("--cg-iters")) cfg["reconstruction"]["cg_iters"] = args.cg_iters;
    if (args.no_dummy) cfg["reconstruction"]["use_dummy"] = false;

    if (cfg["reconstruction"]["sigma0"].get<double>() <= 1.0)
        throw ConfigError("--sigma0 must exceed 1");
    double sf = cfg["reconstruction"]["sigma_factor"].get<double>();
    if (sf <= 0.0 || sf >= 1.0) throw ConfigError("--sigma-factor must be in (0, 1)");
    if (cfg["reconstruction"]["cg_iters"].get<int>() < 1)
        throw ConfigError("--cg-iters must be positive");

    ImageProposals props = read_proposals(args.proposals_path);

    ReconConfig rc;
    rc.lambda = cfg["reconstruction"]["lambda"].get<double>();
    rc.d_phi = cfg["reconstruction"]["d_phi"].get<double>();
    rc.sigma0 = cfg["reconstruction"]["sigma0"].get<double>();
    rc.sigma_factor = cfg["reconstruction"]["sigma_factor"].get<double>();
    rc.cg_iters = cfg["reconstruction"]["cg_iters"].get<int>();
    rc.use_dummy = cfg["reconstruction"]["use_dummy"].get<bool>();
    rc.workers = args.workers;
    rc.convergence_tol = cfg["reconstruction"]["convergence_tol"].get<double>();
    rc.max_rounds_per_stage = cfg["reconstruction"]["max_rounds_per_stage"].get<int>();

    ReconResult res = reconstruct(props.scales, props.height, props.width, rc);

    fs::create_directories(args.out_dir);
    fs::path dir(args.out_dir);
    write_pfm((dir / "depth.pfm").string(), res.z.z);

    json labels;
    labels["schema"] = "quadshade/labels/v1";
    json lscales = json::array();
    for (size_t s = 0; s < props.scales.size(); ++s) {
        const auto& sd = props.scales[s];
        json js;
        js["size"] = sd.patch_size;
        js["rows"] = sd.rows;
        js["cols"] = sd.cols;
        js["row0"] = sd.row0;
        js["col0"] = sd.col0;
        js["labels"] = res.labels.per_scale[s];
        long dummy = 0, chosen = 0, absent = 0;
        for (size_t i = 0; i < sd.sets.size(); ++i) {
            int lab = res.labels.per_scale[s][i];
            if (lab < 0) ++absent;
            else if (sd.sets[i] && lab >= static_cast<int>(sd.sets[i]->proposals.size())) ++dummy;
            else ++chosen;
        }
        js["histogram"] = {{"proposal", chosen}, {"dummy", dummy}, {"absent", absent}};
        lscales.push_back(std::move(js));
    }
    labels["scales"] = std::move(lscales);
    write_text_file((dir / "labels.json").string(), labels.dump() + "\n");

    json report;
    report["schema"] = "quadshade/report/v1";
    report["lambda"] = res.lambda;
    report["d_phi"] = res.d_phi;
    report["config"] = emitted_config(cfg);
    report["cg"] = {{"converged", res.cg_converged}, {"grad_decreased", res.cg_grad_decreased}};
    report["rounds_per_stage"] = res.rounds_per_stage;
    json trace = json::array();
    for (const auto& t : res.trace)
        trace.push_back({{"stage", t.stage},
                         {"round", t.round},
                         {"sigma", t.sigma},
                         {"lambda_eff", t.lambda_eff},
                         {"cost_labels", t.cost_labels},
                         {"cost_depth", t.cost_depth}});
    report["trace"] = std::move(trace);
    write_text_file((dir / "report.json").string(), report.dump(2) + "\n");
    write_text_file((dir / "resolved_config.json").string(), emitted_config(cfg).dump(2) + "\n");

    if (!res.cg_converged && !res.cg_grad_decreased) return kExitNonConvergence;
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------
struct EvalArgs {
    std::string est_path, truth_path, out_path;
    std::string errors_out; // optional per-pixel error PFM
    std::string proposals;  // optional: emit an N-best CSV against the truth
    std::string csv_out;
};

int run_eval(const EvalArgs& args) {
    Eigen::ArrayXXd est = read_pfm(args.est_path);
    Eigen::ArrayXXd truth = read_pfm(args.truth_path);
    ErrorReport rep = surface_report(DepthMap(est), DepthMap(truth));

    json out;
    out["schema"] = "quadshade/eval/v1";
    out["q25"] = rep.q25;
    out["q50"] = rep.q50;
    out["q75"] = rep.q75;
    out["height"] = est.rows();
    out["width"] = est.cols();
    out["est"] = fs::path(args.est_path).filename().string();
    out["truth"] = fs::path(args.truth_path).filename().string();
    write_text_file(args.out_path, out.dump(2) + "\n");

    if (!args.errors_out.empty()) write_pfm(args.errors_out, rep.errors);

    if (!args.csv_out.empty()) {
        if (args.proposals.empty()) throw ConfigError("--csv requires --proposals");
        ImageProposals props = read_proposals(args.proposals);
        NormalField nf = normals_from_depth(DepthMap(truth));
        std::vector<std::pair<std::string, NBestCurve>> curves;
        for (const auto& sd : props.scales)
            curves.emplace_back("size" + std::to_string(sd.patch_size),
                                n_best_curve(sd, nf, props.J));
        write_text_file(args.csv_out, n_best_csv(curves));
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"local shape from shading with quadratic patches"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "generate a synthetic scene");
    synth->add_option("--seed", sa.seed, "surface seed");
    synth->add_option("--size", sa.size, "square image size")->capture_default_str();
    synth->add_option("--light-elev", sa.light_elev, "light elevation, degrees");
    synth->add_option("--light-az", sa.light_az, "light azimuth, degrees");
    synth->add_option("--light-strength", sa.light_strength, "albedo x light strength");
    synth->add_option("--noise", sa.noise, "additive Gaussian noise std");
    synth->add_option("--beckmann", sa.beckmann, "Beckmann roughness (enables speculars)");
    synth->add_option("--spec-strength", sa.spec_strength, "specular strength");
    synth->add_option("--saturation", sa.saturation, "saturation level");
    synth->add_option("--amplitude", sa.amplitude, "control-grid depth amplitude");
    synth->add_option("--config", sa.config_path, "JSON config file");
    synth->add_option("--out-dir", sa.out_dir, "output directory")->required();

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "per-patch shape distributions");
    infer->add_option("--image", ia.image_path, "input PFM image")->required();
    infer->add_option("--mask", ia.mask_path, "input PGM mask (16-bit)");
    infer->add_option("--light", ia.light, "light as lx,ly,lz");
    infer->add_option("--sizes", ia.sizes, "comma-separated odd patch sizes")
        ->capture_default_str();
    infer->add_option("--J", ia.j, "theta samples per patch")->capture_default_str();
    infer->add_option("--sigma-i", ia.sigma_i, "intensity noise std")->capture_default_str();
    infer->add_option("--workers", ia.workers, "worker threads (0 = auto)");
    infer->add_option("--config", ia.config_path, "JSON config file");
    infer->add_option("--out", ia.out_path, "output proposals container")->required();

    ReconArgs ra;
    auto* recon = app.add_subcommand("reconstruct", "depth map from proposals");
    recon->add_option("--proposals", ra.proposals_path, "proposals container")->required();
    recon->add_option("--lambda", ra.lambda, "likelihood weight (0 = auto)");
    recon->add_option("--d-phi", ra.d_phi, "dummy cost (0 = auto)");
    recon->add_option("--sigma0", ra.sigma0, "initial smoothing std")->capture_default_str();
    recon->add_option("--sigma-factor", ra.sigma_factor, "smoothing decay")
        ->capture_default_str();
    recon->add_option("--cg-iters", ra.cg_iters, "final CG iterations")->capture_default_str();
    recon->add_flag("--no-dummy", ra.no_dummy, "disable the dummy label stage");
    recon->add_option("--workers", ra.workers, "worker threads (0 = auto)");
    recon->add_option("--config", ra.config_path, "JSON config file");
    recon->add_option("--out-dir", ra.out_dir, "output directory")->required();

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "angular-error report");
    eval->add_option("--est", ea.est_path, "estimated depth PFM")->required();
    eval->add_option("--truth", ea.truth_path, "ground-truth depth PFM")->required();
    eval->add_option("--out", ea.out_path, "output report JSON")->required();
    eval->add_option("--errors-out", ea.errors_out, "optional per-pixel error PFM");
    eval->add_option("--proposals", ea.proposals, "proposals container for the N-best CSV");
    eval->add_option("--csv", ea.csv_out, "optional N-best CSV output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*synth) return run_synth(sa, *synth);
        if (*infer) return run_infer(ia, *infer);
        if (*recon) return run_reconstruct(ra, *recon);
        if (*eval) return run_eval(ea);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InvalidArgument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}
